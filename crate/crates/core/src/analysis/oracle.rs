//! Exhaustive reference enumeration for small FBASs.
//!
//! Only [`is_quorum`] and [`delete_byzantine`] are used, so results are
//! independent of the branch-and-bound searches they are compared against.

use crate::analysis::{delete_byzantine, is_quorum, AnalysisError, FamilyKind, MinimalSetFamily};
use crate::model::Fbas;
use crate::nodeset::NodeSet;

pub const ORACLE_MAX_NODES: usize = 20;

fn to_set(n: usize, mask: u32) -> NodeSet {
    NodeSet::from_indices(n, (0..n).filter(|i| mask & (1 << i) != 0))
}

fn all_quorums(fbas: &Fbas) -> Vec<u32> {
    let n = fbas.len();
    (1u32..(1u32 << n))
        .filter(|&mask| is_quorum(fbas, &to_set(n, mask)))
        .collect()
}

/// Keeps the inclusion-minimal masks.
fn minimal(mut masks: Vec<u32>) -> Vec<u32> {
    masks.sort_by_key(|m| m.count_ones());
    let mut kept: Vec<u32> = Vec::new();
    for m in masks {
        if !kept.iter().any(|&k| k & !m == 0) {
            kept.push(m);
        }
    }
    kept
}

/// Enumerates all `2^|V|` subsets to produce the requested minimal family.
pub fn oracle_enumerate(fbas: &Fbas, kind: FamilyKind) -> Result<MinimalSetFamily, AnalysisError> {
    let n = fbas.len();
    if n > ORACLE_MAX_NODES {
        return Err(AnalysisError::UniverseTooLarge {
            max: ORACLE_MAX_NODES,
            got: n,
        });
    }
    let active_mask: u32 = (0..n).filter(|&i| fbas.is_active(i)).fold(0, |m, i| m | (1 << i));
    let subsets_of_active = || (0u32..(1u32 << n)).filter(move |s| s & !active_mask == 0);
    let quorums = all_quorums(fbas);

    let mut vacuous = false;
    let masks = match kind {
        FamilyKind::Quorums => minimal(quorums),
        FamilyKind::Blocking => {
            if quorums.is_empty() {
                vacuous = true;
                vec![]
            } else {
                minimal(
                    subsets_of_active()
                        .filter(|&s| quorums.iter().all(|&q| q & s != 0))
                        .collect(),
                )
            }
        }
        FamilyKind::Splitting => minimal(
            subsets_of_active()
                .filter(|&s| {
                    let remaining = delete_byzantine(fbas, &to_set(n, s));
                    let qs = all_quorums(&remaining);
                    qs.iter()
                        .enumerate()
                        .any(|(i, &a)| qs[i + 1..].iter().any(|&b| a & b == 0))
                })
                .collect(),
        ),
    };
    let mut sets: Vec<NodeSet> = masks.into_iter().map(|m| to_set(n, m)).collect();
    sets.sort();
    Ok(MinimalSetFamily {
        kind,
        sets,
        fbas_fingerprint: fbas.fingerprint(),
        vacuous,
    })
}
