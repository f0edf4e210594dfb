//! Benchmark inputs for the analysis routines.

use fbascope::fixtures::symmetric_with_self;
use fbascope::model::{Fbas, NodeEntry, QuorumSet};

pub use fbascope::fixtures::mobilecoin_fbas;

/// Symmetric `threshold`-of-`n` FBAS with self-inclusion.
pub fn symmetric(n: usize, threshold: u32) -> Fbas {
    symmetric_with_self(n, threshold)
}

/// Two symmetric organisations-of-validators layers: `orgs` inner sets of
/// three validators (2-of-3 each), every validator requiring a majority of
/// organisations. Mirrors the shape of org-structured networks.
pub fn org_structured(orgs: usize) -> Fbas {
    let key = |o: usize, v: usize| format!("o{o}v{v}");
    let inner: Vec<QuorumSet> = (0..orgs)
        .map(|o| QuorumSet::flat(2, (0..3).map(|v| key(o, v))))
        .collect();
    let qset = QuorumSet::new((orgs / 2 + 1) as u32, vec![], inner);
    Fbas::new(
        (0..orgs)
            .flat_map(|o| (0..3).map(move |v| (o, v)))
            .map(|(o, v)| NodeEntry::new(key(o, v), qset.clone(), true)),
    )
    .expect("valid benchmark FBAS")
}
