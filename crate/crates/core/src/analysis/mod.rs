//! Safety and liveness structure of an FBAS.
//!
//! Everything is computed over the active nodes only. Inactive nodes are
//! treated as crashed: they never help satisfy a slice, and thresholds stay
//! as configured. Splitting sets use Byzantine deletion instead, where each
//! deleted member lowers the threshold of its level.
//!
//! Results are exact. A search that exceeds its budget fails with
//! [`AnalysisError::Timeout`] rather than returning a partial family.

mod lift;
mod oracle;
mod search;

use std::cell::OnceCell;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Fbas, NodeId, QuorumSet};
use crate::nodeset::NodeSet;

pub use lift::GroupFamily;
pub use oracle::oracle_enumerate;
use search::{Budget, Search};

/// Default number of search branches visited before giving up.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("analysis exceeded its budget of {budget} search steps")]
    Timeout { budget: u64 },
    #[error("oracle enumeration supports at most {max} nodes, got {got}")]
    UniverseTooLarge { max: usize, got: usize },
    #[error("grouping does not assign node {0}")]
    GroupingIncomplete(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Quorums,
    Blocking,
    Splitting,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::Quorums => "quorums",
            FamilyKind::Blocking => "blocking",
            FamilyKind::Splitting => "splitting",
        })
    }
}

/// An antichain of node sets in canonical order (cardinality, then
/// lexicographic by index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalSetFamily {
    pub kind: FamilyKind,
    pub sets: Vec<NodeSet>,
    pub fbas_fingerprint: String,
    /// Set for a blocking family of an FBAS without any quorum: the empty set
    /// is then blocking, which the family reports through this flag instead of
    /// listing `{}`.
    pub vacuous: bool,
}

impl MinimalSetFamily {
    pub fn stats(&self) -> CardinalityStats {
        cardinality_stats(&self.sets)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn contains(&self, set: &NodeSet) -> bool {
        self.sets.binary_search(set).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalityStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
    pub count: usize,
}

impl CardinalityStats {
    /// `min/mean/max/count` with the mean at one decimal.
    pub fn summary(&self) -> String {
        format!("{}/{:.1}/{}/{}", self.min, self.mean, self.max, self.count)
    }
}

pub fn cardinality_stats(sets: &[NodeSet]) -> CardinalityStats {
    if sets.is_empty() {
        return CardinalityStats {
            min: 0,
            mean: 0.0,
            max: 0,
            count: 0,
        };
    }
    let sizes: Vec<usize> = sets.iter().map(NodeSet::count).collect();
    CardinalityStats {
        min: *sizes.iter().min().unwrap(),
        mean: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
        max: *sizes.iter().max().unwrap(),
        count: sizes.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuorumIntersection {
    pub holds: bool,
    /// No quorum exists at all; `holds` is then true vacuously.
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetricTopTier {
    pub members: NodeSet,
    /// Shared quorum set after self-inclusion normalization, canonically ordered.
    pub common_qset: QuorumSet,
}

/// Analysis entry point holding the search budget and cached minimal quorums.
pub struct Analyzer<'a> {
    fbas: &'a Fbas,
    budget: Budget,
    minimal_quorums: OnceCell<Vec<NodeSet>>,
}

impl<'a> Analyzer<'a> {
    pub fn new(fbas: &'a Fbas) -> Self {
        Self::with_budget(fbas, DEFAULT_BUDGET)
    }

    pub fn with_budget(fbas: &'a Fbas, budget: u64) -> Self {
        Analyzer {
            fbas,
            budget: Budget::new(budget),
            minimal_quorums: OnceCell::new(),
        }
    }

    pub fn fbas(&self) -> &'a Fbas {
        self.fbas
    }

    /// Search steps consumed so far.
    pub fn steps_used(&self) -> u64 {
        self.budget.used()
    }

    fn search(&self) -> Search<'_> {
        Search {
            fbas: self.fbas,
            budget: &self.budget,
        }
    }

    fn family(&self, kind: FamilyKind, sets: Vec<NodeSet>, vacuous: bool) -> MinimalSetFamily {
        MinimalSetFamily {
            kind,
            sets,
            fbas_fingerprint: self.fbas.fingerprint(),
            vacuous,
        }
    }

    fn quorum_list(&self) -> Result<&[NodeSet], AnalysisError> {
        if let Some(q) = self.minimal_quorums.get() {
            return Ok(q);
        }
        let empty = self.fbas.empty_set();
        let found = self.search().minimal_quorums(&self.fbas.active_set(), &empty)?;
        Ok(self.minimal_quorums.get_or_init(|| found))
    }

    pub fn is_quorum(&self, candidate: &NodeSet) -> bool {
        is_quorum(self.fbas, candidate)
    }

    /// Whether `set` contains some quorum.
    pub fn contains_quorum(&self, set: &NodeSet) -> bool {
        let within = set.intersection(&self.fbas.active_set());
        !self.search().max_quorum(&within, &self.fbas.empty_set()).is_empty()
    }

    /// Whether the active nodes outside `set` contain no quorum.
    pub fn is_blocking(&self, set: &NodeSet) -> bool {
        let rest = self.fbas.active_set().difference(set);
        self.search().max_quorum(&rest, &self.fbas.empty_set()).is_empty()
    }

    /// Whether Byzantine deletion of `set` leaves two disjoint quorums.
    /// Inactive members of `set` are ignored.
    pub fn is_splitting(&self, set: &NodeSet) -> Result<bool, AnalysisError> {
        let active = self.fbas.active_set();
        self.search().splits(&active, &set.intersection(&active))
    }

    /// Whether some subset of `set` is splitting: a coalition controlling
    /// `set` can split the FBAS, since Byzantine nodes may also behave
    /// correctly.
    pub fn contains_splitting_set(&self, set: &NodeSet) -> Result<bool, AnalysisError> {
        let active = self.fbas.active_set();
        Ok(!self.search().minimal_splitting_sets(&active, set, true)?.is_empty())
    }

    /// Literal reading of a splitting set: `set` contains the intersection of
    /// two distinct minimal quorums. Diagnostic only; the analysis proper uses
    /// [`Analyzer::is_splitting`].
    pub fn contains_quorum_intersection(&self, set: &NodeSet) -> Result<bool, AnalysisError> {
        let quorums = self.quorum_list()?;
        for (i, a) in quorums.iter().enumerate() {
            for b in &quorums[i + 1..] {
                if a.intersection(b).is_subset(set) {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    pub fn minimal_quorums(&self) -> Result<MinimalSetFamily, AnalysisError> {
        let sets = self.quorum_list()?.to_vec();
        Ok(self.family(FamilyKind::Quorums, sets, false))
    }

    pub fn quorum_intersection(&self) -> Result<QuorumIntersection, AnalysisError> {
        let quorums = self.quorum_list()?;
        let holds = quorums
            .iter()
            .enumerate()
            .all(|(i, a)| quorums[i + 1..].iter().all(|b| a.intersects(b)));
        Ok(QuorumIntersection {
            holds,
            vacuous: quorums.is_empty(),
        })
    }

    /// Minimal transversals of the minimal quorums.
    pub fn minimal_blocking_sets(&self) -> Result<MinimalSetFamily, AnalysisError> {
        let quorums = self.quorum_list()?;
        if quorums.is_empty() {
            return Ok(self.family(FamilyKind::Blocking, vec![], true));
        }
        let sets = self.search().minimal_transversals(quorums)?;
        Ok(self.family(FamilyKind::Blocking, sets, false))
    }

    pub fn minimal_splitting_sets(&self) -> Result<MinimalSetFamily, AnalysisError> {
        let active = self.fbas.active_set();
        let sets = self.search().minimal_splitting_sets(&active, &active, false)?;
        Ok(self.family(FamilyKind::Splitting, sets, false))
    }

    pub fn minimal_family(&self, kind: FamilyKind) -> Result<MinimalSetFamily, AnalysisError> {
        match kind {
            FamilyKind::Quorums => self.minimal_quorums(),
            FamilyKind::Blocking => self.minimal_blocking_sets(),
            FamilyKind::Splitting => self.minimal_splitting_sets(),
        }
    }

    /// Union of all minimal quorums.
    pub fn top_tier(&self) -> Result<NodeSet, AnalysisError> {
        let mut tier = self.fbas.empty_set();
        for q in self.quorum_list()? {
            tier.union_with(q);
        }
        Ok(tier)
    }

    /// Returns the shared quorum set if every top-tier node's quorum set (over
    /// active members, normalized to include its owner) is the same.
    pub fn symmetric_top_tier(&self) -> Result<Option<SymmetricTopTier>, AnalysisError> {
        let members = self.top_tier()?;
        let active = self.fbas.active_set();
        let keep = |v: &NodeId| self.fbas.index_of(v).is_some_and(|i| active.contains(i));
        let mut common: Option<QuorumSet> = None;
        for i in members.iter() {
            let owner = self.fbas.node(i);
            let normalized = self
                .fbas
                .quorum_set(i)
                .remove_members(&keep, false)
                .normalize_self_inclusion(owner)
                .canonical();
            match &common {
                None => common = Some(normalized),
                Some(c) if *c == normalized => {}
                Some(_) => return Ok(None),
            }
        }
        Ok(common.map(|common_qset| SymmetricTopTier { members, common_qset }))
    }
}

/// True iff `candidate` is a non-empty set of active nodes each of whose
/// quorum sets is satisfied by `candidate`.
pub fn is_quorum(fbas: &Fbas, candidate: &NodeSet) -> bool {
    !candidate.is_empty()
        && candidate
            .iter()
            .all(|v| fbas.is_active(v) && fbas.node_satisfied(v, candidate))
}

/// Removes `deleted` and lowers thresholds once per deleted member at each
/// level (floor 0). Inactive flags of the survivors are kept.
pub fn delete_byzantine(fbas: &Fbas, deleted: &NodeSet) -> Fbas {
    fbas.delete_nodes(deleted)
}

pub fn find_minimal_quorums(fbas: &Fbas) -> Result<MinimalSetFamily, AnalysisError> {
    Analyzer::new(fbas).minimal_quorums()
}

pub fn find_minimal_blocking_sets(fbas: &Fbas) -> Result<MinimalSetFamily, AnalysisError> {
    Analyzer::new(fbas).minimal_blocking_sets()
}

pub fn find_minimal_splitting_sets(fbas: &Fbas) -> Result<MinimalSetFamily, AnalysisError> {
    Analyzer::new(fbas).minimal_splitting_sets()
}

pub fn has_quorum_intersection(fbas: &Fbas) -> Result<QuorumIntersection, AnalysisError> {
    Analyzer::new(fbas).quorum_intersection()
}

pub fn top_tier(fbas: &Fbas) -> Result<NodeSet, AnalysisError> {
    Analyzer::new(fbas).top_tier()
}

pub fn detect_symmetric_top_tier(fbas: &Fbas) -> Result<Option<SymmetricTopTier>, AnalysisError> {
    Analyzer::new(fbas).symmetric_top_tier()
}

#[cfg(test)]
mod tests;
