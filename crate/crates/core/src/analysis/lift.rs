//! Minimal families over groups of nodes (organisations, ISPs, countries).
//!
//! A set of groups qualifies when the union of its nodes contains a member of
//! the family, re-evaluated on the node-level FBAS: the union contains a
//! quorum, is blocking, or contains a splitting set. Groups are not
//! contracted into synthetic nodes.
//!
//! Splitting needs the containment form because Byzantine deletion is not
//! monotone: deleting every node of a large group may leave too few
//! survivors to form two quorums, while the group's operator can still split
//! the system by deleting only some of them.

use std::collections::BTreeMap;

use crate::analysis::{cardinality_stats, AnalysisError, Analyzer, CardinalityStats, FamilyKind, MinimalSetFamily};
use crate::model::{Grouping, GroupingKind};
use crate::nodeset::NodeSet;

/// A minimal family whose sets index into `groups`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupFamily {
    pub kind: FamilyKind,
    pub grouping: GroupingKind,
    /// Sorted group identifiers; set bit `i` stands for `groups[i]`.
    pub groups: Vec<String>,
    pub sets: Vec<NodeSet>,
    pub fbas_fingerprint: String,
    pub vacuous: bool,
}

impl GroupFamily {
    pub fn stats(&self) -> CardinalityStats {
        cardinality_stats(&self.sets)
    }

    pub fn names(&self, set: &NodeSet) -> Vec<&str> {
        set.iter().map(|i| self.groups[i].as_str()).collect()
    }

    /// The family's sets as sorted lists of group names.
    pub fn named_sets(&self) -> Vec<Vec<&str>> {
        self.sets.iter().map(|s| self.names(s)).collect()
    }

    pub fn contains_names(&self, names: &[&str]) -> bool {
        let mut wanted: Vec<&str> = names.to_vec();
        wanted.sort_unstable();
        self.named_sets().contains(&wanted)
    }
}

impl Analyzer<'_> {
    pub fn lift_to_groups(&self, family: &MinimalSetFamily, grouping: &Grouping) -> Result<GroupFamily, AnalysisError> {
        self.lift_kind(family.kind, grouping)
    }

    pub fn lift_kind(&self, kind: FamilyKind, grouping: &Grouping) -> Result<GroupFamily, AnalysisError> {
        let fbas = self.fbas();
        let mut members: BTreeMap<&str, NodeSet> = BTreeMap::new();
        for (i, node) in fbas.nodes().iter().enumerate() {
            let group = grouping
                .group_of(node)
                .ok_or_else(|| AnalysisError::GroupingIncomplete(node.clone()))?;
            members.entry(group).or_insert_with(|| fbas.empty_set()).insert(i);
        }
        let groups: Vec<String> = members.keys().map(|g| g.to_string()).collect();
        let nodes: Vec<NodeSet> = members.into_values().collect();
        let m = groups.len();

        let qualifies = |selection: &NodeSet| -> Result<bool, AnalysisError> {
            let mut union = fbas.empty_set();
            for g in selection.iter() {
                union.union_with(&nodes[g]);
            }
            Ok(match kind {
                FamilyKind::Quorums => self.contains_quorum(&union),
                FamilyKind::Blocking => self.is_blocking(&union),
                FamilyKind::Splitting => self.contains_splitting_set(&union)?,
            })
        };

        let mut found: Vec<NodeSet> = Vec::new();
        let mut vacuous = false;
        let empty = NodeSet::empty(m);
        if qualifies(&empty)? {
            match kind {
                FamilyKind::Blocking => vacuous = true,
                _ => found.push(empty),
            }
        } else {
            for size in 1..=m {
                let mut fresh = Vec::new();
                let mut current = NodeSet::empty(m);
                self.group_combinations(m, 0, size, &mut current, &found, &mut fresh, &qualifies)?;
                found.extend(fresh);
            }
        }
        found.sort();
        Ok(GroupFamily {
            kind,
            grouping: grouping.kind,
            groups,
            sets: found,
            fbas_fingerprint: fbas.fingerprint(),
            vacuous,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn group_combinations(
        &self,
        m: usize,
        start: usize,
        remaining: usize,
        current: &mut NodeSet,
        found: &[NodeSet],
        fresh: &mut Vec<NodeSet>,
        qualifies: &dyn Fn(&NodeSet) -> Result<bool, AnalysisError>,
    ) -> Result<(), AnalysisError> {
        self.search().budget.tick()?;
        if found.iter().any(|f| f.is_subset(current)) {
            return Ok(());
        }
        if remaining == 0 {
            if qualifies(current)? {
                fresh.push(current.clone());
            }
            return Ok(());
        }
        for g in start..=m - remaining {
            current.insert(g);
            self.group_combinations(m, g + 1, remaining - 1, current, found, fresh, qualifies)?;
            current.remove(g);
        }
        Ok(())
    }
}
