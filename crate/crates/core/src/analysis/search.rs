//! Exact searches over node subsets.
//!
//! All routines treat a `free` node set as agreeing unconditionally without
//! belonging to any candidate. With `free = S` this is exactly the FBAS after
//! Byzantine deletion of `S`: a removed member lowering its level's threshold
//! by one is the same as counting it as satisfied.

use std::cell::Cell;
use std::collections::BTreeSet;

use crate::analysis::AnalysisError;
use crate::model::Fbas;
use crate::nodeset::NodeSet;

pub(crate) struct Budget {
    limit: u64,
    used: Cell<u64>,
}

impl Budget {
    pub(crate) fn new(limit: u64) -> Self {
        Budget {
            limit,
            used: Cell::new(0),
        }
    }

    pub(crate) fn tick(&self) -> Result<(), AnalysisError> {
        let used = self.used.get() + 1;
        self.used.set(used);
        if used > self.limit {
            return Err(AnalysisError::Timeout { budget: self.limit });
        }
        Ok(())
    }

    pub(crate) fn used(&self) -> u64 {
        self.used.get()
    }
}

pub(crate) struct Search<'a> {
    pub fbas: &'a Fbas,
    pub budget: &'a Budget,
}

impl<'a> Search<'a> {
    /// Greatest subset of `within` in which every member is satisfied by the
    /// subset plus `free`. Empty when `within` contains no quorum.
    pub fn max_quorum(&self, within: &NodeSet, free: &NodeSet) -> NodeSet {
        let mut current = within.clone();
        loop {
            let agreeing = current.union(free);
            let unsatisfied: Vec<usize> = current
                .iter()
                .filter(|&v| !self.fbas.node_satisfied(v, &agreeing))
                .collect();
            if unsatisfied.is_empty() {
                return current;
            }
            for v in unsatisfied {
                current.remove(v);
            }
        }
    }

    pub fn is_quorum(&self, candidate: &NodeSet, free: &NodeSet) -> bool {
        if candidate.is_empty() {
            return false;
        }
        let agreeing = candidate.union(free);
        candidate.iter().all(|v| self.fbas.node_satisfied(v, &agreeing))
    }

    /// Reduces a quorum to a minimal quorum contained in it.
    fn shrink(&self, quorum: &NodeSet, free: &NodeSet) -> NodeSet {
        let mut current = quorum.clone();
        for v in quorum.iter() {
            if !current.contains(v) {
                continue;
            }
            let mut without = current.clone();
            without.remove(v);
            let inner = self.max_quorum(&without, free);
            if !inner.is_empty() {
                current = inner;
            }
        }
        current
    }

    /// All inclusion-minimal quorums contained in `universe`, in canonical order.
    pub fn minimal_quorums(&self, universe: &NodeSet, free: &NodeSet) -> Result<Vec<NodeSet>, AnalysisError> {
        let available = self.max_quorum(universe, free);
        if available.is_empty() {
            return Ok(vec![]);
        }
        let mut found = BTreeSet::new();
        let selection = NodeSet::empty(self.fbas.len());
        self.branch(selection, available, free, &mut found)?;
        Ok(found.into_iter().collect())
    }

    // Invariant: `selection` is contained in `available`, and `available` is a
    // non-empty max quorum. Every minimal quorum Q with selection ⊆ Q ⊆
    // available is reached by including Q's nodes and excluding the rest.
    fn branch(
        &self,
        selection: NodeSet,
        available: NodeSet,
        free: &NodeSet,
        found: &mut BTreeSet<NodeSet>,
    ) -> Result<(), AnalysisError> {
        self.budget.tick()?;
        if self.is_quorum(&selection, free) {
            found.insert(self.shrink(&selection, free));
            return Ok(());
        }
        let Some(next) = self.pick_next(&selection, &available, free) else {
            return Ok(());
        };

        let mut with = selection.clone();
        with.insert(next);
        self.branch(with, available.clone(), free, found)?;

        let mut reduced = available;
        reduced.remove(next);
        let reduced = self.max_quorum(&reduced, free);
        if !reduced.is_empty() && selection.is_subset(&reduced) {
            self.branch(selection, reduced, free, found)?;
        }
        Ok(())
    }

    /// Prefers an undecided node from the slice of an unsatisfied selected
    /// node; falls back to the lowest undecided index.
    fn pick_next(&self, selection: &NodeSet, available: &NodeSet, free: &NodeSet) -> Option<usize> {
        let undecided = available.difference(selection);
        let agreeing = selection.union(free);
        let mut members = Vec::new();
        for v in selection.iter() {
            if !self.fbas.node_satisfied(v, &agreeing) {
                members.clear();
                self.fbas.slice_members(v, &mut members);
                if let Some(&u) = members.iter().filter(|&&u| undecided.contains(u)).min() {
                    return Some(u);
                }
            }
        }
        undecided.first()
    }

    /// Minimal hitting sets of `family` (Berge's incremental algorithm).
    pub fn minimal_transversals(&self, family: &[NodeSet]) -> Result<Vec<NodeSet>, AnalysisError> {
        let n = self.fbas.len();
        let mut ordered: Vec<&NodeSet> = family.iter().collect();
        ordered.sort();
        let mut transversals = vec![NodeSet::empty(n)];
        for edge in ordered {
            let mut next = Vec::with_capacity(transversals.len());
            let mut extended = Vec::new();
            for t in transversals {
                if t.intersects(edge) {
                    next.push(t);
                } else {
                    for v in edge.iter() {
                        self.budget.tick()?;
                        let mut c = t.clone();
                        c.insert(v);
                        extended.push(c);
                    }
                }
            }
            // Sets that already hit the edge stay minimal among themselves; an
            // extension survives only if it contains no other candidate.
            extended.sort();
            extended.dedup();
            let mut kept: Vec<NodeSet> = Vec::with_capacity(extended.len());
            for c in extended {
                if next.iter().chain(kept.iter()).any(|k| k.is_subset(&c)) {
                    continue;
                }
                kept.push(c);
            }
            next.extend(kept);
            transversals = next;
        }
        transversals.sort();
        Ok(transversals)
    }

    /// Whether deleting `deleted` (Byzantine) from the active nodes leaves two
    /// disjoint quorums.
    pub fn splits(&self, active: &NodeSet, deleted: &NodeSet) -> Result<bool, AnalysisError> {
        let universe = active.difference(deleted);
        for m in self.minimal_quorums(&universe, deleted)? {
            let rest = universe.difference(&m);
            if !self.max_quorum(&rest, deleted).is_empty() {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Inclusion-minimal subsets of `candidates` (a subset of `active`) for
    /// which `splits` holds, found in order of increasing cardinality with
    /// superset pruning. With `first_only` the search stops at the first hit.
    pub fn minimal_splitting_sets(
        &self,
        active: &NodeSet,
        candidates: &NodeSet,
        first_only: bool,
    ) -> Result<Vec<NodeSet>, AnalysisError> {
        let n = self.fbas.len();
        let empty = NodeSet::empty(n);
        if self.splits(active, &empty)? {
            return Ok(vec![empty]);
        }
        let pool: Vec<usize> = candidates.intersection(active).iter().collect();
        let mut found: Vec<NodeSet> = Vec::new();
        // Two disjoint non-empty quorums need at least two survivors.
        let max_size = pool.len().min(active.count().saturating_sub(2));
        for size in 1..=max_size {
            let mut current = NodeSet::empty(n);
            let mut fresh = Vec::new();
            self.combinations(&pool, 0, size, &mut current, active, &found, &mut fresh, first_only)?;
            found.extend(fresh);
            if first_only && !found.is_empty() {
                break;
            }
        }
        found.sort();
        Ok(found)
    }

    #[allow(clippy::too_many_arguments)]
    fn combinations(
        &self,
        candidates: &[usize],
        start: usize,
        remaining: usize,
        current: &mut NodeSet,
        active: &NodeSet,
        found: &[NodeSet],
        fresh: &mut Vec<NodeSet>,
        first_only: bool,
    ) -> Result<(), AnalysisError> {
        self.budget.tick()?;
        if (first_only && !fresh.is_empty()) || found.iter().any(|f| f.is_subset(current)) {
            return Ok(());
        }
        if remaining == 0 {
            if self.splits(active, current)? {
                fresh.push(current.clone());
            }
            return Ok(());
        }
        for i in start..=candidates.len() - remaining {
            current.insert(candidates[i]);
            self.combinations(
                candidates,
                i + 1,
                remaining - 1,
                current,
                active,
                found,
                fresh,
                first_only,
            )?;
            current.remove(candidates[i]);
        }
        Ok(())
    }
}
