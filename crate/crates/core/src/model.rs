//! The FBAS data model: node identities, quorum sets, and the FBAS itself.
//!
//! A [`QuorumSet`] is a threshold over node members and nested inner sets. It
//! is satisfied by a set of agreeing nodes when at least `threshold` of its
//! constituents are satisfied: a node member is satisfied when it agrees, an
//! inner set when it is recursively satisfied.
//!
//! [`Fbas`] assigns one quorum set and an activity flag to every node and
//! gives each node a dense index so that analyses can run over [`NodeSet`]
//! bitsets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nodeset::NodeSet;
use crate::wire::QsetDoc;

/// Maximum nesting of inner quorum sets accepted by validation.
pub const MAX_QSET_DEPTH: usize = 16;

/// A validator identity (its public key as a printable string).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(key: impl Into<String>) -> Self {
        NodeId(key.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Structural problems found by [`QuorumSet::validate`]. The `path` locates the
/// offending level, e.g. `$.inner_sets[1]`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QsetError {
    #[error("{path}: threshold {threshold} exceeds {constituents} constituents")]
    ThresholdOutOfRange {
        path: String,
        threshold: u32,
        constituents: usize,
    },
    #[error("{path}: duplicate member {node}")]
    DuplicateMember { path: String, node: NodeId },
    #[error("{path}: unknown node {node}")]
    UnknownNode { path: String, node: NodeId },
    #[error("{path}: nesting deeper than {max}")]
    DepthExceeded { path: String, max: usize },
    #[error("{path}: empty public key")]
    EmptyKey { path: String },
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize)]
#[serde(from = "QsetDoc", into = "QsetDoc")]
pub struct QuorumSet {
    pub threshold: u32,
    pub validators: Vec<NodeId>,
    pub inner_sets: Vec<QuorumSet>,
}

impl QuorumSet {
    pub fn new(threshold: u32, validators: Vec<NodeId>, inner_sets: Vec<QuorumSet>) -> Self {
        QuorumSet {
            threshold,
            validators,
            inner_sets,
        }
    }

    /// Flat `threshold`-of-`validators` set.
    pub fn flat<I, S>(threshold: u32, validators: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        QuorumSet::new(threshold, validators.into_iter().map(Into::into).collect(), vec![])
    }

    /// The quorum set of a node whose configuration was never observed.
    pub fn trivial() -> Self {
        QuorumSet::default()
    }

    pub fn is_trivial(&self) -> bool {
        self.threshold == 0 && self.validators.is_empty() && self.inner_sets.is_empty()
    }

    pub fn constituents(&self) -> usize {
        self.validators.len() + self.inner_sets.len()
    }

    /// Checks threshold range, per-level duplicates, nesting depth and, when a
    /// universe is given, that every member (transitively) belongs to it.
    /// Returns the first violation in depth-first order.
    pub fn validate(&self, universe: Option<&dyn Fn(&NodeId) -> bool>) -> Result<(), QsetError> {
        self.validate_at("$".to_owned(), 0, universe)
    }

    fn validate_at(
        &self,
        path: String,
        depth: usize,
        universe: Option<&dyn Fn(&NodeId) -> bool>,
    ) -> Result<(), QsetError> {
        if depth > MAX_QSET_DEPTH {
            return Err(QsetError::DepthExceeded {
                path,
                max: MAX_QSET_DEPTH,
            });
        }
        if self.threshold as usize > self.constituents() {
            return Err(QsetError::ThresholdOutOfRange {
                path,
                threshold: self.threshold,
                constituents: self.constituents(),
            });
        }
        let mut seen = BTreeSet::new();
        for v in &self.validators {
            if v.as_str().is_empty() {
                return Err(QsetError::EmptyKey { path });
            }
            if !seen.insert(v) {
                return Err(QsetError::DuplicateMember { path, node: v.clone() });
            }
            if let Some(known) = universe {
                if !known(v) {
                    return Err(QsetError::UnknownNode { path, node: v.clone() });
                }
            }
        }
        for (i, inner) in self.inner_sets.iter().enumerate() {
            inner.validate_at(format!("{path}.inner_sets[{i}]"), depth + 1, universe)?;
        }
        Ok(())
    }

    /// True iff at least `threshold` constituents are satisfied by the nodes
    /// for which `agrees` holds.
    pub fn is_satisfied_by(&self, agrees: &dyn Fn(&NodeId) -> bool) -> bool {
        let threshold = self.threshold as usize;
        if threshold == 0 {
            return true;
        }
        let mut count = 0;
        for v in &self.validators {
            if agrees(v) {
                count += 1;
                if count >= threshold {
                    return true;
                }
            }
        }
        for inner in &self.inner_sets {
            if inner.is_satisfied_by(agrees) {
                count += 1;
                if count >= threshold {
                    return true;
                }
            }
        }
        false
    }

    pub fn contains_transitively(&self, node: &NodeId) -> bool {
        self.validators.contains(node) || self.inner_sets.iter().any(|q| q.contains_transitively(node))
    }

    /// Union of node members over all nesting levels.
    pub fn transitive_members(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        self.collect_members(&mut out);
        out
    }

    fn collect_members(&self, out: &mut BTreeSet<NodeId>) {
        out.extend(self.validators.iter().cloned());
        for inner in &self.inner_sets {
            inner.collect_members(out);
        }
    }

    /// Adds `owner` to the top level and raises the threshold by one, unless
    /// the owner is already a transitive member. Satisfaction is unchanged for
    /// every agreeing set that contains the owner.
    pub fn normalize_self_inclusion(&self, owner: &NodeId) -> QuorumSet {
        if self.contains_transitively(owner) {
            return self.clone();
        }
        let mut out = self.clone();
        out.validators.push(owner.clone());
        out.threshold += 1;
        out
    }

    /// Sorted members and inner sets at every level, for structural comparison.
    pub fn canonical(&self) -> QuorumSet {
        let mut validators = self.validators.clone();
        validators.sort();
        let mut inner_sets: Vec<_> = self.inner_sets.iter().map(QuorumSet::canonical).collect();
        inner_sets.sort();
        QuorumSet::new(self.threshold, validators, inner_sets)
    }

    /// Lowers every threshold by `delta`, flooring at zero. The flag is set
    /// when some threshold had to be clamped.
    pub fn reduce_thresholds(&self, delta: u32) -> (QuorumSet, bool) {
        let mut clamped = self.threshold < delta;
        let inner_sets = self
            .inner_sets
            .iter()
            .map(|q| {
                let (q, c) = q.reduce_thresholds(delta);
                clamped |= c;
                q
            })
            .collect();
        (
            QuorumSet::new(
                self.threshold.saturating_sub(delta),
                self.validators.clone(),
                inner_sets,
            ),
            clamped,
        )
    }

    /// Removes members for which `keep` is false. With `decrement` each removed
    /// member lowers the threshold of its level by one (floor 0); without it the
    /// thresholds stay as configured.
    pub(crate) fn remove_members(&self, keep: &dyn Fn(&NodeId) -> bool, decrement: bool) -> QuorumSet {
        let validators: Vec<NodeId> = self.validators.iter().filter(|v| keep(v)).cloned().collect();
        let removed = (self.validators.len() - validators.len()) as u32;
        let threshold = if decrement {
            self.threshold.saturating_sub(removed)
        } else {
            self.threshold
        };
        let inner_sets = self
            .inner_sets
            .iter()
            .map(|q| q.remove_members(keep, decrement))
            .collect();
        QuorumSet::new(threshold, validators, inner_sets)
    }
}

/// Compiled quorum set over dense node indices.
#[derive(Clone, Debug)]
pub(crate) struct Slice {
    threshold: usize,
    validators: Vec<usize>,
    inner: Vec<Slice>,
}

impl Slice {
    fn compile(qset: &QuorumSet, index: &HashMap<NodeId, usize>) -> Slice {
        Slice {
            threshold: qset.threshold as usize,
            // Unresolvable members can never agree; Fbas construction rejects them.
            validators: qset.validators.iter().filter_map(|v| index.get(v).copied()).collect(),
            inner: qset.inner_sets.iter().map(|q| Slice::compile(q, index)).collect(),
        }
    }

    fn members(&self, out: &mut Vec<usize>) {
        out.extend_from_slice(&self.validators);
        for inner in &self.inner {
            inner.members(out);
        }
    }

    pub(crate) fn satisfied(&self, agreeing: &NodeSet) -> bool {
        if self.threshold == 0 {
            return true;
        }
        let mut count = 0;
        for &v in &self.validators {
            if agreeing.contains(v) {
                count += 1;
                if count >= self.threshold {
                    return true;
                }
            }
        }
        for inner in &self.inner {
            if inner.satisfied(agreeing) {
                count += 1;
                if count >= self.threshold {
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FbasError {
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("invalid quorum set of {node}: {source}")]
    InvalidQuorumSet {
        node: NodeId,
        #[source]
        source: QsetError,
    },
    #[error("no active nodes")]
    NoActiveNodes,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// One node's entry when building an [`Fbas`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeEntry {
    pub id: NodeId,
    pub quorum_set: QuorumSet,
    pub active: bool,
}

impl NodeEntry {
    pub fn new(id: impl Into<NodeId>, quorum_set: QuorumSet, active: bool) -> Self {
        NodeEntry {
            id: id.into(),
            quorum_set,
            active,
        }
    }
}

/// A federated Byzantine agreement system.
#[derive(Clone, Debug)]
pub struct Fbas {
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    quorum_sets: Vec<QuorumSet>,
    active: Vec<bool>,
    slices: Vec<Slice>,
}

impl PartialEq for Fbas {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.quorum_sets == other.quorum_sets && self.active == other.active
    }
}

impl Eq for Fbas {}

impl Fbas {
    /// Builds and validates an FBAS. Node order fixes the dense indices.
    pub fn new<I: IntoIterator<Item = NodeEntry>>(entries: I) -> Result<Fbas, FbasError> {
        let entries: Vec<NodeEntry> = entries.into_iter().collect();
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.id.clone(), i).is_some() {
                return Err(FbasError::DuplicateNode(e.id.clone()));
            }
        }
        for e in &entries {
            let known = |v: &NodeId| index.contains_key(v);
            e.quorum_set
                .validate(Some(&known))
                .map_err(|source| FbasError::InvalidQuorumSet {
                    node: e.id.clone(),
                    source,
                })?;
        }
        Ok(Self::assemble(entries, index))
    }

    /// Builds without threshold-range validation. Member references must
    /// still resolve; callers guarantee that.
    fn from_trusted(entries: Vec<NodeEntry>) -> Fbas {
        let index = entries.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        Self::assemble(entries, index)
    }

    fn assemble(entries: Vec<NodeEntry>, index: HashMap<NodeId, usize>) -> Fbas {
        let slices = entries.iter().map(|e| Slice::compile(&e.quorum_set, &index)).collect();
        let mut nodes = Vec::with_capacity(entries.len());
        let mut quorum_sets = Vec::with_capacity(entries.len());
        let mut active = Vec::with_capacity(entries.len());
        for e in entries {
            nodes.push(e.id);
            quorum_sets.push(e.quorum_set);
            active.push(e.active);
        }
        Fbas {
            nodes,
            index,
            quorum_sets,
            active,
            slices,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = NodeEntry> + '_ {
        (0..self.len()).map(|i| NodeEntry {
            id: self.nodes[i].clone(),
            quorum_set: self.quorum_sets[i].clone(),
            active: self.active[i],
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeId {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn quorum_set(&self, i: usize) -> &QuorumSet {
        &self.quorum_sets[i]
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_set(&self) -> NodeSet {
        NodeSet::from_indices(self.len(), (0..self.len()).filter(|&i| self.active[i]))
    }

    pub fn empty_set(&self) -> NodeSet {
        NodeSet::empty(self.len())
    }

    /// Builds a node set from identifiers; unknown identifiers are an error.
    pub fn node_set<'a, I>(&self, ids: I) -> Result<NodeSet, FbasError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = self.empty_set();
        for id in ids {
            let id = NodeId::from(id);
            let i = self.index_of(&id).ok_or(FbasError::UnknownNode(id))?;
            set.insert(i);
        }
        Ok(set)
    }

    pub fn ids_of(&self, set: &NodeSet) -> Vec<NodeId> {
        set.iter().map(|i| self.nodes[i].clone()).collect()
    }

    /// Slice satisfaction of an arbitrary quorum set against an agreeing set of
    /// this FBAS. Members unknown to this FBAS never agree.
    pub fn is_slice_satisfied(&self, qset: &QuorumSet, agreeing: &NodeSet) -> bool {
        qset.is_satisfied_by(&|v| self.index_of(v).is_some_and(|i| agreeing.contains(i)))
    }

    /// Satisfaction of node `i`'s own quorum set.
    pub fn node_satisfied(&self, i: usize, agreeing: &NodeSet) -> bool {
        self.slices[i].satisfied(agreeing)
    }

    /// Dense indices of every member of node `i`'s quorum set, at any depth.
    pub(crate) fn slice_members(&self, i: usize, out: &mut Vec<usize>) {
        self.slices[i].members(out);
    }

    /// Stable content hash (hex) over node order, quorum sets and activity.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, id) in self.nodes.iter().enumerate() {
            let qset = serde_json::to_string(&self.quorum_sets[i]).expect("quorum sets serialize");
            hasher.update(id.as_str().as_bytes());
            hasher.update([0u8, self.active[i] as u8]);
            hasher.update(qset.as_bytes());
            hasher.update([0xffu8]);
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with the given nodes marked inactive.
    pub fn with_inactive<'a, I>(&self, ids: I) -> Result<Fbas, FbasError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let down = self.node_set(ids)?;
        let mut out = self.clone();
        for i in down.iter() {
            out.active[i] = false;
        }
        Ok(out)
    }

    /// Lowers every threshold at every nesting level by `delta` (floor 0).
    pub fn reduce_thresholds(&self, delta: u32) -> ThresholdReduction {
        let mut clamped = false;
        let entries = self
            .entries()
            .map(|mut e| {
                let (q, c) = e.quorum_set.reduce_thresholds(delta);
                clamped |= c;
                e.quorum_set = q;
                e
            })
            .collect();
        ThresholdReduction {
            fbas: Fbas::from_trusted(entries),
            clamped,
        }
    }

    /// Drops inactive nodes from the universe and from every member list,
    /// keeping thresholds as configured: an unreachable node can no longer help
    /// satisfy anyone's slice. Restricted quorum sets may become unsatisfiable.
    pub fn restrict_to_active(&self) -> Result<Fbas, FbasError> {
        if self.active_count() == 0 {
            return Err(FbasError::NoActiveNodes);
        }
        if self.active_count() == self.len() {
            return Ok(self.clone());
        }
        let keep = |v: &NodeId| self.index_of(v).is_some_and(|i| self.active[i]);
        let entries = self
            .entries()
            .filter(|e| e.active)
            .map(|mut e| {
                e.quorum_set = e.quorum_set.remove_members(&keep, false);
                e
            })
            .collect();
        Ok(Fbas::from_trusted(entries))
    }

    /// Removes `deleted` from the universe; in every quorum set each removed
    /// member lowers its level's threshold by one (floor 0).
    pub fn delete_nodes(&self, deleted: &NodeSet) -> Fbas {
        let keep = |v: &NodeId| self.index_of(v).is_none_or(|i| !deleted.contains(i));
        let entries = self
            .entries()
            .enumerate()
            .filter(|(i, _)| !deleted.contains(*i))
            .map(|(_, mut e)| {
                e.quorum_set = e.quorum_set.remove_members(&keep, true);
                e
            })
            .collect();
        Fbas::from_trusted(entries)
    }
}

/// Result of [`Fbas::reduce_thresholds`].
#[derive(Clone, Debug)]
pub struct ThresholdReduction {
    pub fbas: Fbas,
    /// Some threshold was smaller than the requested reduction.
    pub clamped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingKind {
    None,
    Organisation,
    Isp,
    Country,
}

impl GroupingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupingKind::None => "none",
            GroupingKind::Organisation => "organisation",
            GroupingKind::Isp => "isp",
            GroupingKind::Country => "country",
        }
    }
}

impl fmt::Display for GroupingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Assignment of nodes to named groups (organisations, ISPs, countries).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grouping {
    pub kind: GroupingKind,
    pub assignment: BTreeMap<NodeId, String>,
}

impl Grouping {
    /// Every node in its own group, named after the node.
    pub fn singletons(fbas: &Fbas) -> Grouping {
        Grouping {
            kind: GroupingKind::None,
            assignment: fbas.nodes().iter().map(|n| (n.clone(), n.to_string())).collect(),
        }
    }

    pub fn group_of(&self, node: &NodeId) -> Option<&str> {
        self.assignment.get(node).map(String::as_str)
    }
}
