//! Crawling and quorum-structure analysis for federated Byzantine agreement
//! systems (FBAS).
//!
//! The crate crawls validators over a small newline-delimited JSON protocol
//! ([`crawler`], [`wire`]), rebuilds the FBAS from their quorum sets
//! ([`model`]) and computes minimal quorums, blocking sets, splitting sets and
//! the top tier ([`analysis`]), optionally lifted to organisations, ISPs or
//! countries ([`enrichment`]). Snapshots of crawls are persisted as JSON
//! ([`snapshots`]); [`mocknet`] serves a configurable validator topology on
//! loopback for testing.

pub mod analysis;
pub mod crawler;
pub mod enrichment;
pub mod fixtures;
pub mod mocknet;
pub mod model;
pub mod nodeset;
pub mod snapshots;
pub mod wire;

pub use analysis::{
    AnalysisError, Analyzer, CardinalityStats, FamilyKind, GroupFamily, MinimalSetFamily, QuorumIntersection,
    SymmetricTopTier, DEFAULT_BUDGET,
};
pub use model::{Fbas, FbasError, Grouping, GroupingKind, NodeEntry, NodeId, QsetError, QuorumSet};
pub use nodeset::NodeSet;
pub use snapshots::{CrawlSnapshot, NodeRecord};
pub use wire::NodeAddress;
