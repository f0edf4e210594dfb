//! Bundled example networks.
//!
//! `mobilecoin-2021` is the ten-validator network observed in late 2021:
//! seven organisations, each validator requiring 7 of the other 9. The joint
//! (organisation, country, ISP) assignment per node is synthetic; only the
//! per-attribute node counts follow the observed network.

use crate::model::{Fbas, NodeEntry, QuorumSet};

pub const MOBILECOIN_2021_TOPOLOGY: &str = include_str!("../fixtures/mobilecoin-2021/topology.json");
pub const MOBILECOIN_2021_SNAPSHOT: &str = include_str!("../fixtures/mobilecoin-2021/snapshot.json");
pub const MOBILECOIN_2021_ORG_RULES: &str = include_str!("../fixtures/mobilecoin-2021/org_rules.csv");
pub const MOBILECOIN_2021_IP_META: &str = include_str!("../fixtures/mobilecoin-2021/ip_meta.csv");

/// Node keys of the `mobilecoin-2021` fixture, named after their operators.
pub const MOBILECOIN_2021_NODES: [&str; 10] = ["MC1", "MC2", "MC3", "Na1", "Na2", "Bin", "Blo", "Dre", "IBB", "LNF"];

/// The 10-node network as an FBAS, all nodes active.
pub fn mobilecoin_fbas() -> Fbas {
    symmetric_others(&MOBILECOIN_2021_NODES, 7)
}

/// Every node requires `threshold` of the other nodes (no self-inclusion).
pub fn symmetric_others(keys: &[&str], threshold: u32) -> Fbas {
    Fbas::new(keys.iter().map(|&k| {
        let others = keys.iter().copied().filter(|&o| o != k);
        NodeEntry::new(k, QuorumSet::flat(threshold, others), true)
    }))
    .expect("symmetric fixture is valid")
}

/// `n` nodes named `0..n`, each requiring `threshold` of all `n` (itself included).
pub fn symmetric_with_self(n: usize, threshold: u32) -> Fbas {
    let keys: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    Fbas::new(keys.iter().map(|k| {
        NodeEntry::new(
            k.as_str(),
            QuorumSet::flat(threshold, keys.iter().map(String::as_str)),
            true,
        )
    }))
    .expect("symmetric fixture is valid")
}

/// Five-node example FBAS with nodes `0..=4`.
pub fn fig1_fbas() -> Fbas {
    Fbas::new([
        NodeEntry::new("0", QuorumSet::flat(2, ["1", "2"]), true),
        NodeEntry::new("1", QuorumSet::flat(2, ["0", "2", "3"]), true),
        NodeEntry::new("2", QuorumSet::flat(3, ["0", "1", "3", "4"]), true),
        NodeEntry::new("3", QuorumSet::flat(3, ["0", "1", "2", "4"]), true),
        NodeEntry::new("4", QuorumSet::flat(3, ["0", "1", "2", "3"]), true),
    ])
    .expect("example is valid")
}
