use super::*;
use crate::fixtures::{fig1_fbas, mobilecoin_fbas, symmetric_with_self};
use crate::model::{Fbas, Grouping, GroupingKind, NodeEntry, QuorumSet};
use proptest::prelude::*;

fn sets(fbas: &Fbas, groups: &[&[&str]]) -> Vec<NodeSet> {
    let mut out: Vec<NodeSet> = groups
        .iter()
        .map(|g| fbas.node_set(g.iter().copied()).unwrap())
        .collect();
    out.sort();
    out
}

fn k_subsets(n: usize, k: usize) -> Vec<NodeSet> {
    let mut out: Vec<NodeSet> = (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| NodeSet::from_indices(n, (0..n).filter(|i| m & (1 << i) != 0)))
        .collect();
    out.sort();
    out
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn fig1_is_quorum() {
    let f = fig1_fbas();
    assert!(is_quorum(&f, &f.node_set(["0", "1", "2", "3"]).unwrap()));
    assert!(!is_quorum(&f, &f.node_set(["0", "1", "2"]).unwrap()));
    assert!(!is_quorum(&f, &f.empty_set()));
}

#[test]
fn fig1_families() {
    let f = fig1_fbas();
    let a = Analyzer::new(&f);
    assert_eq!(
        a.minimal_quorums().unwrap().sets,
        sets(
            &f,
            &[&["0", "1", "2", "3"], &["0", "1", "2", "4"], &["1", "2", "3", "4"]]
        )
    );
    assert_eq!(
        a.minimal_blocking_sets().unwrap().sets,
        sets(&f, &[&["1"], &["2"], &["0", "3"], &["0", "4"], &["3", "4"]])
    );
    // Frozen from oracle_enumerate.
    assert_eq!(
        a.minimal_splitting_sets().unwrap().sets,
        sets(&f, &[&["0", "2"], &["0", "3"], &["1", "2"], &["0", "1", "4"]])
    );
    assert!(a.is_splitting(&f.node_set(["0", "1", "2"]).unwrap()).unwrap());
    assert!(a.is_splitting(&f.node_set(["1", "2"]).unwrap()).unwrap());
    assert_eq!(a.top_tier().unwrap().count(), 5);
    assert_eq!(
        a.quorum_intersection().unwrap(),
        QuorumIntersection {
            holds: true,
            vacuous: false
        }
    );
    assert_eq!(a.symmetric_top_tier().unwrap(), None);
}

#[test]
fn fig1_literal_intersection_diagnostic() {
    let f = fig1_fbas();
    let a = Analyzer::new(&f);
    assert!(a
        .contains_quorum_intersection(&f.node_set(["0", "1", "2"]).unwrap())
        .unwrap());
    // Splitting under deletion, yet contains no intersection of two quorums.
    assert!(!a
        .contains_quorum_intersection(&f.node_set(["1", "2"]).unwrap())
        .unwrap());
}

#[test]
fn mobilecoin_families() {
    let f = mobilecoin_fbas();
    let a = Analyzer::new(&f);
    assert_eq!(a.minimal_quorums().unwrap().sets, k_subsets(10, 8));
    assert!(a.quorum_intersection().unwrap().holds);
    assert_eq!(a.top_tier().unwrap().count(), 10);

    let blocking = a.minimal_blocking_sets().unwrap();
    assert_eq!(blocking.sets, k_subsets(10, 3));
    assert_eq!(blocking.stats().summary(), "3/3.0/3/120");

    let splitting = a.minimal_splitting_sets().unwrap();
    assert_eq!(splitting.sets, k_subsets(10, 6));
    assert_eq!(splitting.stats().summary(), "6/6.0/6/210");

    let sym = a.symmetric_top_tier().unwrap().expect("symmetric");
    assert_eq!(sym.common_qset.threshold, 8);
    assert_eq!(sym.common_qset.validators.len(), 10);
    assert_eq!(sym.members.count(), 10);
}

#[test]
fn mobilecoin_every_eight_subset_is_quorum() {
    let f = mobilecoin_fbas();
    for mask in 0u32..(1 << 10) {
        let set = NodeSet::from_indices(10, (0..10).filter(|i| mask & (1 << i) != 0));
        assert_eq!(is_quorum(&f, &set), mask.count_ones() >= 8, "{set:?}");
    }
}

#[test]
fn mobilecoin_one_inactive() {
    let f = mobilecoin_fbas().with_inactive(["Dre"]).unwrap();
    let a = Analyzer::new(&f);
    let dre = f.index_of(&"Dre".into()).unwrap();
    assert_eq!(a.top_tier().unwrap().count(), 9);
    let blocking = a.minimal_blocking_sets().unwrap();
    assert_eq!(blocking.stats().summary(), "2/2.0/2/36");
    assert!(blocking.sets.iter().all(|s| !s.contains(dre)));
    assert_eq!(a.minimal_splitting_sets().unwrap().stats().summary(), "7/7.0/7/36");
    let sym = a.symmetric_top_tier().unwrap().unwrap();
    assert_eq!((sym.common_qset.threshold, sym.common_qset.validators.len()), (8, 9));
}

#[test]
fn inactive_analysis_matches_restricted_fbas() {
    let f = mobilecoin_fbas().with_inactive(["Na1", "IBB"]).unwrap();
    let r = f.restrict_to_active().unwrap();
    for kind in [FamilyKind::Quorums, FamilyKind::Blocking, FamilyKind::Splitting] {
        let full = Analyzer::new(&f).minimal_family(kind).unwrap();
        let restricted = Analyzer::new(&r).minimal_family(kind).unwrap();
        let named = |fbas: &Fbas, fam: &MinimalSetFamily| -> Vec<Vec<NodeId>> {
            let mut v: Vec<_> = fam.sets.iter().map(|s| fbas.ids_of(s)).collect();
            v.sort();
            v
        };
        assert_eq!(named(&f, &full), named(&r, &restricted), "{kind}");
    }
}

#[test]
fn single_node_cases() {
    let f = Fbas::new([NodeEntry::new("solo", QuorumSet::trivial(), true)]).unwrap();
    assert_eq!(find_minimal_quorums(&f).unwrap().sets, vec![NodeSet::full(1)]);

    let f = Fbas::new([NodeEntry::new("solo", QuorumSet::flat(1, ["solo"]), true)]).unwrap();
    let sym = detect_symmetric_top_tier(&f).unwrap().unwrap();
    assert_eq!(sym.common_qset, QuorumSet::flat(1, ["solo"]));
}

#[test]
fn disjoint_cliques_lack_intersection() {
    let f = Fbas::new([
        NodeEntry::new("a", QuorumSet::flat(1, ["b"]), true),
        NodeEntry::new("b", QuorumSet::flat(1, ["a"]), true),
        NodeEntry::new("c", QuorumSet::flat(1, ["d"]), true),
        NodeEntry::new("d", QuorumSet::flat(1, ["c"]), true),
    ])
    .unwrap();
    assert!(!has_quorum_intersection(&f).unwrap().holds);
    assert_eq!(find_minimal_splitting_sets(&f).unwrap().sets, vec![f.empty_set()]);
}

#[test]
fn zero_quorum_fbas_is_vacuous() {
    let f = Fbas::new([
        NodeEntry::new("a", QuorumSet::flat(1, ["b"]), true),
        NodeEntry::new("b", QuorumSet::flat(1, ["a"]), false),
    ])
    .unwrap();
    let qi = has_quorum_intersection(&f).unwrap();
    assert!(qi.holds && qi.vacuous);
    let blocking = find_minimal_blocking_sets(&f).unwrap();
    assert!(blocking.sets.is_empty() && blocking.vacuous);
    assert_eq!(oracle_enumerate(&f, FamilyKind::Blocking).unwrap(), blocking);
    assert!(find_minimal_splitting_sets(&f).unwrap().is_empty());
}

#[test]
fn delete_byzantine_examples() {
    let f = fig1_fbas();
    let d = delete_byzantine(&f, &f.node_set(["0", "1", "2"]).unwrap());
    assert_eq!(d.quorum_set(0), &QuorumSet::flat(0, ["4"]));
    assert_eq!(d.quorum_set(1), &QuorumSet::flat(0, ["3"]));
    assert_eq!(delete_byzantine(&f, &f.empty_set()), f);

    let m = mobilecoin_fbas();
    let d = delete_byzantine(&m, &m.node_set(["MC1", "MC2", "MC3", "Na1", "Na2", "Bin"]).unwrap());
    assert_eq!(d.len(), 4);
    for i in 0..4 {
        assert_eq!(d.quorum_set(i).threshold, 1);
        assert_eq!(d.quorum_set(i).validators.len(), 3);
    }
}

#[test]
fn delete_byzantine_collapses_inner_sets() {
    let f = Fbas::new([
        NodeEntry::new(
            "a",
            QuorumSet::new(2, vec!["b".into()], vec![QuorumSet::flat(2, ["c", "d"])]),
            true,
        ),
        NodeEntry::new("b", QuorumSet::flat(1, ["a"]), true),
        NodeEntry::new("c", QuorumSet::flat(1, ["a"]), true),
        NodeEntry::new("d", QuorumSet::flat(1, ["a"]), true),
    ])
    .unwrap();
    let d = delete_byzantine(&f, &f.node_set(["c", "d"]).unwrap());
    assert_eq!(d.quorum_set(0).inner_sets[0], QuorumSet::flat(0, Vec::<&str>::new()));
    assert_eq!(d.quorum_set(0).threshold, 2);
}

#[test]
fn lift_mobilecoin_groupings() {
    let f = mobilecoin_fbas();
    let a = Analyzer::new(&f);
    let org = grouping(
        GroupingKind::Organisation,
        &[
            ("MC1", "MobileCoin Worldwide"),
            ("MC2", "MobileCoin Worldwide"),
            ("MC3", "MobileCoin Worldwide"),
            ("Na1", "Namda"),
            ("Na2", "Namda"),
            ("Bin", "Binance"),
            ("Blo", "Blockdaemon"),
            ("Dre", "Dreamhost"),
            ("IBB", "Ideas Beyond Borders"),
            ("LNF", "The Long Now Foundation"),
        ],
    );
    let blocking = a.lift_kind(FamilyKind::Blocking, &org).unwrap();
    assert!(blocking.contains_names(&["MobileCoin Worldwide"]));
    let splitting = a.lift_kind(FamilyKind::Splitting, &org).unwrap();
    assert_eq!(splitting.stats().min, 3);
    assert!(splitting.contains_names(&["MobileCoin Worldwide", "Namda", "Binance"]));

    let isp = grouping(
        GroupingKind::Isp,
        &f.nodes()
            .iter()
            .map(|n| {
                (
                    n.as_str(),
                    if n.as_str() == "LNF" {
                        "Datacamp Limited"
                    } else {
                        "Microsoft Corporation"
                    },
                )
            })
            .collect::<Vec<_>>(),
    );
    let blocking = a.lift_kind(FamilyKind::Blocking, &isp).unwrap();
    assert!(blocking.contains_names(&["Microsoft Corporation"]));
    let splitting = a.lift_kind(FamilyKind::Splitting, &isp).unwrap();
    assert_eq!(splitting.named_sets(), vec![vec!["Microsoft Corporation"]]);

    let none = a.lift_kind(FamilyKind::Blocking, &Grouping::singletons(&f)).unwrap();
    assert_eq!(none.sets.len(), 120);
}

/// Disjoint quorum pairs after Byzantine deletion of `deleted`, as indices
/// of the original FBAS.
fn disjoint_quorum_pairs(f: &Fbas, deleted: &NodeSet) -> Vec<(Vec<usize>, Vec<usize>)> {
    let d = delete_byzantine(f, deleted);
    let n = d.len();
    let back = |set: &NodeSet| -> Vec<usize> { set.iter().map(|i| f.index_of(d.node(i)).unwrap()).collect() };
    let quorums: Vec<NodeSet> = (1u32..(1 << n))
        .map(|m| NodeSet::from_indices(n, (0..n).filter(|i| m & (1 << i) != 0)))
        .filter(|s| is_quorum(&d, s))
        .collect();
    let mut pairs = Vec::new();
    for (i, a) in quorums.iter().enumerate() {
        for b in &quorums[i + 1..] {
            if a.is_disjoint(b) {
                pairs.push((back(a), back(b)));
            }
        }
    }
    pairs
}

#[test]
fn splitting_is_not_upward_closed_in_general() {
    let f = Fbas::new([
        NodeEntry::new("a", QuorumSet::trivial(), true),
        NodeEntry::new("b", QuorumSet::trivial(), true),
    ])
    .unwrap();
    let a = Analyzer::new(&f);
    assert!(a.is_splitting(&f.empty_set()).unwrap());
    assert!(!a.is_splitting(&f.node_set(["a"]).unwrap()).unwrap());
}

fn grouping(kind: GroupingKind, pairs: &[(&str, &str)]) -> Grouping {
    Grouping {
        kind,
        assignment: pairs.iter().map(|(n, g)| (NodeId::from(*n), g.to_string())).collect(),
    }
}

#[test]
fn lift_requires_total_grouping() {
    let f = fig1_fbas();
    let partial = grouping(GroupingKind::Country, &[("0", "NL")]);
    let err = Analyzer::new(&f).lift_kind(FamilyKind::Blocking, &partial).unwrap_err();
    assert_eq!(err, AnalysisError::GroupingIncomplete("1".into()));
}

#[test]
fn reduced_thresholds_counterfactual() {
    let f = mobilecoin_fbas().reduce_thresholds(1).fbas;
    let a = Analyzer::new(&f);
    assert_eq!(a.minimal_blocking_sets().unwrap().stats().min, 4);
    assert_eq!(a.minimal_splitting_sets().unwrap().stats().min, 4);
}

#[test]
fn budget_exhaustion_is_an_error() {
    let f = symmetric_with_self(14, 10);
    let a = Analyzer::with_budget(&f, 50);
    assert_eq!(a.minimal_quorums().unwrap_err(), AnalysisError::Timeout { budget: 50 });
}

#[test]
fn oracle_rejects_large_universes() {
    let f = symmetric_with_self(21, 11);
    assert_eq!(
        oracle_enumerate(&f, FamilyKind::Quorums).unwrap_err(),
        AnalysisError::UniverseTooLarge { max: 20, got: 21 }
    );
}

#[test]
fn cardinality_stats_empty() {
    let s = cardinality_stats(&[]);
    assert_eq!((s.min, s.mean, s.max, s.count), (0, 0.0, 0, 0));
}

#[test]
fn symmetric_closed_forms_quorums_and_blocking() {
    for n in 2..=8usize {
        for t in (n / 2 + 1)..=n {
            let f = symmetric_with_self(n, t as u32);
            let a = Analyzer::new(&f);
            assert_eq!(
                a.minimal_quorums().unwrap().sets,
                k_subsets(n, t),
                "quorums n={n} t={t}"
            );
            assert_eq!(
                a.minimal_blocking_sets().unwrap().sets,
                k_subsets(n, n - t + 1),
                "blocking n={n} t={t}"
            );
            assert_eq!(a.minimal_blocking_sets().unwrap().len(), binomial(n, n - t + 1));
        }
    }
}

#[test]
fn symmetric_splitting_sets_below_unanimity() {
    for n in 2..=8usize {
        for t in (n / 2 + 1)..n {
            let f = symmetric_with_self(n, t as u32);
            let got = find_minimal_splitting_sets(&f).unwrap().sets;
            assert_eq!(got, k_subsets(n, 2 * t - n), "n={n} t={t}");
        }
    }
}

#[test]
fn unanimous_threshold_has_no_splitting_set() {
    // With t = n every survivor of a deletion needs all other survivors, so
    // no two disjoint quorums can ever appear.
    for n in 1..=6usize {
        let f = symmetric_with_self(n, n as u32);
        assert!(find_minimal_splitting_sets(&f).unwrap().is_empty(), "n={n}");
        assert!(oracle_enumerate(&f, FamilyKind::Splitting).unwrap().is_empty(), "n={n}");
    }
}

#[test]
fn deterministic_output() {
    let f = fig1_fbas();
    let a = find_minimal_splitting_sets(&f).unwrap();
    let b = find_minimal_splitting_sets(&f).unwrap();
    assert_eq!(a, b);
}

prop_compose! {
    fn small_fbas()(n in 1usize..=6)
        (n in Just(n),
         specs in proptest::collection::vec(
             (proptest::collection::vec(any::<bool>(), 6), any::<u8>(), proptest::option::weighted(0.2, (proptest::collection::vec(any::<bool>(), 6), any::<u8>())), any::<bool>()),
             n))
        -> Fbas
    {
        let keys: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let pick = |mask: &[bool]| -> Vec<NodeId> {
            keys.iter().zip(mask).filter(|(_, &b)| b).map(|(k, _)| NodeId::from(k.as_str())).collect()
        };
        Fbas::new(specs.iter().enumerate().map(|(i, (members, t, inner, active))| {
            let inner_sets: Vec<QuorumSet> = inner.iter().map(|(m, it)| {
                let v = pick(m);
                let t = (*it as usize % (v.len() + 1)) as u32;
                QuorumSet::new(t, v, vec![])
            }).collect();
            let validators = pick(members);
            let count = validators.len() + inner_sets.len();
            let t = (*t as usize % (count + 1)) as u32;
            // Mostly active; the first node always is, so the search is never trivially empty.
            NodeEntry::new(keys[i].as_str(), QuorumSet::new(t, validators, inner_sets), i == 0 || *active || i % 2 == 0)
        })).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn optimized_matches_oracle(f in small_fbas()) {
        let a = Analyzer::new(&f);
        for kind in [FamilyKind::Quorums, FamilyKind::Blocking, FamilyKind::Splitting] {
            prop_assert_eq!(a.minimal_family(kind).unwrap(), oracle_enumerate(&f, kind).unwrap(), "{}", kind);
        }
    }

    #[test]
    fn families_are_antichains_and_consistent(f in small_fbas()) {
        let a = Analyzer::new(&f);
        let quorums = a.minimal_quorums().unwrap();
        for (i, x) in quorums.sets.iter().enumerate() {
            for y in &quorums.sets[i + 1..] {
                prop_assert!(!x.is_subset(y) && !y.is_subset(x));
                prop_assert!(is_quorum(&f, &x.union(y)), "union of quorums is a quorum");
            }
        }
        let qi = a.quorum_intersection().unwrap();
        let splitting = a.minimal_splitting_sets().unwrap();
        prop_assert_eq!(qi.holds, !splitting.sets.iter().any(NodeSet::is_empty));
        for s in &splitting.sets {
            for x in (0..f.len()).filter(|&x| f.is_active(x) && !s.contains(x)) {
                let keeps_witness = disjoint_quorum_pairs(&f, s)
                    .iter()
                    .any(|(q1, q2)| q1.iter().any(|&v| v != x) && q2.iter().any(|&v| v != x));
                if keeps_witness {
                    let mut bigger = s.clone();
                    bigger.insert(x);
                    prop_assert!(a.is_splitting(&bigger).unwrap(), "splitting survives adding {}", x);
                }
            }
        }
        for b in &a.minimal_blocking_sets().unwrap().sets {
            prop_assert!(a.is_blocking(b));
            for v in b.iter() {
                let mut smaller = b.clone();
                smaller.remove(v);
                prop_assert!(!a.is_blocking(&smaller));
            }
        }
    }

    #[test]
    fn restriction_never_adds_quorums(f in small_fbas()) {
        if let Ok(r) = f.restrict_to_active() {
            let n = r.len();
            for mask in 1u32..(1 << n) {
                let set = NodeSet::from_indices(n, (0..n).filter(|i| mask & (1 << i) != 0));
                if is_quorum(&r, &set) {
                    let lifted = f.node_set(r.ids_of(&set).iter().map(NodeId::as_str)).unwrap();
                    prop_assert!(is_quorum(&f, &lifted));
                }
            }
        }
    }

    #[test]
    fn slice_satisfaction_is_monotone(f in small_fbas(), a in any::<u8>(), b in any::<u8>()) {
        let n = f.len();
        let small = NodeSet::from_indices(n, (0..n).filter(|i| a & (1 << i) != 0));
        let big = small.union(&NodeSet::from_indices(n, (0..n).filter(|i| b & (1 << i) != 0)));
        for v in 0..n {
            if f.node_satisfied(v, &small) {
                prop_assert!(f.node_satisfied(v, &big));
            }
        }
    }

    #[test]
    fn self_inclusion_preserves_satisfaction(f in small_fbas()) {
        let n = f.len();
        for owner in 0..n {
            let before = f.quorum_set(owner);
            let after = before.normalize_self_inclusion(f.node(owner));
            for mask in 0u32..(1 << n) {
                if mask & (1 << owner) != 0 {
                    let set = NodeSet::from_indices(n, (0..n).filter(|i| mask & (1 << i) != 0));
                    prop_assert_eq!(f.is_slice_satisfied(before, &set), f.is_slice_satisfied(&after, &set));
                }
            }
        }
    }
}
