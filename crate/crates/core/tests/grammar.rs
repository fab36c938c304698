//! Block-grammar properties checked against brute-force enumeration.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use aog_forge::grammar::{
    add_lateral_connections, build_block_graph, build_full_aog, count_parse_trees, count_paths,
    evaluation_order, prune_symmetric, AogGraph, EdgeKind, LateralStart, NodeKey, NodeKind,
};
use proptest::prelude::*;

use common::oracles::{enumerate_paths, expand_all, expand_pruned, has_cycle};

fn key_set(g: &AogGraph) -> BTreeSet<NodeKey> {
    g.keys().iter().copied().collect()
}

fn kind_counts(keys: &BTreeSet<NodeKey>) -> (usize, usize, usize) {
    let c = |k| keys.iter().filter(|n| n.kind == k).count();
    (c(NodeKind::Terminal), c(NodeKind::And), c(NodeKind::Or))
}

/// Materialize every parse tree below `key` as a string.
fn parse_trees(g: &AogGraph, v: usize) -> Vec<String> {
    let key = g.key(v);
    match key.kind {
        NodeKind::Terminal => vec![key.to_string()],
        NodeKind::Or => g
            .children(v)
            .iter()
            .flat_map(|&c| parse_trees(g, c))
            .collect(),
        NodeKind::And => {
            let kids = g.children(v);
            let left = parse_trees(g, kids[0]);
            let right = parse_trees(g, kids[1]);
            left.iter()
                .flat_map(|l| right.iter().map(move |r| format!("[{l} {r}]")))
                .collect()
        }
    }
}

#[test]
fn full_counts_match_enumeration_and_closed_form() {
    for n in 1..=8 {
        let g = build_full_aog(n).unwrap();
        let mut brute = BTreeSet::new();
        expand_all(0, n - 1, &mut brute);
        assert_eq!(key_set(&g), brute, "N={n}");
        let closed = (n * (n + 1) / 2, (n * n * n - n) / 6, n * (n + 1) / 2);
        assert_eq!(kind_counts(&brute), closed, "N={n}");
    }
}

#[test]
fn pruned_nodes_match_enumeration() {
    for n in 1..=8 {
        let g = prune_symmetric(&build_full_aog(n).unwrap()).unwrap();
        let mut brute = BTreeSet::new();
        expand_pruned(0, n - 1, &mut brute);
        assert_eq!(key_set(&g), brute, "N={n}");
    }
    let g = prune_symmetric(&build_full_aog(4).unwrap()).unwrap();
    assert_eq!(kind_counts(&key_set(&g)), (8, 5, 8));
}

#[test]
fn path_counts_match_enumeration() {
    for n in 1..=6 {
        for prune in [false, true] {
            for laterals in [None, Some(LateralStart::LeftToRight)] {
                let g = build_block_graph(n, prune, laterals).unwrap();
                assert_eq!(
                    count_paths(&g).unwrap(),
                    enumerate_paths(&g),
                    "N={n} prune={prune}"
                );
            }
        }
    }
}

#[test]
fn parse_tree_counts_match_enumeration() {
    for n in 1..=6 {
        for prune in [false, true] {
            let g = build_block_graph(n, prune, None).unwrap();
            let trees = parse_trees(&g, g.root());
            let distinct: BTreeSet<&String> = trees.iter().collect();
            assert_eq!(distinct.len(), trees.len());
            assert_eq!(
                count_parse_trees(&g).to_string(),
                trees.len().to_string(),
                "N={n} prune={prune}"
            );
        }
    }
}

#[test]
fn order_valid_for_all_toggles() {
    for n in 1..=8 {
        for prune in [false, true] {
            for laterals in [
                None,
                Some(LateralStart::LeftToRight),
                Some(LateralStart::RightToLeft),
            ] {
                let g = build_block_graph(n, prune, laterals).unwrap();
                assert!(!has_cycle(&g));
                let order = evaluation_order(&g).unwrap();
                assert_eq!(order.len(), g.node_count());
                let mut pos = vec![usize::MAX; g.node_count()];
                for (i, &v) in order.iter().enumerate() {
                    pos[v] = i;
                }
                for v in 0..g.node_count() {
                    for &c in g.children(v) {
                        assert!(pos[c] < pos[v]);
                    }
                    if let Some(l) = g.lateral_source(v) {
                        assert!(pos[l] < pos[v]);
                    }
                }
                assert_eq!(*order.last().unwrap(), g.root());
            }
        }
    }
}

#[test]
fn injected_cycle_rejected() {
    let g = build_block_graph(3, true, None).unwrap();
    let mut doc = serde_json::to_value(&g).unwrap();
    let t = g.id_of(&NodeKey::terminal(0, 0)).unwrap();
    let kind = doc["edges"][0]["kind"].clone();
    doc["edges"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!({ "from": t, "to": g.root(), "kind": kind }));
    assert!(serde_json::from_value::<AogGraph>(doc).is_err());
}

fn lateral_pairs(g: &AogGraph) -> BTreeSet<(NodeKey, NodeKey)> {
    g.lateral_edges()
        .map(|e| (g.key(e.from), g.key(e.to)))
        .collect()
}

/// Lateral edges rebuilt from the rule: nodes of one kind and span length,
/// ordered left to right, chained in alternating direction by level.
fn lateral_oracle(g: &AogGraph, start: LateralStart) -> BTreeSet<(NodeKey, NodeKey)> {
    let mut groups: BTreeMap<(NodeKind, usize), Vec<NodeKey>> = BTreeMap::new();
    for k in g.keys() {
        if k.kind != NodeKind::Terminal {
            groups.entry((k.kind, k.len())).or_default().push(*k);
        }
    }
    let mut edges = BTreeSet::new();
    for ((kind, len), mut nodes) in groups {
        nodes.sort_by_key(|k| (k.start, k.start + k.split + 1));
        let level = if kind == NodeKind::Or {
            2 * (len - 1)
        } else {
            2 * len - 3
        };
        let forward = (level % 2 == 0) == (start == LateralStart::LeftToRight);
        for w in nodes.windows(2) {
            edges.insert(if forward { (w[0], w[1]) } else { (w[1], w[0]) });
        }
    }
    edges
}

#[test]
fn laterals_match_oracle() {
    for n in 1..=8 {
        for prune in [false, true] {
            for start in [LateralStart::LeftToRight, LateralStart::RightToLeft] {
                let g = build_block_graph(n, prune, Some(start)).unwrap();
                assert_eq!(
                    lateral_pairs(&g),
                    lateral_oracle(&g, start),
                    "N={n} prune={prune} {start:?}"
                );
            }
        }
    }
    let g = build_block_graph(4, true, Some(LateralStart::LeftToRight)).unwrap();
    assert_eq!(g.lateral_edges().count(), 6);
    assert!(lateral_pairs(&g).contains(&(NodeKey::and(0, 3, 1), NodeKey::and(0, 3, 0))));
}

proptest! {
    #[test]
    fn structural_invariants(n in 1usize..=8, prune: bool, lc: bool, rtl: bool) {
        let start = if rtl { LateralStart::RightToLeft } else { LateralStart::LeftToRight };
        let g = build_block_graph(n, prune, lc.then_some(start)).unwrap();
        prop_assert_eq!(g.key(g.root()), NodeKey::or(0, n - 1));
        for v in 0..g.node_count() {
            let key = g.key(v);
            let kids: Vec<NodeKey> = g.children(v).iter().map(|&c| g.key(c)).collect();
            match key.kind {
                NodeKind::Terminal => prop_assert!(kids.is_empty()),
                NodeKind::And => {
                    let (l, r) = key.and_children().unwrap();
                    prop_assert_eq!(kids, vec![NodeKey::or(l.start, l.end), NodeKey::or(r.start, r.end)]);
                    prop_assert_eq!(l.end + 1, r.start);
                }
                NodeKind::Or => {
                    prop_assert!(kids.contains(&NodeKey::terminal(key.start, key.end)));
                    prop_assert!(kids.iter().all(|c| (c.start, c.end) == (key.start, key.end)));
                    prop_assert!(kids.iter().all(|c| c.kind != NodeKind::Or));
                }
            }
            if let Some(l) = g.lateral_source(v) {
                let lk = g.key(l);
                prop_assert_eq!(lk.kind, key.kind);
                prop_assert_eq!(lk.len(), key.len());
                prop_assert!(lk.kind != NodeKind::Terminal);
            }
        }
        prop_assert_eq!(g.has_laterals(), lc && n > 1);
        let back: AogGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(&back, &g);
    }

    #[test]
    fn pruning_idempotent_and_subset(n in 1usize..=8) {
        let full = build_full_aog(n).unwrap();
        let once = prune_symmetric(&full).unwrap();
        prop_assert_eq!(&prune_symmetric(&once).unwrap(), &once);
        prop_assert!(key_set(&once).is_subset(&key_set(&full)));
        prop_assert!(key_set(&once).contains(&NodeKey::or(0, n - 1)));
    }

    #[test]
    fn lateral_direction_flag_reverses_edges(n in 2usize..=8, prune: bool) {
        let base = build_block_graph(n, prune, None).unwrap();
        let ltr = add_lateral_connections(&base, LateralStart::LeftToRight);
        let rtl = add_lateral_connections(&base, LateralStart::RightToLeft);
        let flipped: BTreeSet<(NodeKey, NodeKey)> = lateral_pairs(&rtl).into_iter().map(|(a, b)| (b, a)).collect();
        prop_assert_eq!(lateral_pairs(&ltr), flipped);
        prop_assert!(ltr.edges().iter().filter(|e| e.kind == EdgeKind::Syntactic).count() == base.edges().len());
    }
}
