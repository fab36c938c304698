use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_bigint::BigUint;
use num_traits::One;

use super::{AogGraph, NodeId, NodeKind};
use crate::error::GrammarError;

/// Dependency order: syntactic children and lateral sources first.
///
/// Kahn's algorithm with ready nodes popped by smallest `(kind, i, j, m)` key,
/// so the order is a pure function of the graph.
pub fn evaluation_order(g: &AogGraph) -> Result<Vec<NodeId>, GrammarError> {
    let n = g.node_count();
    // pending[v] = number of dependencies of v not yet emitted
    let mut pending = vec![0usize; n];
    let mut dependents: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for e in g.edges() {
        let (dep, user) = match e.kind {
            super::EdgeKind::Syntactic => (e.to, e.from),
            super::EdgeKind::Lateral => (e.from, e.to),
        };
        pending[user] += 1;
        dependents[dep].push(user);
    }
    let mut ready: BinaryHeap<Reverse<(super::NodeKey, NodeId)>> = (0..n)
        .filter(|&v| pending[v] == 0)
        .map(|v| Reverse((g.key(v), v)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, v))) = ready.pop() {
        order.push(v);
        for &u in &dependents[v] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.push(Reverse((g.key(u), u)));
            }
        }
    }
    if order.len() != n {
        return Err(GrammarError::Cycle);
    }
    Ok(order)
}

/// Number of syntactic paths from the root to every node, indexed by node id.
pub fn count_paths(g: &AogGraph) -> Result<Vec<u64>, GrammarError> {
    let order = evaluation_order(g)?;
    let mut paths = vec![0u64; g.node_count()];
    paths[g.root()] = 1;
    // Reverse dependency order visits parents before children.
    for &v in order.iter().rev() {
        let here = paths[v];
        for &c in g.children(v) {
            paths[c] = paths[c]
                .checked_add(here)
                .ok_or(GrammarError::PathOverflow)?;
        }
    }
    Ok(paths)
}

/// Distinct parse trees of the block: each OR-node picks one child, each
/// AND-node takes both. Lateral edges are ignored.
pub fn count_parse_trees(g: &AogGraph) -> BigUint {
    let order = evaluation_order(g).expect("graph invariants guarantee acyclicity");
    let mut trees: Vec<BigUint> = vec![BigUint::one(); g.node_count()];
    for &v in &order {
        trees[v] = match g.key(v).kind {
            NodeKind::Terminal => BigUint::one(),
            NodeKind::Or => g.children(v).iter().map(|&c| trees[c].clone()).sum(),
            NodeKind::And => g.children(v).iter().map(|&c| trees[c].clone()).product(),
        };
    }
    trees[g.root()].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{build_full_aog, NodeKey};

    #[test]
    fn single_word_order() {
        let g = build_full_aog(1).unwrap();
        let order: Vec<String> = evaluation_order(&g)
            .unwrap()
            .iter()
            .map(|&v| g.key(v).to_string())
            .collect();
        assert_eq!(order, ["t(0,0)", "O(0,0)"]);
    }

    #[test]
    fn two_words_order_respects_dependencies() {
        let g = build_full_aog(2).unwrap();
        let order = evaluation_order(&g).unwrap();
        assert_eq!(order.len(), 7);
        let pos = |k: NodeKey| order.iter().position(|&v| g.key(v) == k).unwrap();
        assert!(pos(NodeKey::terminal(0, 0)) < pos(NodeKey::or(0, 0)));
        assert!(pos(NodeKey::terminal(1, 1)) < pos(NodeKey::or(1, 1)));
        assert!(pos(NodeKey::or(0, 0)) < pos(NodeKey::and(0, 1, 0)));
        assert!(pos(NodeKey::or(1, 1)) < pos(NodeKey::and(0, 1, 0)));
        assert!(pos(NodeKey::terminal(0, 1)) < pos(NodeKey::or(0, 1)));
        assert!(pos(NodeKey::and(0, 1, 0)) < pos(NodeKey::or(0, 1)));
    }

    #[test]
    fn path_counts_small() {
        let g = build_full_aog(2).unwrap();
        assert!(count_paths(&g).unwrap().iter().all(|&n| n == 1));
        let g = build_full_aog(3).unwrap();
        let paths = count_paths(&g).unwrap();
        assert_eq!(paths[g.root()], 1);
        assert_eq!(paths[g.id_of(&NodeKey::or(1, 1)).unwrap()], 2);
    }

    #[test]
    fn parse_trees_small() {
        let expect = [1u32, 2, 5, 15];
        for (n, want) in (1..=4).zip(expect) {
            assert_eq!(
                count_parse_trees(&build_full_aog(n).unwrap()),
                BigUint::from(want)
            );
        }
    }
}
