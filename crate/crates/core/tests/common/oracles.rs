//! Brute-force references for grammar quantities.

use std::collections::BTreeSet;

use aog_forge::grammar::{AogGraph, NodeKey};

/// Every node reachable by expanding all productions of the span `(i, j)`.
pub fn expand_all(i: usize, j: usize, out: &mut BTreeSet<NodeKey>) {
    if !out.insert(NodeKey::or(i, j)) {
        return;
    }
    out.insert(NodeKey::terminal(i, j));
    for m in 0..j - i {
        out.insert(NodeKey::and(i, j, m));
        expand_all(i, i + m, out);
        expand_all(i + m + 1, j, out);
    }
}

/// Same expansion keeping only splits `m <= (k - 2) / 2`, i.e. one of each
/// mirror pair plus the self-symmetric split.
pub fn expand_pruned(i: usize, j: usize, out: &mut BTreeSet<NodeKey>) {
    if !out.insert(NodeKey::or(i, j)) {
        return;
    }
    out.insert(NodeKey::terminal(i, j));
    let k = j - i + 1;
    if k < 2 {
        return;
    }
    for m in 0..=(k - 2) / 2 {
        out.insert(NodeKey::and(i, j, m));
        expand_pruned(i, i + m, out);
        expand_pruned(i + m + 1, j, out);
    }
}

/// Number of distinct root-to-`v` paths over syntactic edges, by walking
/// every path explicitly.
pub fn enumerate_paths(g: &AogGraph) -> Vec<u64> {
    fn walk(g: &AogGraph, v: usize, hits: &mut [u64]) {
        hits[v] += 1;
        for &c in g.children(v) {
            walk(g, c, hits);
        }
    }
    let mut hits = vec![0; g.node_count()];
    walk(g, g.root(), &mut hits);
    hits
}

/// Acyclicity by three-colour DFS over all edges, independent of the library.
pub fn has_cycle(g: &AogGraph) -> bool {
    let n = g.node_count();
    let mut succ = vec![Vec::new(); n];
    for e in g.edges() {
        succ[e.from].push(e.to);
    }
    fn dfs(v: usize, succ: &[Vec<usize>], colour: &mut [u8]) -> bool {
        colour[v] = 1;
        for &w in &succ[v] {
            if colour[w] == 1 || (colour[w] == 0 && dfs(w, succ, colour)) {
                return true;
            }
        }
        colour[v] = 2;
        false
    }
    let mut colour = vec![0u8; n];
    (0..n).any(|v| colour[v] == 0 && dfs(v, &succ, &mut colour))
}
