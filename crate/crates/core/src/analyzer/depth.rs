use serde::Serialize;

use crate::grammar::{evaluation_order, AogGraph, NodeKind};

/// Depth of a block measured in edges.
///
/// `height[v]` is the longest syntactic path from `v` down to a terminal;
/// `effective_height[v]` also follows lateral edges back to their sources.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthStats {
    pub max_depth: usize,
    pub mean_depth: f64,
    pub effective_depth: usize,
    #[serde(skip)]
    pub height: Vec<usize>,
    #[serde(skip)]
    pub effective_height: Vec<usize>,
}

pub fn depth_stats(g: &AogGraph) -> DepthStats {
    let order = evaluation_order(g).expect("graph invariants guarantee acyclicity");
    let n = g.node_count();
    let mut height = vec![0usize; n];
    let mut effective = vec![0usize; n];
    // (root-to-terminal paths below v, summed lengths of those paths)
    let mut paths = vec![(0u128, 0u128); n];
    for &v in &order {
        if g.key(v).kind == NodeKind::Terminal {
            paths[v] = (1, 0);
            continue;
        }
        let kids = g.children(v);
        height[v] = kids.iter().map(|&c| height[c] + 1).max().unwrap_or(0);
        effective[v] = kids
            .iter()
            .chain(g.lateral_source(v).as_ref())
            .map(|&c| effective[c] + 1)
            .max()
            .unwrap_or(0);
        paths[v] = kids.iter().fold((0, 0), |(count, len), &c| {
            let (cc, cl) = paths[c];
            (count + cc, len + cl + cc)
        });
    }
    let root = g.root();
    let (count, total) = paths[root];
    DepthStats {
        max_depth: height[root],
        mean_depth: total as f64 / count as f64,
        effective_depth: effective[root],
        height,
        effective_height: effective,
    }
}
