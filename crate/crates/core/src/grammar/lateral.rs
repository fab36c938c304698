use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AogEdge, AogGraph, EdgeKind, NodeId, NodeKind};

/// Direction of the lateral chain on the lowest level (OR-nodes of length 1).
///
/// Levels are visited bottom-up as `OR k=1, AND k=2, OR k=2, AND k=3, ...`
/// and the direction flips from one level to the next.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum LateralStart {
    #[default]
    LeftToRight,
    RightToLeft,
}

impl LateralStart {
    fn flipped(self) -> Self {
        match self {
            Self::LeftToRight => Self::RightToLeft,
            Self::RightToLeft => Self::LeftToRight,
        }
    }
}

/// Position of a `(kind, k)` group in the bottom-up level schedule.
fn level(kind: NodeKind, len: usize) -> usize {
    match kind {
        NodeKind::Or => 2 * (len - 1),
        NodeKind::And => 2 * len - 3,
        NodeKind::Terminal => unreachable!("terminals carry no laterals"),
    }
}

/// Chain same-kind, same-length nodes with lateral edges.
///
/// OR groups are sorted by start index, AND groups by the start indices of
/// their `(left, right)` children. Any lateral edges already present are
/// replaced.
pub fn add_lateral_connections(g: &AogGraph, start: LateralStart) -> AogGraph {
    let mut groups: BTreeMap<(NodeKind, usize), Vec<((usize, usize), NodeId)>> = BTreeMap::new();
    for (id, key) in g.keys().iter().enumerate() {
        let sort_key = match key.kind {
            NodeKind::Terminal => continue,
            NodeKind::Or => (key.start, 0),
            NodeKind::And => (key.start, key.start + key.split + 1),
        };
        groups
            .entry((key.kind, key.len()))
            .or_default()
            .push((sort_key, id));
    }

    let mut edges: Vec<AogEdge> = g
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Syntactic)
        .copied()
        .collect();
    for ((kind, len), mut members) in groups {
        members.sort();
        let dir = if level(kind, len).is_multiple_of(2) {
            start
        } else {
            start.flipped()
        };
        for pair in members.windows(2) {
            let (a, b) = (pair[0].1, pair[1].1);
            let (from, to) = match dir {
                LateralStart::LeftToRight => (a, b),
                LateralStart::RightToLeft => (b, a),
            };
            edges.push(AogEdge {
                from,
                to,
                kind: EdgeKind::Lateral,
            });
        }
    }
    AogGraph::from_parts(
        g.primitive_size(),
        g.keys().to_vec(),
        edges,
        g.is_pruned(),
        Some(start),
    )
    .expect("same-level lateral chains keep the graph acyclic")
}
