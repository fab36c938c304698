use std::collections::{BTreeMap, VecDeque};

use super::{AogEdge, AogGraph, EdgeKind, NodeId, NodeKey, NodeKind};
use crate::error::GrammarError;

/// Breadth-first construction of the full AOG over `primitive_size` words.
///
/// Popping an OR-node `O(i,j)` adds its terminal `t(i,j)` and one AND-node per
/// split; popping an AND-node adds its two OR children. Nodes are keyed
/// structurally so shared sub-sentences are created once.
pub fn build_full_aog(primitive_size: usize) -> Result<AogGraph, GrammarError> {
    if primitive_size == 0 {
        return Err(GrammarError::InvalidPrimitiveSize(primitive_size));
    }
    let mut nodes: Vec<NodeKey> = Vec::new();
    let mut index: BTreeMap<NodeKey, NodeId> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut queue = VecDeque::new();

    let mut intern = |key: NodeKey, nodes: &mut Vec<NodeKey>| -> (NodeId, bool) {
        if let Some(&id) = index.get(&key) {
            return (id, false);
        }
        let id = nodes.len();
        nodes.push(key);
        index.insert(key, id);
        (id, true)
    };

    let (root, _) = intern(NodeKey::or(0, primitive_size - 1), &mut nodes);
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        let key = nodes[v];
        match key.kind {
            NodeKind::Or => {
                let (t, _) = intern(NodeKey::terminal(key.start, key.end), &mut nodes);
                edges.push(AogEdge {
                    from: v,
                    to: t,
                    kind: EdgeKind::Syntactic,
                });
                for m in 0..key.len() - 1 {
                    let (a, fresh) = intern(NodeKey::and(key.start, key.end, m), &mut nodes);
                    edges.push(AogEdge {
                        from: v,
                        to: a,
                        kind: EdgeKind::Syntactic,
                    });
                    if fresh {
                        queue.push_back(a);
                    }
                }
            }
            NodeKind::And => {
                let (l, r) = key.and_children().expect("and-node");
                for child in [l, r] {
                    let (o, fresh) = intern(child, &mut nodes);
                    edges.push(AogEdge {
                        from: v,
                        to: o,
                        kind: EdgeKind::Syntactic,
                    });
                    if fresh {
                        queue.push_back(o);
                    }
                }
            }
            NodeKind::Terminal => {}
        }
    }
    AogGraph::from_parts(primitive_size, nodes, edges, false, None)
}
