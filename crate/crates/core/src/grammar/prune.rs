use std::collections::{BTreeMap, VecDeque};

use super::{AogEdge, AogGraph, EdgeKind, NodeId, NodeKey, NodeKind};
use crate::error::GrammarError;

/// Drop AND-children that mirror an already kept sibling.
///
/// Traverses the input breadth-first from the root. An OR-node keeps
/// `A(i,j;m)` only if no kept sibling has split `(j-i-1)-m`; self-mirrored
/// splits are kept. Nodes no longer reachable are discarded and the survivors
/// are renumbered in discovery order, which makes the operation idempotent.
pub fn prune_symmetric(g: &AogGraph) -> Result<AogGraph, GrammarError> {
    if g.has_laterals() {
        return Err(GrammarError::LateralsPresent);
    }
    let mut nodes: Vec<NodeKey> = Vec::new();
    let mut remap: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut queue = VecDeque::new();

    let mut visit = |old: NodeId, nodes: &mut Vec<NodeKey>| -> (NodeId, bool) {
        if let Some(&new) = remap.get(&old) {
            return (new, false);
        }
        let new = nodes.len();
        nodes.push(g.key(old));
        remap.insert(old, new);
        (new, true)
    };

    let (root, _) = visit(g.root(), &mut nodes);
    queue.push_back((g.root(), root));
    while let Some((old, new)) = queue.pop_front() {
        let key = g.key(old);
        let mut kept_splits: Vec<usize> = Vec::new();
        for &child in g.children(old) {
            let ck = g.key(child);
            if key.kind == NodeKind::Or && ck.kind == NodeKind::And {
                if kept_splits.contains(&ck.mirrored_split()) {
                    continue;
                }
                kept_splits.push(ck.split);
            }
            let (c, fresh) = visit(child, &mut nodes);
            edges.push(AogEdge {
                from: new,
                to: c,
                kind: EdgeKind::Syntactic,
            });
            if fresh {
                queue.push_back((child, c));
            }
        }
    }
    AogGraph::from_parts(g.primitive_size(), nodes, edges, true, None)
}
