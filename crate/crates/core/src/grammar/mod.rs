//! AND-OR grammar building blocks.
//!
//! A block of primitive size `N` treats its input channels as a sentence of
//! `N` words. Every sub-sentence `(i, j)` gets an OR-node, a Terminal-node
//! grounding the whole span, and one AND-node per binary split. Pruning and
//! lateral connections are applied on top of the full structure.

mod build;
mod lateral;
mod paths;
mod prune;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GrammarError;

pub use build::build_full_aog;
pub use lateral::{add_lateral_connections, LateralStart};
pub use paths::{count_parse_trees, count_paths, evaluation_order};
pub use prune::prune_symmetric;

pub type NodeId = usize;

/// Node kinds, ordered Terminal < And < Or for deterministic tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Terminal,
    And,
    Or,
}

/// Structural identity of a grammar node: `(kind, i, j, m)`.
///
/// `split` is the AND-node split index `m` (left child covers `i..=i+m`);
/// it is always 0 for Terminal and OR nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub kind: NodeKind,
    pub start: usize,
    pub end: usize,
    pub split: usize,
}

impl NodeKey {
    pub fn terminal(start: usize, end: usize) -> Self {
        Self {
            kind: NodeKind::Terminal,
            start,
            end,
            split: 0,
        }
    }

    pub fn or(start: usize, end: usize) -> Self {
        Self {
            kind: NodeKind::Or,
            start,
            end,
            split: 0,
        }
    }

    pub fn and(start: usize, end: usize, split: usize) -> Self {
        Self {
            kind: NodeKind::And,
            start,
            end,
            split,
        }
    }

    /// Number of words covered, `k = j - i + 1`.
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    /// The two OR-node children of an AND-node.
    pub fn and_children(&self) -> Option<(NodeKey, NodeKey)> {
        (self.kind == NodeKind::And).then(|| {
            let mid = self.start + self.split;
            (NodeKey::or(self.start, mid), NodeKey::or(mid + 1, self.end))
        })
    }

    /// Split index of the left-right mirrored decomposition.
    pub fn mirrored_split(&self) -> usize {
        self.end - self.start - 1 - self.split
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Terminal => write!(f, "t({},{})", self.start, self.end),
            NodeKind::Or => write!(f, "O({},{})", self.start, self.end),
            NodeKind::And => write!(f, "A({},{};{})", self.start, self.end, self.split),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Syntactic,
    Lateral,
}

/// Syntactic edges point parent -> child; lateral edges point source -> target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AogEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

/// One AOG building block.
///
/// Node ids are dense (`0..node_count()`) and follow the breadth-first
/// discovery order of construction, so id 0 is always the root `O(0, N-1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GraphRepr", try_from = "GraphRepr")]
pub struct AogGraph {
    primitive_size: usize,
    nodes: Vec<NodeKey>,
    edges: Vec<AogEdge>,
    root: NodeId,
    pruned: bool,
    lateral_start: Option<LateralStart>,
    index: BTreeMap<NodeKey, NodeId>,
    children: Vec<Vec<NodeId>>,
    parents: Vec<Vec<NodeId>>,
    lateral_source: Vec<Option<NodeId>>,
}

impl AogGraph {
    /// Assemble a graph from raw parts, checking every structural invariant
    /// that does not depend on how the graph was produced.
    pub(crate) fn from_parts(
        primitive_size: usize,
        nodes: Vec<NodeKey>,
        edges: Vec<AogEdge>,
        pruned: bool,
        lateral_start: Option<LateralStart>,
    ) -> Result<Self, GrammarError> {
        if primitive_size == 0 {
            return Err(GrammarError::InvalidPrimitiveSize(primitive_size));
        }
        let mut index = BTreeMap::new();
        for (id, key) in nodes.iter().enumerate() {
            if key.end >= primitive_size || key.start > key.end {
                return Err(GrammarError::Structure(format!(
                    "{key} lies outside 0..{primitive_size}"
                )));
            }
            if key.kind == NodeKind::And && key.split + 1 >= key.len() {
                return Err(GrammarError::Structure(format!(
                    "{key} has an invalid split"
                )));
            }
            if index.insert(*key, id).is_some() {
                return Err(GrammarError::Structure(format!("duplicate node {key}")));
            }
        }
        let root = match index.get(&NodeKey::or(0, primitive_size - 1)) {
            Some(&id) => id,
            None => return Err(GrammarError::Structure("missing root OR-node".into())),
        };
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        let mut lateral_source = vec![None; n];
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(GrammarError::Structure(format!(
                    "edge {} -> {} out of range",
                    e.from, e.to
                )));
            }
            let (a, b) = (nodes[e.from], nodes[e.to]);
            match e.kind {
                EdgeKind::Syntactic => {
                    let ok = match a.kind {
                        NodeKind::Or => {
                            (b.kind == NodeKind::Terminal || b.kind == NodeKind::And)
                                && (b.start, b.end) == (a.start, a.end)
                        }
                        NodeKind::And => {
                            let (l, r) = a.and_children().expect("and");
                            b == l || b == r
                        }
                        NodeKind::Terminal => false,
                    };
                    if !ok {
                        return Err(GrammarError::Structure(format!(
                            "invalid syntactic edge {a} -> {b}"
                        )));
                    }
                    children[e.from].push(e.to);
                    parents[e.to].push(e.from);
                }
                EdgeKind::Lateral => {
                    if a.kind != b.kind || a.kind == NodeKind::Terminal || a.len() != b.len() {
                        return Err(GrammarError::Structure(format!(
                            "invalid lateral edge {a} -> {b}"
                        )));
                    }
                    if lateral_source[e.to].replace(e.from).is_some() {
                        return Err(GrammarError::Structure(format!(
                            "{b} has more than one lateral source"
                        )));
                    }
                }
            }
        }
        for (id, key) in nodes.iter().enumerate() {
            if key.kind == NodeKind::And && children[id].len() != 2 {
                return Err(GrammarError::Structure(format!(
                    "{key} needs exactly two children"
                )));
            }
            if key.kind == NodeKind::Or
                && !children[id]
                    .iter()
                    .any(|&c| nodes[c].kind == NodeKind::Terminal)
            {
                return Err(GrammarError::Structure(format!(
                    "{key} has no terminal child"
                )));
            }
            if id != root && parents[id].is_empty() {
                return Err(GrammarError::Structure(format!(
                    "{key} is unreachable from the root"
                )));
            }
        }
        if !parents[root].is_empty() {
            return Err(GrammarError::Structure(
                "root has a syntactic parent".into(),
            ));
        }
        let graph = Self {
            primitive_size,
            nodes,
            edges,
            root,
            pruned,
            lateral_start,
            index,
            children,
            parents,
            lateral_source,
        };
        // Rejects cycles, including ones closed by lateral edges.
        evaluation_order(&graph)?;
        Ok(graph)
    }

    pub fn primitive_size(&self) -> usize {
        self.primitive_size
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn key(&self, id: NodeId) -> NodeKey {
        self.nodes[id]
    }

    pub fn keys(&self) -> &[NodeKey] {
        &self.nodes
    }

    pub fn id_of(&self, key: &NodeKey) -> Option<NodeId> {
        self.index.get(key).copied()
    }

    pub fn edges(&self) -> &[AogEdge] {
        &self.edges
    }

    /// Syntactic children in construction order (terminal first, then AND by split).
    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id]
    }

    pub fn lateral_source(&self, id: NodeId) -> Option<NodeId> {
        self.lateral_source[id]
    }

    pub fn is_pruned(&self) -> bool {
        self.pruned
    }

    /// Direction schedule used for the lateral edges, if any were added.
    pub fn lateral_start(&self) -> Option<LateralStart> {
        self.lateral_start
    }

    pub fn has_laterals(&self) -> bool {
        self.edges.iter().any(|e| e.kind == EdgeKind::Lateral)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|k| k.kind == kind).count()
    }

    pub fn lateral_edges(&self) -> impl Iterator<Item = &AogEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Lateral)
    }

    /// True when the two nodes have at least one syntactic parent in common.
    pub fn share_parent(&self, a: NodeId, b: NodeId) -> bool {
        self.parents[a].iter().any(|p| self.parents[b].contains(p))
    }

    /// Same graph with every lateral edge removed.
    pub fn without_laterals(&self) -> AogGraph {
        let edges = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Syntactic)
            .copied()
            .collect();
        AogGraph::from_parts(
            self.primitive_size,
            self.nodes.clone(),
            edges,
            self.pruned,
            None,
        )
        .expect("removing laterals keeps a valid graph")
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    primitive_size: usize,
    pruned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lateral_start: Option<LateralStart>,
    nodes: Vec<NodeKey>,
    edges: Vec<AogEdge>,
}

impl From<AogGraph> for GraphRepr {
    fn from(g: AogGraph) -> Self {
        Self {
            primitive_size: g.primitive_size,
            pruned: g.pruned,
            lateral_start: g.lateral_start,
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

impl TryFrom<GraphRepr> for AogGraph {
    type Error = GrammarError;

    fn try_from(r: GraphRepr) -> Result<Self, Self::Error> {
        AogGraph::from_parts(
            r.primitive_size,
            r.nodes,
            r.edges,
            r.pruned,
            r.lateral_start,
        )
    }
}

/// Build a block graph with the requested toggles: prune first, then laterals.
pub fn build_block_graph(
    primitive_size: usize,
    prune: bool,
    laterals: Option<LateralStart>,
) -> Result<AogGraph, GrammarError> {
    let mut g = build_full_aog(primitive_size)?;
    if prune {
        g = prune_symmetric(&g)?;
    }
    if let Some(start) = laterals {
        g = add_lateral_connections(&g, start);
    }
    Ok(g)
}
