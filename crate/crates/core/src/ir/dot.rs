use std::fmt::Write;

use super::{NetworkIr, OpKind};
use crate::grammar::{AogGraph, EdgeKind, NodeKind};

/// Graphviz rendering of one building block.
///
/// Terminal-nodes are boxes, AND-nodes ellipses, OR-nodes double circles.
/// Syntactic edges are solid and lateral edges dashed.
pub fn graph_to_dot(g: &AogGraph) -> String {
    let mut out = String::new();
    writeln!(out, "digraph aog {{").unwrap();
    writeln!(out, "  rankdir=TB;").unwrap();
    for (id, key) in g.keys().iter().enumerate() {
        let shape = match key.kind {
            NodeKind::Terminal => "box",
            NodeKind::And => "ellipse",
            NodeKind::Or => "doublecircle",
        };
        writeln!(out, "  n{id} [label=\"{key}\", shape={shape}];").unwrap();
    }
    for e in g.edges() {
        match e.kind {
            EdgeKind::Syntactic => writeln!(out, "  n{} -> n{};", e.from, e.to),
            EdgeKind::Lateral => {
                writeln!(
                    out,
                    "  n{} -> n{} [style=dashed, color=\"deeppink\", constraint=false];",
                    e.from, e.to
                )
            }
        }
        .unwrap();
    }
    out.push_str("}\n");
    out
}

/// Graphviz rendering of a whole IR, one node per operator.
pub fn ir_to_dot(ir: &NetworkIr) -> String {
    let mut out = String::new();
    writeln!(out, "digraph ir {{").unwrap();
    writeln!(out, "  rankdir=TB;").unwrap();
    for op in &ir.operators {
        let detail = match &op.op {
            OpKind::Conv { kernel, stride, .. } => format!(" {kernel}x{kernel}/{stride}"),
            OpKind::Slice { start, end } => format!(" [{start}:{end})"),
            OpKind::Scale { lambda } => match lambda.as_ratio() {
                Some(r) => format!(" {}/{}", r.numer(), r.denom()),
                None => " learnable".to_string(),
            },
            _ => String::new(),
        };
        let node = op
            .provenance
            .node
            .map(|k| format!("\\n{k}"))
            .unwrap_or_default();
        writeln!(
            out,
            "  op{} [label=\"#{} {}{}\\n{}{}\", shape=box];",
            op.id,
            op.id,
            op.op.name(),
            detail,
            op.shape,
            node
        )
        .unwrap();
    }
    for op in &ir.operators {
        for &i in &op.inputs {
            writeln!(out, "  op{i} -> op{};", op.id).unwrap();
        }
    }
    out.push_str("}\n");
    out
}
