use std::fmt::Write;

use serde::Serialize;

use super::{count_flops, count_params, depth_stats, DepthStats, FlopReport, ParamReport};
use crate::error::IrError;
use crate::grammar::{count_parse_trees, NodeKind};
use crate::ir::{NetworkIr, Shape};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockReport {
    pub index: usize,
    pub stage: usize,
    pub primitive_size: usize,
    pub terminal_nodes: usize,
    pub and_nodes: usize,
    pub or_nodes: usize,
    pub syntactic_edges: usize,
    pub lateral_edges: usize,
    /// Decimal string; the count is arbitrary precision.
    pub parse_trees: String,
    pub depth: DepthStats,
}

/// Deviation of the computed totals from a published model size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceComparison {
    pub model: String,
    pub published_params: f64,
    pub published_flops: f64,
    pub params_deviation: f64,
    /// Against `macs`: the published figures use the multiply-add convention.
    pub flops_deviation: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub model: Option<String>,
    pub params: ParamReport,
    pub flops: FlopReport,
    pub blocks: Vec<BlockReport>,
    pub reference: Option<ReferenceComparison>,
}

/// Published `(parameters, FLOPs)` of the ImageNet presets at 224x224.
pub fn published_reference(name: &str) -> Option<(f64, f64)> {
    match name {
        "aognet-12m" => Some((11.9e6, 2.36e9)),
        "aognet-40m" => Some((40.3e6, 8.86e9)),
        "aognet-60m" => Some((60.7e6, 14.36e9)),
        _ => None,
    }
}

pub fn analyze(ir: &NetworkIr, input: Shape) -> Result<AnalysisReport, IrError> {
    let params = count_params(ir);
    let flops = count_flops(ir, input)?;
    let blocks = ir
        .blocks
        .iter()
        .map(|b| {
            let g = &b.graph;
            let lateral_edges = g.lateral_edges().count();
            BlockReport {
                index: b.index,
                stage: b.stage,
                primitive_size: g.primitive_size(),
                terminal_nodes: g.count_kind(NodeKind::Terminal),
                and_nodes: g.count_kind(NodeKind::And),
                or_nodes: g.count_kind(NodeKind::Or),
                syntactic_edges: g.edges().len() - lateral_edges,
                lateral_edges,
                parse_trees: count_parse_trees(g).to_string(),
                depth: depth_stats(g),
            }
        })
        .collect();
    let nominal = ir.spec.input_size;
    let reference = ir
        .spec
        .name
        .as_deref()
        .and_then(|name| published_reference(name).map(|r| (name, r)))
        .filter(|_| input == Shape::new(3, 224, 224) && nominal == 224)
        .map(|(name, (p, f))| ReferenceComparison {
            model: name.to_string(),
            published_params: p,
            published_flops: f,
            params_deviation: params.total as f64 / p - 1.0,
            flops_deviation: flops.macs as f64 / f - 1.0,
            note: format!(
                "bottleneck inner width assumed out/{} and stem widths (C0/2, C0/2, C0); \
                 the published models' inner widths are not known, so totals are expected \
                 to differ by a few percent",
                ir.spec.bottleneck_ratio
            ),
        });
    Ok(AnalysisReport {
        model: ir.spec.name.clone(),
        params,
        flops,
        blocks,
        reference,
    })
}

fn human(x: f64) -> String {
    if x >= 1e9 {
        format!("{:.2}G", x / 1e9)
    } else if x >= 1e6 {
        format!("{:.2}M", x / 1e6)
    } else if x >= 1e3 {
        format!("{:.2}K", x / 1e3)
    } else {
        format!("{x}")
    }
}

impl AnalysisReport {
    /// Plain-text table for terminals.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let name = self.model.as_deref().unwrap_or("custom");
        writeln!(s, "model          {name}").unwrap();
        writeln!(s, "input          {}", self.flops.input).unwrap();
        writeln!(
            s,
            "params         {} ({})",
            self.params.total,
            human(self.params.total as f64)
        )
        .unwrap();
        writeln!(
            s,
            "FLOPs (MAC)    {} ({})",
            self.flops.macs,
            human(self.flops.macs as f64)
        )
        .unwrap();
        writeln!(
            s,
            "FLOPs (2*MAC)  {} ({})",
            self.flops.flops_2mac,
            human(self.flops.flops_2mac as f64)
        )
        .unwrap();
        writeln!(s, "elementwise    {}", self.flops.elementwise_ops).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "{:<10} {:>14} {:>16}", "section", "params", "MACs").unwrap();
        for (stage, p) in &self.params.by_stage {
            let m = self.flops.macs_by_stage.get(stage).copied().unwrap_or(0);
            writeln!(s, "{stage:<10} {p:>14} {m:>16}").unwrap();
        }
        writeln!(s).unwrap();
        writeln!(
            s,
            "{:<6} {:>5} {:>3} {:>4} {:>4} {:>4} {:>5} {:>5} {:>12} {:>5} {:>6} {:>5}",
            "block",
            "stage",
            "N",
            "T",
            "AND",
            "OR",
            "edges",
            "lat",
            "parse-trees",
            "depth",
            "mean",
            "eff"
        )
        .unwrap();
        for b in &self.blocks {
            writeln!(
                s,
                "{:<6} {:>5} {:>3} {:>4} {:>4} {:>4} {:>5} {:>5} {:>12} {:>5} {:>6.2} {:>5}",
                b.index,
                b.stage + 1,
                b.primitive_size,
                b.terminal_nodes,
                b.and_nodes,
                b.or_nodes,
                b.syntactic_edges,
                b.lateral_edges,
                b.parse_trees,
                b.depth.max_depth,
                b.depth.mean_depth,
                b.depth.effective_depth
            )
            .unwrap();
        }
        if let Some(r) = &self.reference {
            writeln!(s).unwrap();
            writeln!(
                s,
                "published {}: params {} ({:+.1}%), FLOPs {} ({:+.1}% vs MAC count)",
                r.model,
                human(r.published_params),
                100.0 * r.params_deviation,
                human(r.published_flops),
                100.0 * r.flops_deviation
            )
            .unwrap();
            writeln!(s, "note: {}", r.note).unwrap();
        }
        s
    }
}
