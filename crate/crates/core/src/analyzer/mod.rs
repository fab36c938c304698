//! Static analysis of compiled networks.

mod depth;
mod report;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::IrError;
use crate::ir::{IrOperator, Lambda, NetworkIr, OpKind, Section, Shape};

pub use depth::{depth_stats, DepthStats};
pub use report::{analyze, published_reference, AnalysisReport, BlockReport, ReferenceComparison};

/// Breakdown key for an operator: `input`, `stem`, `stage<k>` or `head`.
pub fn stage_label(op: &IrOperator) -> String {
    match op.provenance.section {
        Section::Input => "input".into(),
        Section::Stem => "stem".into(),
        Section::Head => "head".into(),
        Section::Block => format!("stage{}", op.provenance.stage.unwrap_or(0) + 1),
    }
}

/// Learnable scalars owned by one operator.
///
/// Convolutions carry no bias, norms carry scale and offset, linear layers
/// carry weight and bias, learnable lambdas one scalar each.
pub fn op_params(op: &OpKind) -> u64 {
    match *op {
        OpKind::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (in_channels * out_channels * kernel * kernel) as u64,
        OpKind::Norm { channels, .. } => 2 * channels as u64,
        OpKind::Linear {
            in_features,
            out_features,
        } => (in_features * out_features + out_features) as u64,
        OpKind::Scale {
            lambda: Lambda::Learnable,
        } => 1,
        _ => 0,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParamReport {
    pub total: u64,
    pub by_stage: BTreeMap<String, u64>,
    pub by_kind: BTreeMap<String, u64>,
}

pub fn count_params(ir: &NetworkIr) -> ParamReport {
    let mut r = ParamReport::default();
    for op in &ir.operators {
        let p = op_params(&op.op);
        if p == 0 {
            continue;
        }
        r.total += p;
        *r.by_stage.entry(stage_label(op)).or_default() += p;
        *r.by_kind.entry(op.op.name().to_string()).or_default() += p;
    }
    r
}

/// Work of one operator given its input and output shapes: `(macs, elementwise)`.
///
/// Convolutions and linear layers count multiply-accumulates; norms,
/// activations, pools, sums, scales and linear biases count one op per output
/// element. Slices, concatenations and inference-mode dropout are free.
pub fn op_work(op: &OpKind, inputs: &[Shape], out: Shape) -> (u64, u64) {
    let numel = out.numel() as u64;
    match *op {
        OpKind::Conv {
            in_channels,
            kernel,
            ..
        } => (numel * (in_channels * kernel * kernel) as u64, 0),
        OpKind::Linear {
            in_features,
            out_features,
        } => ((in_features * out_features) as u64, out_features as u64),
        OpKind::Norm { .. }
        | OpKind::Relu
        | OpKind::Scale { .. }
        | OpKind::MaxPool { .. }
        | OpKind::AvgPool => (0, numel),
        OpKind::Sum => (0, numel * inputs.len().saturating_sub(1) as u64),
        OpKind::Input { .. } | OpKind::Slice { .. } | OpKind::Concat | OpKind::Dropout { .. } => {
            (0, 0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    pub input: Shape,
    /// Multiply-accumulates of convolutions and linear layers.
    pub macs: u64,
    /// `2 * macs`.
    pub flops_2mac: u64,
    pub elementwise_ops: u64,
    /// `2 * macs + elementwise_ops`.
    pub total_ops: u64,
    pub macs_by_stage: BTreeMap<String, u64>,
}

pub fn count_flops(ir: &NetworkIr, input: Shape) -> Result<FlopReport, IrError> {
    let shapes = ir.infer_shapes(input)?;
    let mut macs = 0;
    let mut elementwise = 0;
    let mut by_stage: BTreeMap<String, u64> = BTreeMap::new();
    for op in &ir.operators {
        let ins: Vec<Shape> = op.inputs.iter().map(|&i| shapes[i]).collect();
        let (m, e) = op_work(&op.op, &ins, shapes[op.id]);
        macs += m;
        elementwise += e;
        if m > 0 {
            *by_stage.entry(stage_label(op)).or_default() += m;
        }
    }
    Ok(FlopReport {
        input,
        macs,
        flops_2mac: 2 * macs,
        elementwise_ops: elementwise,
        total_ops: 2 * macs + elementwise,
        macs_by_stage: by_stage,
    })
}
