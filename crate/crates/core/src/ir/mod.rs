//! Flat, shape-annotated operator list an AOGNet compiles to.

mod dot;
mod json;

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::assembler::NetworkSpec;
use crate::error::IrError;
use crate::grammar::{AogGraph, NodeKey};

pub use dot::{graph_to_dot, ir_to_dot};
pub use json::{export_json, parse_json, FORMAT_VERSION};

pub type OpId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Weight of one skip or input contribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum Lambda {
    /// Exact rational `num / den`.
    PathRatio { num: u64, den: u64 },
    /// Trainable scalar, initialized to 1.
    Learnable,
}

impl Lambda {
    pub fn ratio(r: Ratio<u64>) -> Self {
        Lambda::PathRatio {
            num: *r.numer(),
            den: *r.denom(),
        }
    }

    pub fn as_ratio(&self) -> Option<Ratio<u64>> {
        match *self {
            Lambda::PathRatio { num, den } => Some(Ratio::new(num, den)),
            Lambda::Learnable => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OpKind {
    Input {
        shape: Shape,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Per-channel affine normalization; `zero_init` marks the last norm of a
    /// residual branch, whose scale starts at 0.
    Norm {
        channels: usize,
        zero_init: bool,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    /// Channel-axis concatenation in input order.
    Concat,
    /// Element-wise sum in input order.
    Sum,
    /// Channel range `start..end`.
    Slice {
        start: usize,
        end: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// Global average pool to `C x 1 x 1`.
    AvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Scale {
        lambda: Lambda,
    },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Input { .. } => "input",
            OpKind::Conv { .. } => "conv",
            OpKind::Norm { .. } => "norm",
            OpKind::Relu => "relu",
            OpKind::Dropout { .. } => "dropout",
            OpKind::Concat => "concat",
            OpKind::Sum => "sum",
            OpKind::Slice { .. } => "slice",
            OpKind::MaxPool { .. } => "maxpool",
            OpKind::AvgPool => "avgpool",
            OpKind::Linear { .. } => "linear",
            OpKind::Scale { .. } => "scale",
        }
    }

    /// Output shape produced from `inputs`, or a reason it is inconsistent.
    pub fn infer(&self, inputs: &[Shape]) -> Result<Shape, String> {
        let arity = |want: usize| -> Result<(), String> {
            if inputs.len() == want {
                Ok(())
            } else {
                Err(format!(
                    "{} expects {want} input(s), got {}",
                    self.name(),
                    inputs.len()
                ))
            }
        };
        match *self {
            OpKind::Input { shape } => {
                arity(0)?;
                Ok(shape)
            }
            OpKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                arity(1)?;
                let x = inputs[0];
                if x.channels != in_channels {
                    return Err(format!(
                        "conv expects {in_channels} input channels, got {}",
                        x.channels
                    ));
                }
                if stride == 0 || kernel == 0 || out_channels == 0 {
                    return Err("conv needs positive kernel, stride and width".into());
                }
                if x.height + 2 * padding < kernel || x.width + 2 * padding < kernel {
                    return Err(format!("input {x} smaller than kernel {kernel}"));
                }
                Ok(Shape::new(
                    out_channels,
                    (x.height + 2 * padding - kernel) / stride + 1,
                    (x.width + 2 * padding - kernel) / stride + 1,
                ))
            }
            OpKind::Norm { channels, .. } => {
                arity(1)?;
                if inputs[0].channels != channels {
                    return Err(format!(
                        "norm over {channels} channels got {}",
                        inputs[0].channels
                    ));
                }
                Ok(inputs[0])
            }
            OpKind::Relu | OpKind::Scale { .. } => {
                arity(1)?;
                Ok(inputs[0])
            }
            OpKind::Dropout { rate } => {
                arity(1)?;
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("drop rate {rate} outside [0, 1)"));
                }
                Ok(inputs[0])
            }
            OpKind::Concat => {
                let first = *inputs.first().ok_or("concat needs inputs")?;
                if inputs
                    .iter()
                    .any(|s| (s.height, s.width) != (first.height, first.width))
                {
                    return Err("concat inputs differ in spatial size".into());
                }
                Ok(Shape {
                    channels: inputs.iter().map(|s| s.channels).sum(),
                    ..first
                })
            }
            OpKind::Sum => {
                let first = *inputs.first().ok_or("sum needs inputs")?;
                if inputs.iter().any(|s| *s != first) {
                    return Err("sum inputs differ in shape".into());
                }
                Ok(first)
            }
            OpKind::Slice { start, end } => {
                arity(1)?;
                if start >= end || end > inputs[0].channels {
                    return Err(format!(
                        "slice {start}..{end} outside {} channels",
                        inputs[0].channels
                    ));
                }
                Ok(Shape {
                    channels: end - start,
                    ..inputs[0]
                })
            }
            OpKind::MaxPool { kernel, stride } => {
                arity(1)?;
                let x = inputs[0];
                if kernel == 0 || stride == 0 || x.height < kernel || x.width < kernel {
                    return Err(format!("max pool {kernel}/{stride} does not fit {x}"));
                }
                Ok(Shape::new(
                    x.channels,
                    (x.height - kernel) / stride + 1,
                    (x.width - kernel) / stride + 1,
                ))
            }
            OpKind::AvgPool => {
                arity(1)?;
                Ok(Shape::new(inputs[0].channels, 1, 1))
            }
            OpKind::Linear {
                in_features,
                out_features,
            } => {
                arity(1)?;
                if inputs[0].numel() != in_features {
                    return Err(format!(
                        "linear expects {in_features} features, got {}",
                        inputs[0].numel()
                    ));
                }
                Ok(Shape::new(out_features, 1, 1))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Input,
    Stem,
    Block,
    Head,
}

/// Part of a node transform an operator belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    /// Terminal input slice.
    Slice,
    /// Assembling the residual-branch or skip input from children.
    Gather,
    /// Conv/norm/relu/dropout of the bottleneck branch.
    Residual,
    /// Projection on the skip path.
    Skip,
    /// Final `ReLU(skip + branch)`.
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub section: Section,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<NodeRole>,
}

impl Provenance {
    pub fn section(section: Section) -> Self {
        Self {
            section,
            stage: None,
            block: None,
            node: None,
            role: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrOperator {
    pub id: OpId,
    pub op: OpKind,
    pub inputs: Vec<OpId>,
    pub shape: Shape,
    pub provenance: Provenance,
}

/// One compiled building block and its grammar graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub index: usize,
    pub stage: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub input: OpId,
    pub output: OpId,
    pub graph: AogGraph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkIr {
    pub spec: NetworkSpec,
    pub operators: Vec<IrOperator>,
    pub blocks: Vec<BlockInfo>,
}

impl NetworkIr {
    pub fn input_shape(&self) -> Shape {
        match self.operators.first().map(|o| &o.op) {
            Some(OpKind::Input { shape }) => *shape,
            _ => panic!("IR does not start with an input operator"),
        }
    }

    pub fn output(&self) -> &IrOperator {
        self.operators.last().expect("IR is non-empty")
    }

    /// Re-run shape inference with a different input shape.
    pub fn infer_shapes(&self, input: Shape) -> Result<Vec<Shape>, IrError> {
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.operators.len());
        for (pos, op) in self.operators.iter().enumerate() {
            if op.id != pos {
                return Err(IrError::Validation {
                    op: op.id,
                    reason: format!("id out of order at position {pos}"),
                });
            }
            let mut ins = Vec::with_capacity(op.inputs.len());
            for &i in &op.inputs {
                if i >= pos {
                    return Err(IrError::Validation {
                        op: op.id,
                        reason: format!("input {i} does not precede the operator"),
                    });
                }
                ins.push(shapes[i]);
            }
            let shape = match op.op {
                OpKind::Input { .. } if pos == 0 => input,
                _ => op
                    .op
                    .infer(&ins)
                    .map_err(|reason| IrError::Validation { op: op.id, reason })?,
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Check ordering, arity and that every declared shape matches inference.
    pub fn validate(&self) -> Result<(), IrError> {
        if !matches!(
            self.operators.first().map(|o| &o.op),
            Some(OpKind::Input { .. })
        ) {
            return Err(IrError::Validation {
                op: 0,
                reason: "first operator must be the input".into(),
            });
        }
        if let Some(op) = self
            .operators
            .iter()
            .skip(1)
            .find(|o| matches!(o.op, OpKind::Input { .. }))
        {
            return Err(IrError::Validation {
                op: op.id,
                reason: "only one input operator allowed".into(),
            });
        }
        for (pos, op) in self.operators.iter().enumerate() {
            if op.id != pos {
                return Err(IrError::Validation {
                    op: op.id,
                    reason: format!("id out of order at position {pos}"),
                });
            }
            if let Some(&i) = op.inputs.iter().find(|&&i| i >= pos) {
                return Err(IrError::Validation {
                    op: op.id,
                    reason: format!("input {i} does not precede the operator"),
                });
            }
            // Check against the declared input shapes so the blame lands on the
            // operator that is inconsistent, not on its consumers.
            let ins: Vec<Shape> = op.inputs.iter().map(|&i| self.operators[i].shape).collect();
            let shape = op
                .op
                .infer(&ins)
                .map_err(|reason| IrError::Validation { op: op.id, reason })?;
            if op.shape != shape {
                return Err(IrError::Validation {
                    op: op.id,
                    reason: format!("declared shape {} but inputs give {}", op.shape, shape),
                });
            }
        }
        for b in &self.blocks {
            if b.input >= self.operators.len() || b.output >= self.operators.len() {
                return Err(IrError::Validation {
                    op: b.output,
                    reason: format!("block {} out of range", b.index),
                });
            }
            if self.operators[b.output].shape.channels != b.out_channels {
                return Err(IrError::Validation {
                    op: b.output,
                    reason: format!(
                        "block {} output width differs from {}",
                        b.index, b.out_channels
                    ),
                });
            }
        }
        Ok(())
    }
}
