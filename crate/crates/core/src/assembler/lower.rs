use num_rational::Ratio;

use super::{plan_block, BlockSpec, LambdaPolicy, NetworkSpec, Stem};
use crate::error::ConfigError;
use crate::grammar::{count_paths, evaluation_order, NodeId, NodeKind};
use crate::ir::{
    BlockInfo, IrOperator, Lambda, NetworkIr, NodeRole, OpId, OpKind, Provenance, Section, Shape,
};

struct Builder {
    ops: Vec<IrOperator>,
}

fn describe(p: &Provenance) -> String {
    match p.section {
        Section::Input => "input".into(),
        Section::Stem => "stem".into(),
        Section::Head => "head".into(),
        Section::Block => {
            let mut s = format!(
                "stage {} block {}",
                p.stage.unwrap_or(0) + 1,
                p.block.unwrap_or(0)
            );
            if let Some(node) = p.node {
                s.push_str(&format!(" node {node}"));
            }
            s
        }
    }
}

impl Builder {
    fn push(
        &mut self,
        op: OpKind,
        inputs: Vec<OpId>,
        provenance: Provenance,
    ) -> Result<OpId, ConfigError> {
        let shapes: Vec<Shape> = inputs.iter().map(|&i| self.ops[i].shape).collect();
        let shape = op.infer(&shapes).map_err(|reason| ConfigError::Assembly {
            node: describe(&provenance),
            reason,
        })?;
        let id = self.ops.len();
        self.ops.push(IrOperator {
            id,
            op,
            inputs,
            shape,
            provenance,
        });
        Ok(id)
    }

    fn shape(&self, id: OpId) -> Shape {
        self.ops[id].shape
    }

    /// `kind` over `parts`, or the single part itself.
    fn combine(
        &mut self,
        kind: OpKind,
        parts: Vec<OpId>,
        p: Provenance,
    ) -> Result<OpId, ConfigError> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        self.push(kind, parts, p)
    }

    fn scaled(&mut self, x: OpId, lambda: Lambda, p: Provenance) -> Result<OpId, ConfigError> {
        if lambda == (Lambda::PathRatio { num: 1, den: 1 }) {
            return Ok(x);
        }
        self.push(OpKind::Scale { lambda }, vec![x], p)
    }

    fn conv_norm(
        &mut self,
        x: OpId,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        zero_init: bool,
        p: Provenance,
    ) -> Result<OpId, ConfigError> {
        let in_channels = self.shape(x).channels;
        let c = self.push(
            OpKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding: kernel / 2,
            },
            vec![x],
            p,
        )?;
        self.push(
            OpKind::Norm {
                channels: out_channels,
                zero_init,
            },
            vec![c],
            p,
        )
    }

    fn conv_norm_relu(
        &mut self,
        x: OpId,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        p: Provenance,
    ) -> Result<OpId, ConfigError> {
        let n = self.conv_norm(x, out_channels, kernel, stride, false, p)?;
        self.push(OpKind::Relu, vec![n], p)
    }

    /// Bottleneck node transform `ReLU(skip + T(branch_in))`.
    fn transform(
        &mut self,
        spec: &BlockSpec,
        branch_in: OpId,
        skip_in: OpId,
        out_channels: usize,
        stride: usize,
        p: Provenance,
    ) -> Result<OpId, ConfigError> {
        let residual = Provenance {
            role: Some(NodeRole::Residual),
            ..p
        };
        let inner = spec.node_op.inner_width(out_channels);
        let mut t = self.conv_norm_relu(branch_in, inner, 1, 1, residual)?;
        t = self.conv_norm_relu(t, inner, spec.node_op.kernel, stride, residual)?;
        t = self.conv_norm(t, out_channels, 1, 1, true, residual)?;
        if spec.node_op.drop_rate > 0.0 {
            t = self.push(
                OpKind::Dropout {
                    rate: spec.node_op.drop_rate,
                },
                vec![t],
                residual,
            )?;
        }
        let mut skip = skip_in;
        if self.shape(skip_in).channels != out_channels || stride != 1 {
            let sp = Provenance {
                role: Some(NodeRole::Skip),
                ..p
            };
            skip = self.conv_norm(skip_in, out_channels, 1, stride, false, sp)?;
        }
        let out = Provenance {
            role: Some(NodeRole::Output),
            ..p
        };
        let s = self.push(OpKind::Sum, vec![skip, t], out)?;
        self.push(OpKind::Relu, vec![s], out)
    }

    fn stem(&mut self, spec: &NetworkSpec, input: OpId) -> Result<OpId, ConfigError> {
        let p = Provenance::section(Section::Stem);
        let c0 = spec.channels[0];
        let k = spec.kernel;
        Ok(match spec.stem {
            Stem::Imagenet => {
                let half = (c0 / 2).max(1);
                let mut x = self.conv_norm_relu(input, half, k, 2, p)?;
                x = self.conv_norm_relu(x, half, k, 1, p)?;
                x = self.conv_norm_relu(x, c0, k, 1, p)?;
                self.push(
                    OpKind::MaxPool {
                        kernel: 2,
                        stride: 2,
                    },
                    vec![x],
                    p,
                )?
            }
            Stem::Cifar => self.conv_norm_relu(input, c0, k, 1, p)?,
        })
    }

    fn block(
        &mut self,
        spec: &BlockSpec,
        stage: usize,
        index: usize,
        input: OpId,
    ) -> Result<BlockInfo, ConfigError> {
        let (g, plan) = plan_block(spec)?;
        let paths = count_paths(&g)?;
        let order = evaluation_order(&g)?;
        let base = Provenance {
            section: Section::Block,
            stage: Some(stage),
            block: Some(index),
            node: None,
            role: None,
        };
        let ratio =
            |parent: NodeId, child: NodeId| Lambda::ratio(Ratio::new(paths[parent], paths[child]));
        let learnable = spec.lambda_policy == LambdaPolicy::Learnable;
        let mut out: Vec<OpId> = vec![usize::MAX; g.node_count()];

        for v in order {
            let key = g.key(v);
            let p = Provenance {
                node: Some(key),
                ..base
            };
            let gather = Provenance {
                role: Some(NodeRole::Gather),
                ..p
            };
            let cout = plan.nodes[v].out_channels;
            let lateral = g.lateral_source(v);
            // Lateral contributes to the skip path only when it is not a sibling.
            let lateral_in_skip = lateral.filter(|&l| !g.share_parent(v, l));

            let result = match key.kind {
                NodeKind::Terminal => {
                    let range = plan.nodes[v].input_slice.clone().expect("terminal slice");
                    let sp = Provenance {
                        role: Some(NodeRole::Slice),
                        ..p
                    };
                    let x = self.push(
                        OpKind::Slice {
                            start: range.start,
                            end: range.end,
                        },
                        vec![input],
                        sp,
                    )?;
                    self.transform(spec, x, x, cout, spec.stride, p)?
                }
                NodeKind::And | NodeKind::Or => {
                    let (joiner, mut kids) = match key.kind {
                        NodeKind::And => (OpKind::Concat, g.children(v).to_vec()),
                        _ => (OpKind::Sum, g.children(v).to_vec()),
                    };
                    if key.kind == NodeKind::Or {
                        kids.sort_by_key(|&c| g.key(c));
                    }
                    let (branch, skip) = if learnable {
                        let mut parts = Vec::new();
                        for &c in &kids {
                            parts.push(self.scaled(out[c], Lambda::Learnable, gather)?);
                        }
                        let mut x = self.combine(joiner, parts, gather)?;
                        if let Some(l) = lateral {
                            let sl = self.scaled(out[l], Lambda::Learnable, gather)?;
                            x = self.push(OpKind::Sum, vec![x, sl], gather)?;
                        }
                        (x, x)
                    } else {
                        let raw: Vec<OpId> = kids.iter().map(|&c| out[c]).collect();
                        let mut skip_parts = Vec::new();
                        for &c in &kids {
                            skip_parts.push(self.scaled(out[c], ratio(v, c), gather)?);
                        }
                        let mut skip_lat = None;
                        if let Some(l) = lateral_in_skip {
                            skip_lat = Some(self.scaled(out[l], ratio(v, l), gather)?);
                        }
                        let unscaled = skip_parts == raw;
                        let same = unscaled && skip_lat == lateral.map(|l| out[l]);
                        let joined = self.combine(joiner.clone(), raw, gather)?;
                        let branch = match lateral {
                            Some(l) => self.push(OpKind::Sum, vec![joined, out[l]], gather)?,
                            None => joined,
                        };
                        let skip = if same {
                            branch
                        } else {
                            let joined = if unscaled {
                                joined
                            } else {
                                self.combine(joiner, skip_parts, gather)?
                            };
                            match skip_lat {
                                Some(sl) => self.push(OpKind::Sum, vec![joined, sl], gather)?,
                                None => joined,
                            }
                        };
                        (branch, skip)
                    };
                    self.transform(spec, branch, skip, cout, 1, p)?
                }
            };
            out[v] = result;
        }
        Ok(BlockInfo {
            index,
            stage,
            in_channels: spec.in_channels,
            out_channels: spec.out_channels,
            stride: spec.stride,
            input,
            output: out[g.root()],
            graph: g,
        })
    }
}

/// Compile a network spec: stem, stages of AOG blocks, pooled linear head.
pub fn assemble_network(spec: &NetworkSpec) -> Result<NetworkIr, ConfigError> {
    spec.validate()?;
    let mut b = Builder { ops: Vec::new() };
    let shape = Shape::new(spec.input_channels, spec.input_size, spec.input_size);
    let mut x = b.push(
        OpKind::Input { shape },
        vec![],
        Provenance::section(Section::Input),
    )?;
    x = b.stem(spec, x)?;
    let mut blocks = Vec::with_capacity(spec.block_count());
    for (s, stage) in spec.stages.iter().enumerate() {
        for i in 0..stage.blocks {
            let info = b.block(&spec.block_spec(s, i), s, blocks.len(), x)?;
            x = info.output;
            blocks.push(info);
        }
    }
    let head = Provenance::section(Section::Head);
    let pooled = b.push(OpKind::AvgPool, vec![x], head)?;
    let features = b.shape(pooled).numel();
    b.push(
        OpKind::Linear {
            in_features: features,
            out_features: spec.class_count,
        },
        vec![pooled],
        head,
    )?;
    Ok(NetworkIr {
        spec: spec.clone(),
        operators: b.ops,
        blocks,
    })
}
