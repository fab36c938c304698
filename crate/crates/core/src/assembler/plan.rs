use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::BlockSpec;
use crate::error::ConfigError;
use crate::grammar::{build_block_graph, AogGraph, NodeKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeChannels {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channel range of the block input read by a Terminal-node.
    pub input_slice: Option<Range<usize>>,
}

/// Per-node channel assignment of one block, indexed by node id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub nodes: Vec<NodeChannels>,
}

impl ChannelPlan {
    /// Check concatenation and summation consistency against the graph.
    pub fn check(&self, g: &AogGraph, out_channels: usize) -> Result<(), String> {
        let n = g.primitive_size();
        for (id, key) in g.keys().iter().enumerate() {
            let here = &self.nodes[id];
            if here.out_channels != key.len() * out_channels / n {
                return Err(format!(
                    "{key}: output width {} breaks k*D/N",
                    here.out_channels
                ));
            }
            match key.kind {
                NodeKind::And => {
                    let sum: usize = g
                        .children(id)
                        .iter()
                        .map(|&c| self.nodes[c].out_channels)
                        .sum();
                    if sum != here.in_channels {
                        return Err(format!(
                            "{key}: concatenation of {sum} channels != {}",
                            here.in_channels
                        ));
                    }
                }
                NodeKind::Or => {
                    let lateral = g.lateral_source(id);
                    for &c in g.children(id).iter().chain(lateral.as_ref()) {
                        if self.nodes[c].out_channels != here.in_channels {
                            return Err(format!(
                                "{key}: summand {} has mismatched width",
                                g.key(c)
                            ));
                        }
                    }
                }
                NodeKind::Terminal => {}
            }
            if let Some(src) = g.lateral_source(id) {
                if self.nodes[src].out_channels != here.in_channels {
                    return Err(format!(
                        "{key}: lateral source {} has mismatched width",
                        g.key(src)
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Build the block graph for `spec` and assign channels to every node.
///
/// A node covering `k` words outputs `k * D_out / N` channels. Terminal
/// `t(i,j)` reads the overlapping input slice `[i*D_in/N, (j+1)*D_in/N)`.
pub fn plan_block(spec: &BlockSpec) -> Result<(AogGraph, ChannelPlan), ConfigError> {
    spec.validate()?;
    let laterals = spec.laterals.then_some(spec.lateral_start);
    let g = build_block_graph(spec.primitive_size, spec.prune, laterals)?;
    let n = spec.primitive_size;
    let word_in = spec.in_channels / n;
    let word_out = spec.out_channels / n;
    let nodes = g
        .keys()
        .iter()
        .map(|key| {
            let k = key.len();
            match key.kind {
                NodeKind::Terminal => NodeChannels {
                    in_channels: k * word_in,
                    out_channels: k * word_out,
                    input_slice: Some(key.start * word_in..(key.end + 1) * word_in),
                },
                _ => NodeChannels {
                    in_channels: k * word_out,
                    out_channels: k * word_out,
                    input_slice: None,
                },
            }
        })
        .collect();
    let plan = ChannelPlan { nodes };
    plan.check(&g, spec.out_channels)
        .map_err(|reason| ConfigError::Assembly {
            node: "block plan".into(),
            reason,
        })?;
    Ok((g, plan))
}
