use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::grammar::LateralStart;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaPolicy {
    /// Fixed skip weights `n(parent) / n(child)` removing path double-counting.
    #[default]
    PathRatio,
    /// One trainable scalar per incoming contribution, initialized to 1.
    Learnable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stem {
    /// Three 3x3 conv+norm+relu layers (first with stride 2), then 2x2 max pool.
    Imagenet,
    /// A single 3x3 conv+norm+relu.
    Cifar,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    #[default]
    AvgpoolLinear,
}

/// Bottleneck node transform `ReLU(skip + T(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeOpSpec {
    pub bottleneck_ratio: usize,
    pub kernel: usize,
    pub drop_rate: f64,
}

impl Default for NodeOpSpec {
    fn default() -> Self {
        Self {
            bottleneck_ratio: 4,
            kernel: 3,
            drop_rate: 0.0,
        }
    }
}

impl NodeOpSpec {
    pub fn inner_width(&self, out_channels: usize) -> usize {
        let w = (out_channels as f64 / self.bottleneck_ratio as f64).round() as usize;
        w.max(1)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.bottleneck_ratio == 0 {
            return Err(ConfigError::Invalid(
                "bottleneck ratio must be positive".into(),
            ));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!(
                "kernel must be odd, got {}",
                self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(ConfigError::Invalid(format!(
                "drop rate {} outside [0, 1)",
                self.drop_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub primitive_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub prune: bool,
    pub laterals: bool,
    #[serde(default)]
    pub lateral_start: LateralStart,
    #[serde(default)]
    pub lambda_policy: LambdaPolicy,
    #[serde(default)]
    pub node_op: NodeOpSpec,
}

impl BlockSpec {
    pub fn new(primitive_size: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            primitive_size,
            in_channels,
            out_channels,
            stride: 1,
            prune: true,
            laterals: true,
            lateral_start: LateralStart::default(),
            lambda_policy: LambdaPolicy::default(),
            node_op: NodeOpSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.primitive_size;
        if n == 0 {
            return Err(ConfigError::Invalid(
                "primitive size must be at least 1".into(),
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(ConfigError::Invalid(
                "channel counts must be positive".into(),
            ));
        }
        for (what, c) in [("input", self.in_channels), ("output", self.out_channels)] {
            if c % n != 0 {
                return Err(ConfigError::Invalid(format!(
                    "{what} channels {c} not divisible by primitive size {n}"
                )));
            }
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(ConfigError::Invalid(format!(
                "stride must be 1 or 2, got {}",
                self.stride
            )));
        }
        self.node_op.validate()
    }
}

/// One stage: `blocks` copies of a primitive-size-`primitive_size` block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub primitive_size: usize,
    pub blocks: usize,
    #[serde(default)]
    pub drop_rate: f64,
}

fn default_true() -> bool {
    true
}

fn default_ratio() -> usize {
    4
}

fn default_kernel() -> usize {
    3
}

fn default_input_channels() -> usize {
    3
}

/// Whole-network configuration; also the CLI config-file schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub stages: Vec<StageSpec>,
    /// Stem output followed by each stage's output width.
    pub channels: Vec<usize>,
    pub stem: Stem,
    #[serde(default)]
    pub head: Head,
    pub class_count: usize,
    #[serde(default = "default_input_channels")]
    pub input_channels: usize,
    /// Nominal square input resolution the IR is annotated for.
    pub input_size: usize,
    #[serde(default = "default_true")]
    pub prune: bool,
    #[serde(default = "default_true")]
    pub laterals: bool,
    #[serde(default)]
    pub lateral_start: LateralStart,
    #[serde(default)]
    pub lambda_policy: LambdaPolicy,
    #[serde(default = "default_ratio")]
    pub bottleneck_ratio: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.stages.is_empty() {
            return Err(ConfigError::Invalid(
                "at least one stage is required".into(),
            ));
        }
        if self.channels.len() != self.stages.len() + 1 {
            return Err(ConfigError::Invalid(format!(
                "channel tuple has {} entries, expected stage count + 1 = {}",
                self.channels.len(),
                self.stages.len() + 1
            )));
        }
        if self.class_count == 0 || self.input_channels == 0 {
            return Err(ConfigError::Invalid(
                "class count and input channels must be positive".into(),
            ));
        }
        if self.input_size == 0 {
            return Err(ConfigError::Invalid("input size must be positive".into()));
        }
        for (s, stage) in self.stages.iter().enumerate() {
            if stage.blocks == 0 {
                return Err(ConfigError::Invalid(format!(
                    "stage {} has no blocks",
                    s + 1
                )));
            }
            for b in 0..stage.blocks {
                self.block_spec(s, b).validate().map_err(|e| match e {
                    ConfigError::Invalid(msg) => {
                        ConfigError::Invalid(format!("stage {} block {}: {msg}", s + 1, b + 1))
                    }
                    other => other,
                })?;
            }
        }
        Ok(())
    }

    /// Resolved spec of block `block` in stage `stage` (both 0-based).
    pub fn block_spec(&self, stage: usize, block: usize) -> BlockSpec {
        let st = &self.stages[stage];
        let first = block == 0;
        BlockSpec {
            primitive_size: st.primitive_size,
            in_channels: if first {
                self.channels[stage]
            } else {
                self.channels[stage + 1]
            },
            out_channels: self.channels[stage + 1],
            stride: if first && stage > 0 { 2 } else { 1 },
            prune: self.prune,
            laterals: self.laterals,
            lateral_start: self.lateral_start,
            lambda_policy: self.lambda_policy,
            node_op: NodeOpSpec {
                bottleneck_ratio: self.bottleneck_ratio,
                kernel: self.kernel,
                drop_rate: st.drop_rate,
            },
        }
    }

    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| s.blocks).sum()
    }
}

pub const PRESET_NAMES: [&str; 4] = ["aognet-12m", "aognet-40m", "aognet-60m", "tiny-cifar"];

fn imagenet(name: &str, stages: [(usize, usize); 4], channels: [usize; 5]) -> NetworkSpec {
    NetworkSpec {
        name: Some(name.to_string()),
        stages: stages
            .iter()
            .enumerate()
            .map(|(s, &(n, b))| StageSpec {
                primitive_size: n,
                blocks: b,
                drop_rate: if s >= 2 { 0.1 } else { 0.0 },
            })
            .collect(),
        channels: channels.to_vec(),
        stem: Stem::Imagenet,
        head: Head::AvgpoolLinear,
        class_count: 1000,
        input_channels: 3,
        input_size: 224,
        prune: true,
        laterals: true,
        lateral_start: LateralStart::LeftToRight,
        lambda_policy: LambdaPolicy::PathRatio,
        bottleneck_ratio: 4,
        kernel: 3,
    }
}

/// Published ImageNet configurations plus a desk-scale CIFAR stand-in.
pub fn preset(name: &str) -> Result<NetworkSpec, ConfigError> {
    let spec = match name {
        "aognet-12m" => imagenet(
            name,
            [(2, 2), (4, 1), (4, 3), (2, 1)],
            [32, 128, 256, 512, 936],
        ),
        "aognet-40m" => imagenet(
            name,
            [(2, 2), (4, 1), (4, 4), (2, 1)],
            [60, 240, 448, 968, 1440],
        ),
        "aognet-60m" => imagenet(
            name,
            [(2, 2), (4, 2), (4, 5), (2, 1)],
            [64, 256, 512, 1160, 1400],
        ),
        "tiny-cifar" => NetworkSpec {
            stages: vec![
                StageSpec {
                    primitive_size: 2,
                    blocks: 1,
                    drop_rate: 0.0,
                },
                StageSpec {
                    primitive_size: 2,
                    blocks: 1,
                    drop_rate: 0.1,
                },
                StageSpec {
                    primitive_size: 2,
                    blocks: 1,
                    drop_rate: 0.1,
                },
            ],
            channels: vec![8, 16, 32, 64],
            stem: Stem::Cifar,
            class_count: 10,
            input_size: 32,
            ..imagenet(name, [(2, 1); 4], [8; 5])
        },
        _ => {
            return Err(ConfigError::UnknownPreset(
                name.to_string(),
                PRESET_NAMES.join(", "),
            ))
        }
    };
    Ok(spec)
}
