//! Network specifications and their compilation into IR.

mod lower;
mod plan;
mod spec;

pub use lower::assemble_network;
pub use plan::{plan_block, ChannelPlan, NodeChannels};
pub use spec::{
    preset, BlockSpec, Head, LambdaPolicy, NetworkSpec, NodeOpSpec, StageSpec, Stem, PRESET_NAMES,
};
