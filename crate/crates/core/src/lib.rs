//! Compile AND-OR grammar building blocks into AOGNet computation graphs.
//!
//! The pipeline is: [`grammar`] builds, prunes and wires one building block;
//! [`assembler`] resolves a [`NetworkSpec`] into a flat [`NetworkIr`];
//! [`ir`] serializes it; [`analyzer`] counts parameters and FLOPs; and
//! [`executor`] runs it numerically and checks gradients.
//!
//! Numerical code is generic over the scalar type (see [`Scalar`]); the
//! aliases below fix the common choices.

pub mod analyzer;
pub mod assembler;
pub mod checks;
pub mod error;
pub mod executor;
pub mod fsutil;
pub mod grammar;
pub mod ir;
mod scalar;

pub use assembler::{assemble_network, preset, NetworkSpec};
pub use error::Error;
pub use grammar::AogGraph;
pub use ir::NetworkIr;
pub use scalar::Scalar;

/// Exact path-ratio weight.
pub type PathRatio = num_rational::Ratio<u64>;

pub type Tensor64 = executor::Tensor<f64>;
pub type Tensor32 = executor::Tensor<f32>;
