//! Reference executor: a slow, direct evaluation of [`NetworkIr`](crate::ir::NetworkIr)
//! used to validate the compiled graph, with reverse-mode gradients and a
//! finite-difference checker. Normalization runs in inference mode and
//! dropout is the identity.

mod backward;
mod dump;
mod forward;
mod gradcheck;
mod kernels;
mod tensor;
mod weights;

pub use backward::{backward, Backward, Gradients, Loss};
pub use dump::{dump_weights, load_weights, EntryKind, IndexEntry, WeightIndex, WEIGHTS_FORMAT};
pub use forward::{calibrate_norms, forward, ExecOptions, NORM_EPS};
pub use gradcheck::{finite_diff_gradcheck, GradcheckOptions, GradcheckReport, Probe};
pub use tensor::Tensor;
pub use weights::{
    expected_params, init_weights, TensorMap, WeightStore, BETA, BIAS, GAMMA, KERNEL, LAMBDA,
    RUNNING_MEAN, RUNNING_VAR, WEIGHT,
};
