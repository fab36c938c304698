use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ExecError;
use crate::ir::{Lambda, NetworkIr, OpId, OpKind};

pub const KERNEL: &str = "kernel";
pub const GAMMA: &str = "gamma";
pub const BETA: &str = "beta";
pub const WEIGHT: &str = "weight";
pub const BIAS: &str = "bias";
pub const LAMBDA: &str = "lambda";
pub const RUNNING_MEAN: &str = "running_mean";
pub const RUNNING_VAR: &str = "running_var";

pub type TensorMap = BTreeMap<String, Vec<f64>>;

/// Learnable tensors keyed by operator id and tensor name, plus optional
/// normalization statistics (not counted as parameters).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    pub seed: u64,
    pub params: BTreeMap<OpId, TensorMap>,
    pub buffers: BTreeMap<OpId, TensorMap>,
}

/// Names and lengths of the learnable tensors an operator owns.
pub fn expected_params(op: &OpKind) -> Vec<(&'static str, usize)> {
    match *op {
        OpKind::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } => {
            vec![(KERNEL, out_channels * in_channels * kernel * kernel)]
        }
        OpKind::Norm { channels, .. } => vec![(GAMMA, channels), (BETA, channels)],
        OpKind::Linear {
            in_features,
            out_features,
        } => {
            vec![(WEIGHT, out_features * in_features), (BIAS, out_features)]
        }
        OpKind::Scale {
            lambda: Lambda::Learnable,
        } => vec![(LAMBDA, 1)],
        _ => Vec::new(),
    }
}

impl WeightStore {
    pub fn get(&self, op: OpId, name: &str) -> Result<&[f64], ExecError> {
        self.params
            .get(&op)
            .and_then(|m| m.get(name))
            .map(Vec::as_slice)
            .ok_or_else(|| ExecError::MissingWeight {
                op,
                name: name.to_string(),
            })
    }

    pub fn get_mut(&mut self, op: OpId, name: &str) -> Option<&mut Vec<f64>> {
        self.params.get_mut(&op).and_then(|m| m.get_mut(name))
    }

    pub fn buffer(&self, op: OpId, name: &str) -> Option<&[f64]> {
        self.buffers
            .get(&op)
            .and_then(|m| m.get(name))
            .map(Vec::as_slice)
    }

    /// Supply inference statistics for a norm operator.
    pub fn set_statistics(&mut self, op: OpId, mean: Vec<f64>, var: Vec<f64>) {
        let m = self.buffers.entry(op).or_default();
        m.insert(RUNNING_MEAN.into(), mean);
        m.insert(RUNNING_VAR.into(), var);
    }

    /// Number of learnable scalars instantiated.
    pub fn scalar_count(&self) -> u64 {
        self.params
            .values()
            .flat_map(|m| m.values())
            .map(|v| v.len() as u64)
            .sum()
    }

    /// Every learnable operator has exactly its tensors; nothing else is stored.
    pub fn check_against(&self, ir: &NetworkIr) -> Result<(), ExecError> {
        let mut seen = 0;
        for op in &ir.operators {
            let want = expected_params(&op.op);
            if want.is_empty() {
                continue;
            }
            seen += 1;
            let have = self
                .params
                .get(&op.id)
                .ok_or_else(|| ExecError::Weights(format!("operator {} has no weights", op.id)))?;
            if have.len() != want.len() {
                return Err(ExecError::Weights(format!(
                    "operator {} has unexpected tensors",
                    op.id
                )));
            }
            for (name, len) in want {
                match have.get(name) {
                    Some(v) if v.len() == len => {}
                    Some(v) => {
                        return Err(ExecError::Weights(format!(
                            "operator {} tensor `{name}` has {} values, expected {len}",
                            op.id,
                            v.len()
                        )))
                    }
                    None => {
                        return Err(ExecError::MissingWeight {
                            op: op.id,
                            name: name.into(),
                        })
                    }
                }
            }
        }
        if seen != self.params.len() {
            return Err(ExecError::Weights(
                "store holds weights for non-learnable operators".into(),
            ));
        }
        for (&op, m) in &self.buffers {
            let channels = match ir.operators.get(op).map(|o| &o.op) {
                Some(OpKind::Norm { channels, .. }) => *channels,
                _ => {
                    return Err(ExecError::Weights(format!(
                        "statistics for non-norm operator {op}"
                    )))
                }
            };
            if m.values().any(|v| v.len() != channels) {
                return Err(ExecError::Weights(format!(
                    "statistics of operator {op} have the wrong length"
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic initialization.
///
/// Conv kernels are uniform in `±sqrt(6 / fan_in)`, linear weights and
/// biases uniform in `±1/sqrt(fan_in)`. Norm offsets start at 0 and scales at
/// 1, except the last norm of every residual branch whose scale starts at 0.
/// Learnable lambdas start at 1.
pub fn init_weights(ir: &NetworkIr, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    for op in &ir.operators {
        let mut m = TensorMap::new();
        match op.op {
            OpKind::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let fan_in = (in_channels * kernel * kernel) as f64;
                let bound = (6.0 / fan_in).sqrt();
                let n = out_channels * in_channels * kernel * kernel;
                m.insert(
                    KERNEL.into(),
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
                );
            }
            OpKind::Norm {
                channels,
                zero_init,
            } => {
                m.insert(
                    GAMMA.into(),
                    vec![if zero_init { 0.0 } else { 1.0 }; channels],
                );
                m.insert(BETA.into(), vec![0.0; channels]);
            }
            OpKind::Linear {
                in_features,
                out_features,
            } => {
                let bound = 1.0 / (in_features as f64).sqrt();
                let w = (0..in_features * out_features)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                let b = (0..out_features)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                m.insert(WEIGHT.into(), w);
                m.insert(BIAS.into(), b);
            }
            OpKind::Scale {
                lambda: Lambda::Learnable,
            } => {
                m.insert(LAMBDA.into(), vec![1.0]);
            }
            _ => continue,
        }
        params.insert(op.id, m);
    }
    WeightStore {
        seed,
        params,
        buffers: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::count_params;
    use crate::assembler::{assemble_network, preset, LambdaPolicy, NetworkSpec};

    fn tiny() -> NetworkIr {
        assemble_network(&preset("tiny-cifar").unwrap()).unwrap()
    }

    #[test]
    fn same_seed_same_store() {
        let ir = tiny();
        assert_eq!(init_weights(&ir, 7), init_weights(&ir, 7));
        assert_ne!(init_weights(&ir, 7), init_weights(&ir, 8));
    }

    #[test]
    fn last_norm_of_each_branch_is_zero() {
        let ir = tiny();
        let w = init_weights(&ir, 1);
        for op in &ir.operators {
            if let OpKind::Norm { zero_init, .. } = op.op {
                let g = w.get(op.id, GAMMA).unwrap();
                assert!(g.iter().all(|&x| x == if zero_init { 0.0 } else { 1.0 }));
                assert!(w.get(op.id, BETA).unwrap().iter().all(|&x| x == 0.0));
            }
        }
        assert!(ir.operators.iter().any(|o| matches!(
            o.op,
            OpKind::Norm {
                zero_init: true,
                ..
            }
        )));
    }

    #[test]
    fn count_matches_analyzer() {
        for policy in [LambdaPolicy::PathRatio, LambdaPolicy::Learnable] {
            let spec = NetworkSpec {
                lambda_policy: policy,
                ..preset("tiny-cifar").unwrap()
            };
            let ir = assemble_network(&spec).unwrap();
            let w = init_weights(&ir, 3);
            w.check_against(&ir).unwrap();
            assert_eq!(w.scalar_count(), count_params(&ir).total);
        }
    }

    #[test]
    fn orphans_rejected() {
        let ir = tiny();
        let mut w = init_weights(&ir, 3);
        w.params
            .insert(0, TensorMap::from([(KERNEL.to_string(), vec![1.0])]));
        assert!(w.check_against(&ir).is_err());
    }
}
