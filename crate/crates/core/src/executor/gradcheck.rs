use std::hash::{DefaultHasher, Hash, Hasher};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backward::{backward_from_trace, Loss};
use super::forward::{run, ExecOptions, Trace};
use super::weights::WeightStore;
use super::Tensor;
use crate::error::ExecError;
use crate::ir::{NetworkIr, OpId, OpKind};

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Upper bound on the number of weights probed.
    pub max_samples: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_samples: 400,
            loss: Loss::Sum,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub op: OpId,
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    /// Largest `|analytic - numeric| / max(1, |numeric|)` over the probes.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Probes dropped because `w +- step` lands on different sides of a
    /// ReLU or max-pool switch point.
    pub skipped_kinks: usize,
    pub total_weights: u64,
    pub worst: Option<Probe>,
}

/// Hash of every piecewise-linear switch in the evaluation.
fn activation_signature(ir: &NetworkIr, trace: &Trace<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    for op in &ir.operators {
        match op.op {
            OpKind::Relu => {
                for &v in &trace.values[op.inputs[0]] {
                    (v > 0.0).hash(&mut h);
                }
            }
            OpKind::MaxPool { .. } => trace.argmax[&op.id].hash(&mut h),
            _ => {}
        }
    }
    h.finish()
}

/// Compare reverse-mode gradients against central differences.
///
/// Every learnable tensor contributes at least one probe; the remaining
/// budget is spread evenly. Probe positions are drawn from `seed`.
pub fn finite_diff_gradcheck(
    ir: &NetworkIr,
    w: &WeightStore,
    x: &Tensor<f64>,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport, ExecError> {
    let exec = ExecOptions::default();
    let trace = run(ir, w, x, &exec, true)?;
    let analytic = backward_from_trace(ir, w, &trace, opts.loss)?.grads;
    let tensors: Vec<(OpId, String, usize)> = w
        .params
        .iter()
        .flat_map(|(&op, m)| m.iter().map(move |(name, v)| (op, name.clone(), v.len())))
        .collect();
    let per_tensor = (opts.max_samples / tensors.len().max(1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe_weights = w.clone();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        total_weights: w.scalar_count(),
        worst: None,
    };
    let out = ir.output().id;
    let evaluate = |store: &WeightStore| -> Result<(f64, u64), ExecError> {
        let t = run(ir, store, x, &exec, true)?;
        Ok((
            opts.loss.value(&t.values[out]),
            activation_signature(ir, &t),
        ))
    };
    for (op, name, len) in tensors {
        let picks = index::sample(&mut rng, len, per_tensor.min(len)).into_vec();
        for i in picks {
            let original = w.params[&op][&name][i];
            let slot =
                |s: &mut WeightStore, v: f64| s.get_mut(op, &name).expect("tensor exists")[i] = v;
            slot(&mut probe_weights, original + opts.step);
            let (plus, sig_plus) = evaluate(&probe_weights)?;
            slot(&mut probe_weights, original - opts.step);
            let (minus, sig_minus) = evaluate(&probe_weights)?;
            slot(&mut probe_weights, original);
            if sig_plus != sig_minus {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[&op][&name][i];
            let rel_error = (a - numeric).abs() / numeric.abs().max(1.0);
            report.checked += 1;
            if report.worst.is_none() || rel_error > report.max_rel_error {
                report.max_rel_error = rel_error;
                report.worst = Some(Probe {
                    op,
                    name: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    Ok(report)
}
