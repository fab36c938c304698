use std::collections::BTreeMap;

use super::kernels::{self, ConvGeom};
use super::weights::{self, WeightStore};
use super::Tensor;
use crate::error::ExecError;
use crate::ir::{NetworkIr, OpId, OpKind, Shape};
use crate::Scalar;

pub const NORM_EPS: f64 = 1e-5;

/// Execution settings. Results do not depend on `workers`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    pub workers: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

/// Every intermediate value of one evaluation.
pub(crate) struct Trace<T> {
    pub batch: usize,
    pub shapes: Vec<Shape>,
    pub values: Vec<Vec<T>>,
    /// Window argmax of each max-pool operator.
    pub argmax: BTreeMap<OpId, Vec<usize>>,
}

pub(crate) fn param<T: Scalar>(w: &WeightStore, op: OpId, name: &str) -> Result<Vec<T>, ExecError> {
    Ok(w.get(op, name)?
        .iter()
        .map(|&v| T::from_f64_lossy(v))
        .collect())
}

/// Per-channel `(scale, mean, inv_std)`.
pub(crate) type NormCoefficients<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Per-channel mean and variance recorded for each norm operator.
type ChannelStats = BTreeMap<OpId, (Vec<f64>, Vec<f64>)>;

/// Per-channel `(scale, mean)` so that `y = scale * (x - mean) + beta`.
pub(crate) fn norm_coefficients<T: Scalar>(
    w: &WeightStore,
    op: OpId,
    channels: usize,
) -> Result<NormCoefficients<T>, ExecError> {
    let gamma = w.get(op, weights::GAMMA)?;
    let mean = w
        .buffer(op, weights::RUNNING_MEAN)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; channels]);
    let var = w
        .buffer(op, weights::RUNNING_VAR)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![1.0; channels]);
    let inv_std: Vec<T> = var
        .iter()
        .map(|&v| T::from_f64_lossy(1.0 / (v + NORM_EPS).sqrt()))
        .collect();
    let scale = gamma
        .iter()
        .zip(&inv_std)
        .map(|(&g, &s)| T::from_f64_lossy(g) * s)
        .collect();
    Ok((
        scale,
        mean.iter().map(|&m| T::from_f64_lossy(m)).collect(),
        inv_std,
    ))
}

/// Split a `[C,H,W]` or `[B,C,H,W]` tensor into batch size and sample shape.
fn batch_shape(dims: &[usize]) -> Result<(usize, Shape), ExecError> {
    match *dims {
        [c, h, w] => Ok((1, Shape::new(c, h, w))),
        [b, c, h, w] if b > 0 => Ok((b, Shape::new(c, h, w))),
        _ => Err(ExecError::Shape {
            op: 0,
            reason: format!("input must be CxHxW or BxCxHxW, got {dims:?}"),
        }),
    }
}

pub(crate) fn run<T: Scalar>(
    ir: &NetworkIr,
    w: &WeightStore,
    x: &Tensor<T>,
    opts: &ExecOptions,
    keep_all: bool,
) -> Result<Trace<T>, ExecError> {
    let (batch, input) = batch_shape(x.shape())?;
    let declared = ir.input_shape();
    if input.channels != declared.channels {
        return Err(ExecError::Shape {
            op: 0,
            reason: format!(
                "input has {} channels, network expects {}",
                input.channels, declared.channels
            ),
        });
    }
    let shapes = ir.infer_shapes(input).map_err(|e| ExecError::Shape {
        op: 0,
        reason: format!("input {input} does not fit the network: {e}"),
    })?;
    if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| ExecError::Weights(format!("cannot start worker pool: {e}")))?;
        pool.install(|| evaluate(ir, w, x.data(), batch, shapes, true, keep_all, None))
    } else {
        evaluate(ir, w, x.data(), batch, shapes, false, keep_all, None)
    }
}

/// Per-channel mean and biased variance of a `[B,C,plane]` buffer.
fn channel_statistics<T: Scalar>(x: &[T], batch: usize, channels: usize) -> (Vec<f64>, Vec<f64>) {
    let plane = x.len() / (batch * channels);
    let count = (batch * plane) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for (c, (m, v)) in mean.iter_mut().zip(&mut var).enumerate() {
        let values = || {
            (0..batch).flat_map(move |b| {
                x[(b * channels + c) * plane..][..plane]
                    .iter()
                    .map(|t| t.to_f64().unwrap_or(f64::NAN))
            })
        };
        *m = values().sum::<f64>() / count;
        *v = values().map(|t| (t - *m) * (t - *m)).sum::<f64>() / count;
    }
    (mean, var)
}

/// Replace every normalization's running statistics with the statistics of
/// its input on `x`, earlier layers first, as a recalibration pass would.
pub fn calibrate_norms(
    ir: &NetworkIr,
    w: &mut WeightStore,
    x: &Tensor<f64>,
) -> Result<(), ExecError> {
    let (batch, input) = batch_shape(x.shape())?;
    let shapes = ir.infer_shapes(input).map_err(|e| ExecError::Shape {
        op: 0,
        reason: format!("input {input} does not fit the network: {e}"),
    })?;
    let mut stats = BTreeMap::new();
    evaluate(
        ir,
        w,
        x.data(),
        batch,
        shapes,
        false,
        false,
        Some(&mut stats),
    )?;
    for (op, (mean, var)) in stats {
        w.set_statistics(op, mean, var);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate<T: Scalar>(
    ir: &NetworkIr,
    w: &WeightStore,
    x: &[T],
    batch: usize,
    shapes: Vec<Shape>,
    parallel: bool,
    keep_all: bool,
    mut calibrate: Option<&mut ChannelStats>,
) -> Result<Trace<T>, ExecError> {
    let n = ir.operators.len();
    let mut last_use = vec![0; n];
    for op in &ir.operators {
        for &i in &op.inputs {
            last_use[i] = op.id;
        }
    }
    let mut values: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut argmax = BTreeMap::new();
    for op in &ir.operators {
        let id = op.id;
        let out_shape = shapes[id];
        let in_shape = |k: usize| shapes[op.inputs[k]];
        let arg = |k: usize| values[op.inputs[k]].as_slice();
        let y: Vec<T> = match op.op {
            OpKind::Input { .. } => x.to_vec(),
            OpKind::Conv {
                kernel,
                stride,
                padding,
                ..
            } => {
                let k = param::<T>(w, id, weights::KERNEL)?;
                let g = ConvGeom {
                    input: in_shape(0),
                    output: out_shape,
                    kernel,
                    stride,
                    padding,
                };
                let mut out = vec![T::zero(); batch * out_shape.numel()];
                kernels::conv2d(arg(0), &k, batch, g, &mut out, parallel);
                out
            }
            OpKind::Norm { channels, .. } => {
                let (scale, mean, _) = match calibrate.as_deref_mut() {
                    Some(stats) => {
                        let (mean, var) = channel_statistics(arg(0), batch, channels);
                        let mut fitted = WeightStore::default();
                        fitted.params.insert(
                            id,
                            [(weights::GAMMA.into(), w.get(id, weights::GAMMA)?.to_vec())].into(),
                        );
                        fitted.set_statistics(id, mean.clone(), var.clone());
                        stats.insert(id, (mean, var));
                        norm_coefficients::<T>(&fitted, id, channels)?
                    }
                    None => norm_coefficients::<T>(w, id, channels)?,
                };
                let beta = param::<T>(w, id, weights::BETA)?;
                kernels::affine(arg(0), batch, channels, &scale, &mean, &beta)
            }
            OpKind::Relu => arg(0).iter().map(|&v| v.max(T::zero())).collect(),
            OpKind::Dropout { .. } => arg(0).to_vec(),
            OpKind::Concat => {
                let parts: Vec<(&[T], usize)> = op
                    .inputs
                    .iter()
                    .map(|&i| (values[i].as_slice(), shapes[i].channels))
                    .collect();
                kernels::concat_channels(&parts, batch)
            }
            OpKind::Sum => {
                let mut acc = arg(0).to_vec();
                for &i in &op.inputs[1..] {
                    for (a, &b) in acc.iter_mut().zip(&values[i]) {
                        *a += b;
                    }
                }
                acc
            }
            OpKind::Slice { start, end } => {
                kernels::slice_channels(arg(0), batch, in_shape(0).channels, start, end)
            }
            OpKind::MaxPool { kernel, stride } => {
                let idx =
                    kernels::maxpool_argmax(arg(0), batch, in_shape(0), out_shape, kernel, stride);
                let src = arg(0);
                let out = idx.iter().map(|&i| src[i]).collect();
                argmax.insert(id, idx);
                out
            }
            OpKind::AvgPool => kernels::global_avgpool(arg(0), batch, in_shape(0).channels),
            OpKind::Linear {
                in_features,
                out_features,
            } => {
                let wt = param::<T>(w, id, weights::WEIGHT)?;
                let b = param::<T>(w, id, weights::BIAS)?;
                kernels::linear(arg(0), batch, &wt, &b, in_features, out_features)
            }
            OpKind::Scale { lambda } => {
                let l = match lambda.as_ratio() {
                    Some(r) => T::from_ratio(r),
                    None => T::from_f64_lossy(w.get(id, weights::LAMBDA)?[0]),
                };
                arg(0).iter().map(|&v| v * l).collect()
            }
        };
        debug_assert_eq!(y.len(), batch * out_shape.numel(), "operator {id}");
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ExecError::NonFinite { op: id });
        }
        values[id] = y;
        if !keep_all {
            for &i in &op.inputs {
                if last_use[i] == id {
                    values[i] = Vec::new();
                }
            }
        }
    }
    Ok(Trace {
        batch,
        shapes,
        values,
        argmax,
    })
}

/// Evaluate the network in inference mode.
///
/// `x` is `CxHxW` or `BxCxHxW`. When the last operator yields `Cx1x1` the
/// result is `[C]` or `[B, C]`; otherwise the spatial axes are kept.
pub fn forward<T: Scalar>(
    ir: &NetworkIr,
    w: &WeightStore,
    x: &Tensor<T>,
    opts: &ExecOptions,
) -> Result<Tensor<T>, ExecError> {
    let mut trace = run(ir, w, x, opts, false)?;
    let out = ir.output().id;
    let data = std::mem::take(&mut trace.values[out]);
    Tensor::new(
        output_dims(x.shape().len() == 4, trace.batch, trace.shapes[out]),
        data,
    )
}

pub(crate) fn output_dims(batched: bool, batch: usize, s: Shape) -> Vec<usize> {
    let mut dims = if s.height == 1 && s.width == 1 {
        vec![s.channels]
    } else {
        vec![s.channels, s.height, s.width]
    };
    if batched {
        dims.insert(0, batch);
    }
    dims
}
