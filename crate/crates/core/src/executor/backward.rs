use std::collections::BTreeMap;

use super::forward::{norm_coefficients, param, run, ExecOptions, Trace};
use super::kernels::{self, ConvGeom};
use super::weights::{self, WeightStore};
use super::Tensor;
use crate::error::ExecError;
use crate::ir::{NetworkIr, OpId, OpKind};
use crate::Scalar;

/// Scalar objective applied to the network output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Loss {
    /// Sum of all outputs.
    #[default]
    Sum,
    /// Half the sum of squared outputs.
    HalfSquares,
}

impl Loss {
    pub fn value<T: Scalar>(self, y: &[T]) -> T {
        match self {
            Loss::Sum => y.iter().copied().sum(),
            Loss::HalfSquares => y.iter().map(|&v| v * v).sum::<T>() / (T::one() + T::one()),
        }
    }

    fn gradient<T: Scalar>(self, y: &[T]) -> Vec<T> {
        match self {
            Loss::Sum => vec![T::one(); y.len()],
            Loss::HalfSquares => y.to_vec(),
        }
    }
}

pub type Gradients<T> = BTreeMap<OpId, BTreeMap<String, Vec<T>>>;

/// Loss value and its gradient with respect to every learnable tensor.
#[derive(Clone, Debug)]
pub struct Backward<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    /// Gradient with respect to every operator's output; operator 0 is the input.
    pub value_grads: Vec<Vec<T>>,
}

impl<T> Backward<T> {
    pub fn input_grad(&self) -> &[T] {
        &self.value_grads[0]
    }
}

fn add_into<T: Scalar>(slot: &mut Vec<T>, len: usize) -> &mut [T] {
    if slot.is_empty() {
        *slot = vec![T::zero(); len];
    }
    slot
}

/// Reverse-mode differentiation of `loss(forward(x))`.
pub fn backward<T: Scalar>(
    ir: &NetworkIr,
    w: &WeightStore,
    x: &Tensor<T>,
    loss: Loss,
    opts: &ExecOptions,
) -> Result<Backward<T>, ExecError> {
    let trace = run(ir, w, x, opts, true)?;
    backward_from_trace(ir, w, &trace, loss)
}

pub(crate) fn backward_from_trace<T: Scalar>(
    ir: &NetworkIr,
    w: &WeightStore,
    trace: &Trace<T>,
    loss: Loss,
) -> Result<Backward<T>, ExecError> {
    let Trace {
        batch,
        shapes,
        values,
        argmax,
    } = trace;
    let batch = *batch;
    let out = ir.output().id;
    let mut dv: Vec<Vec<T>> = vec![Vec::new(); ir.operators.len()];
    dv[out] = loss.gradient(&values[out]);
    let mut grads: Gradients<T> = BTreeMap::new();
    for op in ir.operators.iter().rev() {
        let id = op.id;
        let dy = std::mem::take(&mut dv[id]);
        if dy.is_empty() {
            dv[id] = vec![T::zero(); values[id].len()];
            continue;
        }
        let len_of = |i: OpId| values[i].len();
        match op.op {
            OpKind::Input { .. } => {}
            OpKind::Conv {
                kernel,
                stride,
                padding,
                ..
            } => {
                let src = op.inputs[0];
                let k = param::<T>(w, id, weights::KERNEL)?;
                let g = ConvGeom {
                    input: shapes[src],
                    output: shapes[id],
                    kernel,
                    stride,
                    padding,
                };
                let mut dk = vec![T::zero(); k.len()];
                let n = len_of(src);
                let dx = add_into(&mut dv[src], n);
                kernels::conv2d_backward(&values[src], &k, &dy, batch, g, dx, &mut dk);
                grads
                    .entry(id)
                    .or_default()
                    .insert(weights::KERNEL.into(), dk);
            }
            OpKind::Norm { channels, .. } => {
                let src = op.inputs[0];
                let (scale, mean, inv_std) = norm_coefficients::<T>(w, id, channels)?;
                let plane = shapes[id].height * shapes[id].width;
                let mut dgamma = vec![T::zero(); channels];
                let mut dbeta = vec![T::zero(); channels];
                let xs = &values[src];
                let n = len_of(src);
                let dx = add_into(&mut dv[src], n);
                for (p, (dyp, xp)) in dy.chunks(plane).zip(xs.chunks(plane)).enumerate() {
                    let c = p % channels;
                    let dxp = &mut dx[p * plane..][..plane];
                    for ((&d, &xv), o) in dyp.iter().zip(xp).zip(dxp) {
                        dgamma[c] += d * (xv - mean[c]) * inv_std[c];
                        dbeta[c] += d;
                        *o += d * scale[c];
                    }
                }
                let e = grads.entry(id).or_default();
                e.insert(weights::GAMMA.into(), dgamma);
                e.insert(weights::BETA.into(), dbeta);
            }
            OpKind::Relu => {
                let src = op.inputs[0];
                let n = len_of(src);
                let dx = add_into(&mut dv[src], n);
                for ((o, &d), &y) in dx.iter_mut().zip(&dy).zip(&values[id]) {
                    if y > T::zero() {
                        *o += d;
                    }
                }
            }
            OpKind::Dropout { .. } => {
                let src = op.inputs[0];
                let n = len_of(src);
                for (o, &d) in add_into(&mut dv[src], n).iter_mut().zip(&dy) {
                    *o += d;
                }
            }
            OpKind::Sum => {
                for &src in &op.inputs {
                    let n = len_of(src);
                    for (o, &d) in add_into(&mut dv[src], n).iter_mut().zip(&dy) {
                        *o += d;
                    }
                }
            }
            OpKind::Concat => {
                let per_sample = dy.len() / batch;
                let mut offset = 0;
                for &src in &op.inputs {
                    let chunk = len_of(src) / batch;
                    let n = len_of(src);
                    let dx = add_into(&mut dv[src], n);
                    for b in 0..batch {
                        let from = &dy[b * per_sample + offset..][..chunk];
                        for (o, &d) in dx[b * chunk..][..chunk].iter_mut().zip(from) {
                            *o += d;
                        }
                    }
                    offset += chunk;
                }
            }
            OpKind::Slice { start, .. } => {
                let src = op.inputs[0];
                let s = shapes[src];
                let plane = s.height * s.width;
                let chunk = dy.len() / batch;
                let n = len_of(src);
                let dx = add_into(&mut dv[src], n);
                for b in 0..batch {
                    let base = (b * s.channels + start) * plane;
                    for (o, &d) in dx[base..][..chunk]
                        .iter_mut()
                        .zip(&dy[b * chunk..][..chunk])
                    {
                        *o += d;
                    }
                }
            }
            OpKind::MaxPool { .. } => {
                let src = op.inputs[0];
                let n = len_of(src);
                let dx = add_into(&mut dv[src], n);
                for (&i, &d) in argmax[&id].iter().zip(&dy) {
                    dx[i] += d;
                }
            }
            OpKind::AvgPool => {
                let src = op.inputs[0];
                let s = shapes[src];
                let plane = s.height * s.width;
                let denom = T::from_usize(plane).expect("usize converts");
                let n = len_of(src);
                let dx = add_into(&mut dv[src], n);
                for (p, &d) in dy.iter().enumerate() {
                    for o in &mut dx[p * plane..][..plane] {
                        *o += d / denom;
                    }
                }
            }
            OpKind::Linear {
                in_features,
                out_features,
            } => {
                let src = op.inputs[0];
                let wt = param::<T>(w, id, weights::WEIGHT)?;
                let xs = &values[src];
                let mut dw = vec![T::zero(); wt.len()];
                let mut db = vec![T::zero(); out_features];
                let n = len_of(src);
                let dx = add_into(&mut dv[src], n);
                for b in 0..batch {
                    for o in 0..out_features {
                        let d = dy[b * out_features + o];
                        db[o] += d;
                        for i in 0..in_features {
                            dw[o * in_features + i] += d * xs[b * in_features + i];
                            dx[b * in_features + i] += d * wt[o * in_features + i];
                        }
                    }
                }
                let e = grads.entry(id).or_default();
                e.insert(weights::WEIGHT.into(), dw);
                e.insert(weights::BIAS.into(), db);
            }
            OpKind::Scale { lambda } => {
                let src = op.inputs[0];
                let l = match lambda.as_ratio() {
                    Some(r) => T::from_ratio(r),
                    None => {
                        let dl = dy
                            .iter()
                            .zip(&values[src])
                            .map(|(&d, &xv)| d * xv)
                            .sum::<T>();
                        grads
                            .entry(id)
                            .or_default()
                            .insert(weights::LAMBDA.into(), vec![dl]);
                        T::from_f64_lossy(w.get(id, weights::LAMBDA)?[0])
                    }
                };
                let n = len_of(src);
                for (o, &d) in add_into(&mut dv[src], n).iter_mut().zip(&dy) {
                    *o += d * l;
                }
            }
        }
        dv[id] = dy;
    }
    // Operators the output does not depend on still get zero gradients.
    for op in &ir.operators {
        for (name, len) in weights::expected_params(&op.op) {
            let e = grads.entry(op.id).or_default();
            e.entry(name.to_string())
                .or_insert_with(|| vec![T::zero(); len]);
        }
    }
    for (&op, m) in &grads {
        for (name, g) in m {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(ExecError::NonFiniteGradient {
                    op,
                    name: name.clone(),
                });
            }
        }
    }
    Ok(Backward {
        loss: loss.value(&values[out]),
        grads,
        value_grads: dv,
    })
}
