//! Direct loop implementations of every operator, NCHW layout.

use rayon::prelude::*;

use crate::ir::Shape;
use crate::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub input: Shape,
    pub output: Shape,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    /// Input coordinate for output index `o` and tap `k`, if inside the image.
    #[inline]
    fn tap(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.padding)?;
        (pos < extent).then_some(pos)
    }
}

/// `out` must be zeroed. Each output plane accumulates in `(ic, kh, kw)`
/// order regardless of how planes are distributed across threads.
pub fn conv2d<T: Scalar>(
    x: &[T],
    kernel: &[T],
    batch: usize,
    g: ConvGeom,
    out: &mut [T],
    parallel: bool,
) {
    let (cin, h, w) = (g.input.channels, g.input.height, g.input.width);
    let (cout, ho, wo) = (g.output.channels, g.output.height, g.output.width);
    let k = g.kernel;
    let plane = |idx: usize, dst: &mut [T]| {
        let (b, oc) = (idx / cout, idx % cout);
        for ic in 0..cin {
            let src = &x[(b * cin + ic) * h * w..][..h * w];
            let wk = &kernel[(oc * cin + ic) * k * k..][..k * k];
            for kh in 0..k {
                for kw in 0..k {
                    let wv = wk[kh * k + kw];
                    for oh in 0..ho {
                        let Some(ih) = g.tap(oh, kh, h) else { continue };
                        let row = &src[ih * w..][..w];
                        let dst_row = &mut dst[oh * wo..][..wo];
                        for (ow, d) in dst_row.iter_mut().enumerate() {
                            if let Some(iw) = g.tap(ow, kw, w) {
                                *d += wv * row[iw];
                            }
                        }
                    }
                }
            }
        }
    };
    let n = ho * wo;
    debug_assert_eq!(out.len(), batch * cout * n);
    if parallel {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, d)| plane(i, d));
    } else {
        out.chunks_mut(n).enumerate().for_each(|(i, d)| plane(i, d));
    }
}

/// Accumulates input and kernel gradients.
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    kernel: &[T],
    dy: &[T],
    batch: usize,
    g: ConvGeom,
    dx: &mut [T],
    dkernel: &mut [T],
) {
    let (cin, h, w) = (g.input.channels, g.input.height, g.input.width);
    let (cout, ho, wo) = (g.output.channels, g.output.height, g.output.width);
    let k = g.kernel;
    for b in 0..batch {
        for oc in 0..cout {
            let dplane = &dy[(b * cout + oc) * ho * wo..][..ho * wo];
            for ic in 0..cin {
                let base = (b * cin + ic) * h * w;
                let wbase = (oc * cin + ic) * k * k;
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = kernel[wbase + kh * k + kw];
                        let mut acc = T::zero();
                        for oh in 0..ho {
                            let Some(ih) = g.tap(oh, kh, h) else { continue };
                            for ow in 0..wo {
                                if let Some(iw) = g.tap(ow, kw, w) {
                                    let d = dplane[oh * wo + ow];
                                    acc += d * x[base + ih * w + iw];
                                    dx[base + ih * w + iw] += d * wv;
                                }
                            }
                        }
                        dkernel[wbase + kh * k + kw] += acc;
                    }
                }
            }
        }
    }
}

/// Per-channel `scale * (x - mean) + offset`.
pub fn affine<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    scale: &[T],
    mean: &[T],
    offset: &[T],
) -> Vec<T> {
    let n = x.len() / (batch * channels);
    let mut out = Vec::with_capacity(x.len());
    for b in 0..batch {
        for c in 0..channels {
            let src = &x[(b * channels + c) * n..][..n];
            out.extend(src.iter().map(|&v| scale[c] * (v - mean[c]) + offset[c]));
        }
    }
    out
}

/// Copy channel range `start..end` of every sample.
pub fn slice_channels<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    start: usize,
    end: usize,
) -> Vec<T> {
    let n = x.len() / (batch * channels);
    let mut out = Vec::with_capacity(batch * (end - start) * n);
    for b in 0..batch {
        out.extend_from_slice(&x[(b * channels + start) * n..(b * channels + end) * n]);
    }
    out
}

pub fn concat_channels<T: Scalar>(parts: &[(&[T], usize)], batch: usize) -> Vec<T> {
    let total: usize = parts.iter().map(|(p, _)| p.len()).sum();
    let mut out = Vec::with_capacity(total);
    for b in 0..batch {
        for (p, c) in parts {
            let chunk = p.len() / batch;
            debug_assert_eq!(chunk % c.max(&1), 0);
            out.extend_from_slice(&p[b * chunk..(b + 1) * chunk]);
        }
    }
    out
}

/// Index of the first maximum in every pooling window.
pub fn maxpool_argmax<T: Scalar>(
    x: &[T],
    batch: usize,
    input: Shape,
    output: Shape,
    kernel: usize,
    stride: usize,
) -> Vec<usize> {
    let (c, h, w) = (input.channels, input.height, input.width);
    let mut idx = Vec::with_capacity(batch * output.numel());
    for b in 0..batch {
        for ch in 0..c {
            let base = (b * c + ch) * h * w;
            for oh in 0..output.height {
                for ow in 0..output.width {
                    let mut best = base + oh * stride * w + ow * stride;
                    for kh in 0..kernel {
                        for kw in 0..kernel {
                            let i = base + (oh * stride + kh) * w + ow * stride + kw;
                            if x[i] > x[best] {
                                best = i;
                            }
                        }
                    }
                    idx.push(best);
                }
            }
        }
    }
    idx
}

/// Mean over each channel plane.
pub fn global_avgpool<T: Scalar>(x: &[T], batch: usize, channels: usize) -> Vec<T> {
    let n = x.len() / (batch * channels);
    let denom = T::from_usize(n).expect("usize converts");
    x.chunks(n)
        .map(|p| p.iter().copied().sum::<T>() / denom)
        .collect()
}

/// `y = W x + b` per sample; `W` is `out x in` row-major.
pub fn linear<T: Scalar>(
    x: &[T],
    batch: usize,
    weight: &[T],
    bias: &[T],
    inputs: usize,
    outputs: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * outputs);
    for b in 0..batch {
        let xs = &x[b * inputs..][..inputs];
        for o in 0..outputs {
            let row = &weight[o * inputs..][..inputs];
            let acc = row
                .iter()
                .zip(xs)
                .fold(T::zero(), |a, (&wv, &xv)| a + wv * xv);
            out.push(acc + bias[o]);
        }
    }
    out
}
