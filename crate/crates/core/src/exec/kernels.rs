//! Naive reference kernels. Every output element is computed by one closure
//! invocation in a fixed tap order, so results do not depend on how rows are
//! distributed across threads.

use rayon::prelude::*;

use crate::graph::{Activation, Layer, PoolKind, TensorShape};
use crate::quant::FixedMultiplier;
use crate::tensor::Tensor;

/// Valid kernel taps for one output coordinate along one axis.
#[inline]
fn taps(o: usize, stride: usize, pad_before: usize, k: usize, len: usize) -> impl Iterator<Item = (usize, usize)> {
    let origin = (o * stride) as isize - pad_before as isize;
    (0..k).filter_map(move |t| {
        let i = origin + t as isize;
        (i >= 0 && (i as usize) < len).then_some((t, i as usize))
    })
}

/// Fills `out` row by row in parallel with `f(oy, ox, c)`.
fn fill<T: Send + Copy + Default>(out: TensorShape, f: impl Fn(usize, usize, usize) -> T + Sync) -> Tensor<T> {
    let row = out.width * out.channels;
    let mut data = vec![T::default(); out.elements()];
    data.par_chunks_mut(row.max(1)).enumerate().for_each(|(oy, chunk)| {
        for ox in 0..out.width {
            for c in 0..out.channels {
                chunk[ox * out.channels + c] = f(oy, ox, c);
            }
        }
    });
    Tensor::new(out, data)
}

// ---- floating point -------------------------------------------------------

pub(crate) fn conv2d_f64(x: &Tensor<f64>, w: &[f64], b: &[f64], layer: &Layer, out: TensorShape) -> Tensor<f64> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let p = layer.padding;
    let cin = x.shape.channels;
    fill(out, |oy, ox, co| {
        let mut acc = b[co];
        for (ky, iy) in taps(oy, sh, p.top, kh, x.shape.height) {
            for (kx, ix) in taps(ox, sw, p.left, kw, x.shape.width) {
                let xi = x.index(iy, ix, 0);
                let wi = ((co * kh + ky) * kw + kx) * cin;
                for ci in 0..cin {
                    acc += x.data[xi + ci] * w[wi + ci];
                }
            }
        }
        acc
    })
}

pub(crate) fn depthwise_f64(x: &Tensor<f64>, w: &[f64], b: &[f64], layer: &Layer, out: TensorShape) -> Tensor<f64> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let p = layer.padding;
    let c_all = x.shape.channels;
    fill(out, |oy, ox, c| {
        let mut acc = b[c];
        for (ky, iy) in taps(oy, sh, p.top, kh, x.shape.height) {
            for (kx, ix) in taps(ox, sw, p.left, kw, x.shape.width) {
                acc += x.at(iy, ix, c) * w[(ky * kw + kx) * c_all + c];
            }
        }
        acc
    })
}

pub(crate) fn fully_connected_f64(x: &Tensor<f64>, w: &[f64], b: &[f64], out: TensorShape) -> Tensor<f64> {
    let n = x.data.len();
    fill(out, |_, _, co| {
        let row = &w[co * n..(co + 1) * n];
        b[co] + x.data.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
    })
}

pub(crate) fn pool_f64(x: &Tensor<f64>, layer: &Layer, kind: PoolKind, out: TensorShape) -> Tensor<f64> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let p = layer.padding;
    let window = (kh * kw) as f64;
    fill(out, |oy, ox, c| {
        let mut sum = 0.0;
        let mut max: Option<f64> = None;
        for (_, iy) in taps(oy, sh, p.top, kh, x.shape.height) {
            for (_, ix) in taps(ox, sw, p.left, kw, x.shape.width) {
                let v = x.at(iy, ix, c);
                sum += v;
                max = Some(max.map_or(v, |m: f64| m.max(v)));
            }
        }
        match kind {
            PoolKind::Max => max.unwrap_or(0.0),
            PoolKind::Avg => sum / window,
        }
    })
}

pub(crate) fn activation_f64(x: &Tensor<f64>, act: Activation) -> Tensor<f64> {
    x.map(|v| act.apply(v))
}

pub(crate) fn add_f64(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    Tensor::new(a.shape, a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect())
}

pub(crate) fn concat<T: Copy + Default>(inputs: &[&Tensor<T>], out: TensorShape) -> Tensor<T> {
    let mut data = Vec::with_capacity(out.elements());
    for y in 0..out.height {
        for x in 0..out.width {
            for t in inputs {
                let i = t.index(y, x, 0);
                data.extend_from_slice(&t.data[i..i + t.shape.channels]);
            }
        }
    }
    Tensor::new(out, data)
}

// ---- integer ---------------------------------------------------------------

#[inline]
fn saturate(v: i64) -> i8 {
    v.clamp(-128, 127) as i8
}

/// Zero-point corrected int8 convolution with int32 accumulation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_i8(
    x: &Tensor<i8>,
    zx: i32,
    w: &[i8],
    b: &[i32],
    requant: FixedMultiplier,
    zo: i32,
    layer: &Layer,
    out: TensorShape,
) -> Tensor<i8> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let p = layer.padding;
    let cin = x.shape.channels;
    fill(out, |oy, ox, co| {
        let mut acc: i32 = b[co];
        for (ky, iy) in taps(oy, sh, p.top, kh, x.shape.height) {
            for (kx, ix) in taps(ox, sw, p.left, kw, x.shape.width) {
                let xi = x.index(iy, ix, 0);
                let wi = ((co * kh + ky) * kw + kx) * cin;
                for ci in 0..cin {
                    acc += (x.data[xi + ci] as i32 - zx) * w[wi + ci] as i32;
                }
            }
        }
        saturate(zo as i64 + requant.apply(acc as i64))
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn depthwise_i8(
    x: &Tensor<i8>,
    zx: i32,
    w: &[i8],
    b: &[i32],
    requant: FixedMultiplier,
    zo: i32,
    layer: &Layer,
    out: TensorShape,
) -> Tensor<i8> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let p = layer.padding;
    let c_all = x.shape.channels;
    fill(out, |oy, ox, c| {
        let mut acc: i32 = b[c];
        for (ky, iy) in taps(oy, sh, p.top, kh, x.shape.height) {
            for (kx, ix) in taps(ox, sw, p.left, kw, x.shape.width) {
                acc += (x.at(iy, ix, c) as i32 - zx) * w[(ky * kw + kx) * c_all + c] as i32;
            }
        }
        saturate(zo as i64 + requant.apply(acc as i64))
    })
}

pub(crate) fn fully_connected_i8(
    x: &Tensor<i8>,
    zx: i32,
    w: &[i8],
    b: &[i32],
    requant: FixedMultiplier,
    zo: i32,
    out: TensorShape,
) -> Tensor<i8> {
    let n = x.data.len();
    fill(out, |_, _, co| {
        let row = &w[co * n..(co + 1) * n];
        let acc: i32 = b[co] + x.data.iter().zip(row).map(|(&a, &b)| (a as i32 - zx) * b as i32).sum::<i32>();
        saturate(zo as i64 + requant.apply(acc as i64))
    })
}

/// Max pooling on codes followed by a rescale to the output parameters.
/// A window lying entirely in padding yields real zero.
pub(crate) fn max_pool_i8(x: &Tensor<i8>, zx: i32, rescale: FixedMultiplier, zo: i32, layer: &Layer, out: TensorShape) -> Tensor<i8> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let p = layer.padding;
    fill(out, |oy, ox, c| {
        let mut max: Option<i8> = None;
        for (_, iy) in taps(oy, sh, p.top, kh, x.shape.height) {
            for (_, ix) in taps(ox, sw, p.left, kw, x.shape.width) {
                let v = x.at(iy, ix, c);
                max = Some(max.map_or(v, |m| m.max(v)));
            }
        }
        let centered = max.map_or(0, |m| m as i64 - zx as i64);
        saturate(zo as i64 + rescale.apply(centered))
    })
}

/// Average pooling: int32 window sum (padding contributes zero) requantized
/// by `s_in / (s_out * kh * kw)`.
pub(crate) fn avg_pool_i8(x: &Tensor<i8>, zx: i32, requant: FixedMultiplier, zo: i32, layer: &Layer, out: TensorShape) -> Tensor<i8> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let p = layer.padding;
    fill(out, |oy, ox, c| {
        let mut sum: i32 = 0;
        for (_, iy) in taps(oy, sh, p.top, kh, x.shape.height) {
            for (_, ix) in taps(ox, sw, p.left, kw, x.shape.width) {
                sum += x.at(iy, ix, c) as i32 - zx;
            }
        }
        saturate(zo as i64 + requant.apply(sum as i64))
    })
}

pub(crate) fn lut_i8(x: &Tensor<i8>, table: &[i8; 256]) -> Tensor<i8> {
    x.map(|q| table[(q as i32 + 128) as usize])
}

/// Fractional bits kept while adding rescaled operands.
pub(crate) const ADD_HEADROOM: u32 = 20;

pub(crate) fn add_i8(a: &Tensor<i8>, za: i32, ma: FixedMultiplier, b: &Tensor<i8>, zb: i32, mb: FixedMultiplier, zo: i32) -> Tensor<i8> {
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&qa, &qb)| {
            let ra = ma.apply((qa as i64 - za as i64) << ADD_HEADROOM);
            let rb = mb.apply((qb as i64 - zb as i64) << ADD_HEADROOM);
            saturate(zo as i64 + crate::quant::rounding_shift(ra + rb, ADD_HEADROOM))
        })
        .collect();
    Tensor::new(a.shape, data)
}

pub(crate) fn rescale_i8(x: &Tensor<i8>, zx: i32, m: FixedMultiplier, zo: i32) -> Tensor<i8> {
    x.map(|q| saturate(zo as i64 + m.apply(q as i64 - zx as i64)))
}
