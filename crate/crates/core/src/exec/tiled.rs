//! Single-layer execution, whole or tile by tile over the output grid.
//!
//! A tile reads its input region including the halo; border taps that fall
//! outside the region are expressed as padding of a sub-layer, so every output
//! element sees exactly the taps of whole-layer execution in the same order.

use crate::graph::{Layer, LayerKind, Padding, TensorShape};
use crate::quant::{QuantOp, QuantParams};
use crate::tensor::Tensor;
use crate::weights::LayerWeights;

use super::{eval_int8, eval_real, weight_count, ExecError};

fn output_shape(layer: &Layer, input: TensorShape) -> Result<TensorShape, ExecError> {
    if matches!(layer.kind, LayerKind::Add | LayerKind::Concat) {
        return Err(ExecError::MultiInput(layer.id.clone()));
    }
    let g = {
        let mut g = crate::graph::Graph::new("layer", input);
        let mut l = layer.clone();
        l.inputs = vec![crate::graph::INPUT_ID.to_string()];
        g.layers.push(l);
        g
    };
    Ok(crate::graph::infer_shapes(&g)?.layers[0])
}

fn real_params(
    layer: &Layer,
    input: TensorShape,
    out: TensorShape,
    weights: Option<&LayerWeights>,
) -> Result<(Vec<f64>, Vec<f64>), ExecError> {
    if !layer.kind.has_weights() {
        return Ok((Vec::new(), Vec::new()));
    }
    let lw = weights.ok_or_else(|| ExecError::MissingWeights(layer.id.clone()))?;
    let expected = weight_count(layer, input, out);
    if lw.weight.len() != expected {
        return Err(ExecError::WeightSize { layer: layer.id.clone(), expected, got: lw.weight.len() });
    }
    Ok((lw.weight.iter().map(|&v| v as f64).collect(), lw.bias.iter().map(|&v| v as f64).collect()))
}

/// Float execution of one single-input layer.
pub fn run_layer(layer: &Layer, input: &Tensor<f32>, weights: Option<&LayerWeights>) -> Result<Tensor<f32>, ExecError> {
    let out = output_shape(layer, input.shape)?;
    let (w, b) = real_params(layer, input.shape, out, weights)?;
    let x = input.map(|v| v as f64);
    Ok(eval_real(layer, &[&x], &w, &b, out).map(|v| v as f32))
}

/// Float execution of a windowed layer in `tile_h` x `tile_w` output tiles.
pub fn run_layer_tiled(
    layer: &Layer,
    input: &Tensor<f32>,
    weights: Option<&LayerWeights>,
    tile_h: usize,
    tile_w: usize,
) -> Result<Tensor<f32>, ExecError> {
    check_tileable(layer, tile_h, tile_w)?;
    let out = output_shape(layer, input.shape)?;
    let (w, b) = real_params(layer, input.shape, out, weights)?;
    let x = input.map(|v| v as f64);
    let y = tiled(layer, &x, out, tile_h, tile_w, |sub, region, tile| eval_real(sub, &[region], &w, &b, tile))?;
    Ok(y.map(|v| v as f32))
}

/// Integer execution of one single-input layer of a quantized graph.
pub fn run_layer_int8(layer: &Layer, op: &QuantOp, qparams: &QuantParams, input: &Tensor<i8>) -> Result<Tensor<i8>, ExecError> {
    let out = output_shape(layer, input.shape)?;
    eval_int8(layer, op, qparams, &[input], out)
}

/// Integer execution of a windowed layer in `tile_h` x `tile_w` output tiles.
pub fn run_layer_tiled_int8(
    layer: &Layer,
    op: &QuantOp,
    qparams: &QuantParams,
    input: &Tensor<i8>,
    tile_h: usize,
    tile_w: usize,
) -> Result<Tensor<i8>, ExecError> {
    check_tileable(layer, tile_h, tile_w)?;
    let out = output_shape(layer, input.shape)?;
    let mut err = None;
    let y = tiled(layer, input, out, tile_h, tile_w, |sub, region, tile| match eval_int8(sub, op, qparams, &[region], tile) {
        Ok(t) => t,
        Err(e) => {
            err = Some(e);
            Tensor::filled(tile, 0)
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(y),
    }
}

/// Input rows `[start, end)` (clipped) and the padding that replaces the
/// clipped part, for output rows `[o0, o1)`.
fn span(o0: usize, o1: usize, stride: usize, pad_before: usize, k: usize, len: usize) -> (usize, usize, usize, usize) {
    let start = (o0 * stride) as isize - pad_before as isize;
    let end = ((o1 - 1) * stride + k) as isize - pad_before as isize;
    let c0 = start.max(0) as usize;
    let c1 = (end.min(len as isize)).max(c0 as isize) as usize;
    let before = (c0 as isize - start) as usize;
    let after = (end - c1 as isize) as usize;
    (c0, c1, before, after)
}

fn check_tileable(layer: &Layer, tile_h: usize, tile_w: usize) -> Result<(), ExecError> {
    if !matches!(layer.kind, LayerKind::Conv2d | LayerKind::DepthwiseConv2d | LayerKind::Pool(_)) || tile_h == 0 || tile_w == 0 {
        return Err(ExecError::NotTileable(layer.id.clone()));
    }
    Ok(())
}

fn tiled<T: Copy + Default>(
    layer: &Layer,
    input: &Tensor<T>,
    out: TensorShape,
    tile_h: usize,
    tile_w: usize,
    mut eval: impl FnMut(&Layer, &Tensor<T>, TensorShape) -> Tensor<T>,
) -> Result<Tensor<T>, ExecError> {
    check_tileable(layer, tile_h, tile_w)?;
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let mut result = Tensor::filled(out, T::default());
    for oy0 in (0..out.height).step_by(tile_h) {
        let oy1 = (oy0 + tile_h).min(out.height);
        let (r0, r1, pt, pb) = span(oy0, oy1, sh, layer.padding.top, kh, input.shape.height);
        for ox0 in (0..out.width).step_by(tile_w) {
            let ox1 = (ox0 + tile_w).min(out.width);
            let (c0, c1, pl, pr) = span(ox0, ox1, sw, layer.padding.left, kw, input.shape.width);
            let region_shape = TensorShape::new(r1 - r0, c1 - c0, input.shape.channels);
            let mut data = Vec::with_capacity(region_shape.elements());
            for y in r0..r1 {
                let a = input.index(y, c0, 0);
                let b = input.index(y, c1.max(c0), 0);
                data.extend_from_slice(&input.data[a..b]);
            }
            let region = Tensor { shape: region_shape, data };
            let mut sub = layer.clone();
            sub.padding = Padding { top: pt, bottom: pb, left: pl, right: pr };
            let tile = TensorShape::new(oy1 - oy0, ox1 - ox0, out.channels);
            let y = eval(&sub, &region, tile);
            for ty in 0..tile.height {
                let dst = result.index(oy0 + ty, ox0, 0);
                let src = y.index(ty, 0, 0);
                let n = tile.width * tile.channels;
                result.data[dst..dst + n].copy_from_slice(&y.data[src..src + n]);
            }
        }
    }
    Ok(result)
}
