//! Reference executor in three modes: float, fake-quant and integer-only int8.
//!
//! Float and fake-quant modes compute in `f64`. Fake-quant passes the graph
//! input, every layer output and every weight tensor through
//! quantize-then-dequantize, and uses the same int32 bias codes as the integer
//! path, so the two quantized modes differ only by fixed-point rounding.

mod kernels;
mod tiled;

use serde::{Deserialize, Serialize};

use crate::graph::{infer_shapes, Graph, GraphError, Layer, LayerKind, PoolKind, Shapes, TensorShape, INPUT_ID};
use crate::quant::graph::{quantize_linear, weight_params};
use crate::quant::{require_params, QuantError, QuantOp, QuantParams, QuantizedGraph, TensorQuant};
use crate::tensor::Tensor;
use crate::weights::{LayerWeights, Weights};

pub use tiled::{run_layer, run_layer_int8, run_layer_tiled, run_layer_tiled_int8};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("input shape {got} does not match graph input {expected}")]
    InputShape { expected: TensorShape, got: TensorShape },
    #[error("missing weights for layer `{0}`")]
    MissingWeights(String),
    #[error("weights for layer `{layer}` hold {got} values, expected {expected}")]
    WeightSize { layer: String, expected: usize, got: usize },
    #[error("no quantized op for layer `{0}`")]
    MissingRequant(String),
    #[error("no quantization parameters for tensor `{0}`")]
    MissingParams(String),
    #[error("{0}")]
    InvalidParams(String),
    #[error("layer `{0}` takes several inputs and cannot run on its own")]
    MultiInput(String),
    #[error("layer `{0}` cannot be executed tile by tile")]
    NotTileable(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<QuantError> for ExecError {
    fn from(e: QuantError) -> Self {
        match e {
            QuantError::MissingParams(id) => ExecError::MissingParams(id),
            QuantError::MissingWeights(id) => ExecError::MissingWeights(id),
            QuantError::Exec(inner) => *inner,
            other => ExecError::InvalidParams(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Float,
    FakeQuant,
    Int8,
}

/// One layer's output. `codes` is set in int8 mode, where `values` holds the
/// dequantized codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub id: String,
    pub values: Tensor<f32>,
    pub codes: Option<Tensor<i8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub mode: Mode,
    /// Aligned with `graph.layers`.
    pub layers: Vec<LayerOutput>,
}

impl ExecutionTrace {
    pub fn get(&self, id: &str) -> Option<&LayerOutput> {
        self.layers.iter().find(|l| l.id == id)
    }

    /// Output of the last layer.
    pub fn output(&self) -> &LayerOutput {
        self.layers.last().expect("graphs have at least one layer")
    }
}

fn check_input(shapes: &Shapes, got: TensorShape) -> Result<(), ExecError> {
    if shapes.input != got {
        return Err(ExecError::InputShape { expected: shapes.input, got });
    }
    Ok(())
}

pub(crate) fn layer_weights<'a>(weights: &'a Weights, layer: &Layer, expected: usize) -> Result<&'a LayerWeights, ExecError> {
    let lw = weights.get(&layer.id).ok_or_else(|| ExecError::MissingWeights(layer.id.clone()))?;
    if lw.weight.len() != expected {
        return Err(ExecError::WeightSize { layer: layer.id.clone(), expected, got: lw.weight.len() });
    }
    Ok(lw)
}

pub(crate) fn weight_count(layer: &Layer, input: TensorShape, output: TensorShape) -> usize {
    crate::weights::weight_shape(layer, input, output).map_or(0, |s| s.iter().product())
}

/// Evaluates one layer in real arithmetic given resolved inputs and
/// (possibly fake-quantized) weights.
pub(crate) fn eval_real(layer: &Layer, inputs: &[&Tensor<f64>], w: &[f64], b: &[f64], out: TensorShape) -> Tensor<f64> {
    let x = inputs[0];
    match layer.kind {
        LayerKind::Conv2d => kernels::conv2d_f64(x, w, b, layer, out),
        LayerKind::DepthwiseConv2d => kernels::depthwise_f64(x, w, b, layer, out),
        LayerKind::FullyConnected => kernels::fully_connected_f64(x, w, b, out),
        LayerKind::Activation(act) => kernels::activation_f64(x, act),
        LayerKind::Pool(kind) => kernels::pool_f64(x, layer, kind, out),
        LayerKind::Add => kernels::add_f64(inputs[0], inputs[1]),
        LayerKind::Concat => kernels::concat(inputs, out),
    }
}

fn to_f64(t: &Tensor<f32>) -> Tensor<f64> {
    t.map(|v| v as f64)
}

fn to_f32(t: &Tensor<f64>) -> Tensor<f32> {
    t.map(|v| v as f32)
}

fn resolve<'a, T>(input: &'a T, outs: &'a [T], shapes: &Shapes, id: &str) -> &'a T {
    if id == INPUT_ID {
        input
    } else {
        &outs[shapes.index_of(id).expect("validated graph")]
    }
}

fn run_real(graph: &Graph, weights: &Weights, input: &Tensor<f32>, qparams: Option<&QuantParams>) -> Result<ExecutionTrace, ExecError> {
    let shapes = infer_shapes(graph)?;
    check_input(&shapes, input.shape)?;
    let fq = |id: &str, t: Tensor<f64>| -> Result<Tensor<f64>, ExecError> {
        match qparams {
            None => Ok(t),
            Some(qp) => {
                let p = *require_params(qp, id)?;
                Ok(t.map(|v| p.fake(v)))
            }
        }
    };
    let x0 = fq(INPUT_ID, to_f64(input))?;
    let mut outs: Vec<Tensor<f64>> = Vec::with_capacity(graph.layers.len());
    for (i, layer) in graph.layers.iter().enumerate() {
        let out_shape = shapes.layers[i];
        let ins: Vec<&Tensor<f64>> = layer.inputs.iter().map(|id| resolve(&x0, &outs, &shapes, id)).collect();
        let (w, b) = if layer.kind.has_weights() {
            let lw = layer_weights(weights, layer, weight_count(layer, ins[0].shape, out_shape))?;
            match qparams {
                None => (lw.weight.iter().map(|&v| v as f64).collect(), lw.bias.iter().map(|&v| v as f64).collect()),
                Some(qp) => {
                    let s_in = require_params(qp, &layer.inputs[0])?.scale;
                    let w_qp = weight_params(qp, &layer.id)?;
                    let (wq, bq) = quantize_linear(lw, w_qp, s_in);
                    let bias_scale = s_in * w_qp.scale;
                    (wq.iter().map(|&q| w_qp.dequantize(q)).collect(), bq.iter().map(|&q| q as f64 * bias_scale).collect::<Vec<f64>>())
                }
            }
        } else {
            (Vec::new(), Vec::new())
        };
        let y = eval_real(layer, &ins, &w, &b, out_shape);
        outs.push(fq(&layer.id, y)?);
    }
    let mode = if qparams.is_some() { Mode::FakeQuant } else { Mode::Float };
    let layers = graph.layers.iter().zip(&outs).map(|(l, t)| LayerOutput { id: l.id.clone(), values: to_f32(t), codes: None }).collect();
    Ok(ExecutionTrace { mode, layers })
}

/// Float inference with `f64` accumulation.
pub fn run_float(graph: &Graph, weights: &Weights, input: &Tensor<f32>) -> Result<ExecutionTrace, ExecError> {
    run_real(graph, weights, input, None)
}

/// Float inference with quantize-then-dequantize at every tensor boundary.
pub fn run_fakequant(graph: &Graph, weights: &Weights, qparams: &QuantParams, input: &Tensor<f32>) -> Result<ExecutionTrace, ExecError> {
    run_real(graph, weights, input, Some(qparams))
}

pub(crate) fn eval_int8(
    layer: &Layer,
    op: &QuantOp,
    qparams: &QuantParams,
    inputs: &[&Tensor<i8>],
    out: TensorShape,
) -> Result<Tensor<i8>, ExecError> {
    let zp = |id: &str| -> Result<i32, ExecError> { Ok(require_params(qparams, id)?.zero_point) };
    let zo = zp(&layer.id)?;
    let zx = zp(&layer.inputs[0])?;
    let x = inputs[0];
    let mismatch = || ExecError::MissingRequant(layer.id.clone());
    let y = match (layer.kind, op) {
        (LayerKind::Conv2d, QuantOp::Linear { weight, bias, requant }) => kernels::conv2d_i8(x, zx, weight, bias, *requant, zo, layer, out),
        (LayerKind::DepthwiseConv2d, QuantOp::Linear { weight, bias, requant }) => {
            kernels::depthwise_i8(x, zx, weight, bias, *requant, zo, layer, out)
        }
        (LayerKind::FullyConnected, QuantOp::Linear { weight, bias, requant }) => {
            kernels::fully_connected_i8(x, zx, weight, bias, *requant, zo, out)
        }
        (LayerKind::Activation(_), QuantOp::Lut { table }) => kernels::lut_i8(x, table),
        (LayerKind::Pool(PoolKind::Max), QuantOp::MaxPool { rescale }) => kernels::max_pool_i8(x, zx, *rescale, zo, layer, out),
        (LayerKind::Pool(PoolKind::Avg), QuantOp::AvgPool { requant }) => kernels::avg_pool_i8(x, zx, *requant, zo, layer, out),
        (LayerKind::Add, QuantOp::Add { a, b }) => kernels::add_i8(inputs[0], zx, *a, inputs[1], zp(&layer.inputs[1])?, *b, zo),
        (LayerKind::Concat, QuantOp::Concat { rescale }) => {
            let parts = inputs
                .iter()
                .zip(&layer.inputs)
                .zip(rescale)
                .map(|((t, id), m)| Ok(kernels::rescale_i8(t, zp(id)?, *m, zo)))
                .collect::<Result<Vec<_>, ExecError>>()?;
            kernels::concat(&parts.iter().collect::<Vec<_>>(), out)
        }
        _ => return Err(mismatch()),
    };
    Ok(y)
}

/// Integer-only inference. `input` must already be quantized with the
/// graph's `input` parameters (see [`quantize_input`]).
pub fn run_int8(qgraph: &QuantizedGraph, input: &Tensor<i8>) -> Result<ExecutionTrace, ExecError> {
    let graph = &qgraph.graph;
    let shapes = infer_shapes(graph)?;
    check_input(&shapes, input.shape)?;
    let mut outs: Vec<Tensor<i8>> = Vec::with_capacity(graph.layers.len());
    for (i, layer) in graph.layers.iter().enumerate() {
        let op = match qgraph.layers.get(i) {
            Some(q) if q.id == layer.id => &q.op,
            _ => return Err(ExecError::MissingRequant(layer.id.clone())),
        };
        let ins: Vec<&Tensor<i8>> = layer.inputs.iter().map(|id| resolve(input, &outs, &shapes, id)).collect();
        let y = eval_int8(layer, op, &qgraph.qparams, &ins, shapes.layers[i])?;
        outs.push(y);
    }
    let layers = graph
        .layers
        .iter()
        .zip(outs)
        .map(|(l, codes)| {
            let qp = qgraph.qparams[&l.id];
            LayerOutput { id: l.id.clone(), values: codes.map(|q| qp.dequantize(q) as f32), codes: Some(codes) }
        })
        .collect();
    Ok(ExecutionTrace { mode: Mode::Int8, layers })
}

/// Quantizes a real input with the graph's `input` parameters.
pub fn quantize_input(qp: &TensorQuant, input: &Tensor<f32>) -> Tensor<i8> {
    input.map(|v| qp.quantize(v as f64))
}
