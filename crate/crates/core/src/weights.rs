//! Float weights keyed by layer id.
//!
//! Layouts (row-major):
//! - `Conv2d`: `[out_channels, kh, kw, in_channels]`
//! - `DepthwiseConv2d`: `[kh, kw, channels]`
//! - `FullyConnected`: `[out_channels, in_elements]`, inputs flattened in HWC order
//!
//! In a tensor container the records are named `<layer>.weight` and `<layer>.bias`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::container::{ContainerError, StoredTensor, TensorData, TensorFile};
use crate::graph::{Graph, Layer, LayerKind, Shapes, TensorShape};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub shape: Vec<usize>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

pub type Weights = BTreeMap<String, LayerWeights>;

pub fn weight_id(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_id(layer: &str) -> String {
    format!("{layer}.bias")
}

/// Expected weight-tensor shape, or `None` for layers without weights.
pub fn weight_shape(layer: &Layer, input: TensorShape, output: TensorShape) -> Option<Vec<usize>> {
    let (kh, kw) = layer.kernel;
    match layer.kind {
        LayerKind::Conv2d => Some(vec![output.channels, kh, kw, input.channels]),
        LayerKind::DepthwiseConv2d => Some(vec![kh, kw, input.channels]),
        LayerKind::FullyConnected => Some(vec![output.channels, input.elements()]),
        _ => None,
    }
}

/// Reads `<layer>.weight` / `<layer>.bias` records for every weighted layer.
pub fn weights_from_file(graph: &Graph, shapes: &Shapes, file: &TensorFile) -> Result<Weights, ContainerError> {
    let mut out = Weights::new();
    for (i, layer) in graph.layers.iter().enumerate() {
        let input = shapes.get(&layer.inputs[0]).expect("validated graph");
        let Some(shape) = weight_shape(layer, input, shapes.layers[i]) else { continue };
        let w = file.require(&weight_id(&layer.id))?;
        if w.shape != shape {
            return Err(ContainerError::ShapeLength { id: w.id.clone(), shape: shape.clone(), len: w.data.len() });
        }
        let b = file.require(&bias_id(&layer.id))?;
        let channels = shapes.layers[i].channels;
        if b.data.len() != channels {
            return Err(ContainerError::ShapeLength { id: b.id.clone(), shape: vec![channels], len: b.data.len() });
        }
        out.insert(layer.id.clone(), LayerWeights { shape, weight: w.as_f32()?.to_vec(), bias: b.as_f32()?.to_vec() });
    }
    Ok(out)
}

pub fn weights_to_file(weights: &Weights) -> TensorFile {
    let mut file = TensorFile::new();
    for (id, lw) in weights {
        file.push(StoredTensor { id: weight_id(id), shape: lw.shape.clone(), data: TensorData::F32(lw.weight.clone()) });
        file.push(StoredTensor { id: bias_id(id), shape: vec![lw.bias.len()], data: TensorData::F32(lw.bias.clone()) });
    }
    file
}

/// He-uniform random weights and small random biases, reproducible from `seed`.
pub fn random_weights(graph: &Graph, shapes: &Shapes, seed: u64) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Weights::new();
    for (i, layer) in graph.layers.iter().enumerate() {
        let input = shapes.get(&layer.inputs[0]).expect("validated graph");
        let Some(shape) = weight_shape(layer, input, shapes.layers[i]) else { continue };
        let n: usize = shape.iter().product();
        let fan_in = match layer.kind {
            LayerKind::DepthwiseConv2d => shape[0] * shape[1],
            _ => n / shape[0],
        };
        let limit = (6.0 / fan_in as f32).sqrt();
        let weight = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        let bias = (0..shapes.layers[i].channels).map(|_| rng.gen_range(-0.1..0.1)).collect();
        out.insert(layer.id.clone(), LayerWeights { shape, weight, bias });
    }
    out
}

/// Uniform random input tensors in `[lo, hi)`, reproducible from `seed`.
pub fn random_inputs(shape: TensorShape, count: usize, lo: f32, hi: f32, seed: u64) -> Vec<crate::tensor::Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| crate::tensor::Tensor::new(shape, (0..shape.elements()).map(|_| rng.gen_range(lo..hi)).collect())).collect()
}
