//! Shape inference, MAC/parameter counting and structural validation.
//!
//! MACs count multiply-accumulates only: activations, pooling, `Add` and
//! `Concat` contribute zero.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use super::{Graph, Layer, LayerKind, TensorShape, INPUT_ID};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("no layers")]
    NoLayers,
    #[error("invalid input shape {0}")]
    InvalidInputShape(TensorShape),
    #[error("duplicate layer id `{0}`")]
    DuplicateId(String),
    #[error("layer id `{0}` is reserved for the graph input")]
    ReservedId(String),
    #[error("layer `{layer}` reads `{input}` which is not produced before it")]
    UnknownInput { layer: String, input: String },
    #[error("layer `{layer}` ({kind}) expects {expected} input(s), got {got}")]
    Arity { layer: String, kind: LayerKind, expected: &'static str, got: usize },
    #[error("layer `{0}` has a zero kernel or stride")]
    ZeroWindow(String),
    #[error("layer `{0}` requires out_channels")]
    MissingOutChannels(String),
    #[error("depthwise layer `{layer}` must preserve {channels} channels, got out_channels {out}")]
    DepthwiseChannels { layer: String, channels: usize, out: usize },
    #[error("shape mismatch at `{layer}`: {a} vs {b}")]
    ShapeMismatch { layer: String, a: TensorShape, b: TensorShape },
    #[error("layer `{0}` derives a non-positive output dimension")]
    NonPositiveDim(String),
    #[error("graph input is never consumed")]
    InputUnused,
}

/// Output shape of every layer, aligned with `Graph::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shapes {
    pub input: TensorShape,
    pub layers: Vec<TensorShape>,
    index: HashMap<String, usize>,
}

impl Shapes {
    /// Shape of a layer output, or of the graph input for [`INPUT_ID`].
    pub fn get(&self, id: &str) -> Option<TensorShape> {
        if id == INPUT_ID {
            return Some(self.input);
        }
        self.index.get(id).map(|&i| self.layers[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Input shapes of `layer`, in declaration order.
    pub fn inputs_of(&self, layer: &Layer) -> Vec<TensorShape> {
        layer.inputs.iter().map(|i| self.get(i).expect("validated input")).collect()
    }
}

fn window_out(len: usize, pad: usize, k: usize, s: usize) -> Option<usize> {
    let padded = len + pad;
    if padded < k {
        None
    } else {
        Some((padded - k) / s + 1)
    }
}

fn check_arity(layer: &Layer) -> Result<(), GraphError> {
    let n = layer.inputs.len();
    let (ok, expected) = match layer.kind {
        LayerKind::Add => (n == 2, "2"),
        LayerKind::Concat => (n >= 1, ">= 1"),
        _ => (n == 1, "1"),
    };
    if ok {
        Ok(())
    } else {
        Err(GraphError::Arity { layer: layer.id.clone(), kind: layer.kind, expected, got: n })
    }
}

fn layer_shape(layer: &Layer, inputs: &[TensorShape]) -> Result<TensorShape, GraphError> {
    let id = || layer.id.clone();
    let x = inputs[0];
    match layer.kind {
        LayerKind::Conv2d | LayerKind::DepthwiseConv2d | LayerKind::Pool(_) => {
            let (kh, kw) = layer.kernel;
            let (sh, sw) = layer.stride;
            if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
                return Err(GraphError::ZeroWindow(id()));
            }
            let p = layer.padding;
            let h = window_out(x.height, p.top + p.bottom, kh, sh).ok_or_else(|| GraphError::NonPositiveDim(id()))?;
            let w = window_out(x.width, p.left + p.right, kw, sw).ok_or_else(|| GraphError::NonPositiveDim(id()))?;
            let c = match layer.kind {
                LayerKind::Conv2d => layer.out_channels.ok_or_else(|| GraphError::MissingOutChannels(id()))?,
                LayerKind::DepthwiseConv2d => match layer.out_channels {
                    Some(out) if out != x.channels => return Err(GraphError::DepthwiseChannels { layer: id(), channels: x.channels, out }),
                    _ => x.channels,
                },
                _ => x.channels,
            };
            if c == 0 {
                return Err(GraphError::NonPositiveDim(id()));
            }
            Ok(TensorShape::new(h, w, c))
        }
        LayerKind::FullyConnected => {
            let c = layer.out_channels.ok_or_else(|| GraphError::MissingOutChannels(id()))?;
            if c == 0 {
                return Err(GraphError::NonPositiveDim(id()));
            }
            Ok(TensorShape::new(1, 1, c))
        }
        LayerKind::Activation(_) => Ok(x),
        LayerKind::Add => {
            for other in &inputs[1..] {
                if *other != x {
                    return Err(GraphError::ShapeMismatch { layer: id(), a: x, b: *other });
                }
            }
            Ok(x)
        }
        LayerKind::Concat => {
            let mut channels = 0;
            for s in inputs {
                if s.height != x.height || s.width != x.width {
                    return Err(GraphError::ShapeMismatch { layer: id(), a: x, b: *s });
                }
                channels += s.channels;
            }
            Ok(TensorShape::new(x.height, x.width, channels))
        }
    }
}

/// Infers every layer's output shape, stopping at the first violation.
pub fn infer_shapes(graph: &Graph) -> Result<Shapes, GraphError> {
    if graph.layers.is_empty() {
        return Err(GraphError::NoLayers);
    }
    if !graph.input_shape.is_valid() {
        return Err(GraphError::InvalidInputShape(graph.input_shape));
    }
    let mut shapes = Shapes { input: graph.input_shape, layers: Vec::with_capacity(graph.layers.len()), index: HashMap::new() };
    for (i, layer) in graph.layers.iter().enumerate() {
        if layer.id == INPUT_ID {
            return Err(GraphError::ReservedId(layer.id.clone()));
        }
        if shapes.index.contains_key(&layer.id) {
            return Err(GraphError::DuplicateId(layer.id.clone()));
        }
        check_arity(layer)?;
        let mut inputs = Vec::with_capacity(layer.inputs.len());
        for input in &layer.inputs {
            let s = shapes.get(input).ok_or_else(|| GraphError::UnknownInput { layer: layer.id.clone(), input: input.clone() })?;
            inputs.push(s);
        }
        let out = layer_shape(layer, &inputs)?;
        shapes.layers.push(out);
        shapes.index.insert(layer.id.clone(), i);
    }
    Ok(shapes)
}

/// Returns every violated invariant rather than only the first.
///
/// Layers downstream of a broken layer are checked against the shape the
/// broken layer would most plausibly have had (its first input's shape), so a
/// single defect does not cascade into a wall of follow-up errors.
pub fn validate(graph: &Graph) -> Result<(), Vec<GraphError>> {
    let mut errors = Vec::new();
    if graph.layers.is_empty() {
        errors.push(GraphError::NoLayers);
    }
    if !graph.input_shape.is_valid() {
        errors.push(GraphError::InvalidInputShape(graph.input_shape));
    }
    let mut known: HashMap<&str, TensorShape> = HashMap::new();
    known.insert(INPUT_ID, graph.input_shape);
    let mut seen = HashSet::new();
    let mut input_used = false;
    for layer in &graph.layers {
        if layer.id == INPUT_ID {
            errors.push(GraphError::ReservedId(layer.id.clone()));
        } else if !seen.insert(layer.id.as_str()) {
            errors.push(GraphError::DuplicateId(layer.id.clone()));
        }
        if let Err(e) = check_arity(layer) {
            errors.push(e);
        }
        let mut inputs = Vec::new();
        for input in &layer.inputs {
            input_used |= input == INPUT_ID;
            match known.get(input.as_str()) {
                Some(s) => inputs.push(*s),
                None => errors.push(GraphError::UnknownInput { layer: layer.id.clone(), input: input.clone() }),
            }
        }
        if inputs.len() != layer.inputs.len() || inputs.is_empty() {
            continue;
        }
        match layer_shape(layer, &inputs) {
            Ok(s) => {
                known.insert(layer.id.as_str(), s);
            }
            Err(e) => {
                errors.push(e);
                known.insert(layer.id.as_str(), inputs[0]);
            }
        }
    }
    if !graph.layers.is_empty() && !input_used {
        errors.push(GraphError::InputUnused);
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub id: String,
    pub value: u64,
}

/// Per-layer counts plus their total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountReport {
    pub per_layer: Vec<LayerCount>,
    pub total: u64,
}

impl CountReport {
    fn from_iter(items: impl Iterator<Item = (String, u64)>) -> Self {
        let per_layer: Vec<LayerCount> = items.map(|(id, value)| LayerCount { id, value }).collect();
        let total = per_layer.iter().map(|c| c.value).sum();
        CountReport { per_layer, total }
    }

    pub fn get(&self, id: &str) -> Option<u64> {
        self.per_layer.iter().find(|c| c.id == id).map(|c| c.value)
    }
}

/// Multiply-accumulates of one layer given its input and output shapes.
pub fn layer_macs(layer: &Layer, input: TensorShape, output: TensorShape) -> u64 {
    let (kh, kw) = (layer.kernel.0 as u64, layer.kernel.1 as u64);
    let out_px = (output.height * output.width) as u64;
    match layer.kind {
        LayerKind::Conv2d => out_px * output.channels as u64 * input.channels as u64 * kh * kw,
        LayerKind::DepthwiseConv2d => out_px * input.channels as u64 * kh * kw,
        LayerKind::FullyConnected => input.elements() as u64 * output.channels as u64,
        _ => 0,
    }
}

/// Trainable parameters of one layer: weights plus bias, or weights plus the
/// four batch-norm statistics when `batch_norm` is set.
pub fn layer_params(layer: &Layer, input: TensorShape, output: TensorShape) -> u64 {
    let (kh, kw) = (layer.kernel.0 as u64, layer.kernel.1 as u64);
    let (weights, channels) = match layer.kind {
        LayerKind::Conv2d => (output.channels as u64 * input.channels as u64 * kh * kw, output.channels as u64),
        LayerKind::DepthwiseConv2d => (input.channels as u64 * kh * kw, input.channels as u64),
        LayerKind::FullyConnected => (input.elements() as u64 * output.channels as u64, output.channels as u64),
        _ => return 0,
    };
    let per_channel = if layer.batch_norm { 4 } else { 1 };
    weights + per_channel * channels
}

pub fn count_macs(graph: &Graph) -> Result<CountReport, GraphError> {
    let shapes = infer_shapes(graph)?;
    Ok(CountReport::from_iter(
        graph.layers.iter().enumerate().map(|(i, l)| (l.id.clone(), layer_macs(l, shapes.get(&l.inputs[0]).unwrap(), shapes.layers[i]))),
    ))
}

pub fn count_params(graph: &Graph) -> Result<CountReport, GraphError> {
    let shapes = infer_shapes(graph)?;
    Ok(CountReport::from_iter(
        graph.layers.iter().enumerate().map(|(i, l)| (l.id.clone(), layer_params(l, shapes.get(&l.inputs[0]).unwrap(), shapes.layers[i]))),
    ))
}
