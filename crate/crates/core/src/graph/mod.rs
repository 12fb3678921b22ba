//! CNN graph intermediate representation.
//!
//! A [`Graph`] is a single-input, batch-1 network whose layers are stored in
//! topological order. Tensors are laid out height × width × channels and every
//! layer produces exactly one tensor, named after the layer. The graph input is
//! referenced by the reserved id [`INPUT_ID`].
//!
//! Shape inference, MAC/parameter counting and validation live in
//! [`analysis`]; the JSON model-file format lives in [`model_file`].

pub mod analysis;
pub mod builder;
pub mod model_file;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use analysis::{count_macs, count_params, infer_shapes, validate, CountReport, GraphError, LayerCount, Shapes};
pub use builder::GraphBuilder;

/// Id under which layers refer to the graph input tensor.
pub const INPUT_ID: &str = "input";

/// Height × width × channels of an activation tensor (batch is always 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl TensorShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub fn elements(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_valid(&self) -> bool {
        self.height >= 1 && self.width >= 1 && self.channels >= 1
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Relu6,
    HardSwish,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Relu6 => x.clamp(0.0, 6.0),
            Activation::HardSwish => x * (x + 3.0).clamp(0.0, 6.0) / 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Max,
    /// Average over the full window; padded positions count as zeros.
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LayerKind {
    Conv2d,
    DepthwiseConv2d,
    FullyConnected,
    Activation(Activation),
    Pool(PoolKind),
    Add,
    /// Concatenation along the channel axis.
    Concat,
}

impl LayerKind {
    /// Layers that own a weight tensor and a bias vector.
    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::DepthwiseConv2d | LayerKind::FullyConnected)
    }

    /// Layers that slide a kernel window over the spatial grid.
    pub fn is_windowed(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::DepthwiseConv2d | LayerKind::Pool(_))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::DepthwiseConv2d => "depthwise_conv2d",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::Activation(Activation::Relu) => "relu",
            LayerKind::Activation(Activation::Relu6) => "relu6",
            LayerKind::Activation(Activation::HardSwish) => "hardswish",
            LayerKind::Pool(PoolKind::Max) => "max_pool",
            LayerKind::Pool(PoolKind::Avg) => "avg_pool",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown layer kind `{0}`")]
pub struct UnknownLayerKind(pub String);

impl FromStr for LayerKind {
    type Err = UnknownLayerKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "conv2d" => LayerKind::Conv2d,
            "depthwise_conv2d" => LayerKind::DepthwiseConv2d,
            "fully_connected" => LayerKind::FullyConnected,
            "relu" => LayerKind::Activation(Activation::Relu),
            "relu6" => LayerKind::Activation(Activation::Relu6),
            "hardswish" => LayerKind::Activation(Activation::HardSwish),
            "max_pool" => LayerKind::Pool(PoolKind::Max),
            "avg_pool" => LayerKind::Pool(PoolKind::Avg),
            "add" => LayerKind::Add,
            "concat" => LayerKind::Concat,
            other => return Err(UnknownLayerKind(other.to_string())),
        })
    }
}

impl TryFrom<String> for LayerKind {
    type Error = UnknownLayerKind;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<LayerKind> for String {
    fn from(kind: LayerKind) -> Self {
        kind.as_str().to_string()
    }
}

/// Explicit zero padding: top, bottom, left, right.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const ZERO: Padding = Padding { top: 0, bottom: 0, left: 0, right: 0 };

    pub const fn uniform(p: usize) -> Self {
        Padding { top: p, bottom: p, left: p, right: p }
    }

    /// TensorFlow-style `same` padding: output is `ceil(in / stride)` and any
    /// odd amount of padding goes to the bottom/right.
    pub fn same(input: (usize, usize), kernel: (usize, usize), stride: (usize, usize)) -> Self {
        let axis = |len: usize, k: usize, s: usize| {
            let out = len.div_ceil(s);
            let total = ((out - 1) * s + k).saturating_sub(len);
            (total / 2, total - total / 2)
        };
        let (top, bottom) = axis(input.0, kernel.0, stride.0);
        let (left, right) = axis(input.1, kernel.1, stride.1);
        Padding { top, bottom, left, right }
    }
}

impl From<[usize; 4]> for Padding {
    fn from(p: [usize; 4]) -> Self {
        Padding { top: p[0], bottom: p[1], left: p[2], right: p[3] }
    }
}

impl From<Padding> for [usize; 4] {
    fn from(p: Padding) -> Self {
        [p.top, p.bottom, p.left, p.right]
    }
}

/// One node of the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub id: String,
    pub kind: LayerKind,
    /// (kh, kw); (1, 1) for layers without a window.
    #[serde(default = "unit_window")]
    pub kernel: (usize, usize),
    /// (sh, sw)
    #[serde(default = "unit_window")]
    pub stride: (usize, usize),
    #[serde(default)]
    pub padding: Padding,
    /// Required for `Conv2d` and `FullyConnected`; must match the input
    /// channel count when given for `DepthwiseConv2d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    pub inputs: Vec<String>,
    /// The layer was trained with an unfolded batch normalization, whose four
    /// per-channel statistics replace the bias in the parameter count.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub batch_norm: bool,
}

fn unit_window() -> (usize, usize) {
    (1, 1)
}

impl Layer {
    pub fn new(id: impl Into<String>, kind: LayerKind, inputs: Vec<String>) -> Self {
        Layer { id: id.into(), kind, kernel: (1, 1), stride: (1, 1), padding: Padding::ZERO, out_channels: None, inputs, batch_norm: false }
    }
}

/// A topologically ordered, single-input CNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Graph {
    pub name: String,
    pub input_shape: TensorShape,
    pub layers: Vec<Layer>,
    /// Free-form annotations (e.g. `width_multiplier`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Graph {
    pub fn new(name: impl Into<String>, input_shape: TensorShape) -> Self {
        Graph { name: name.into(), input_shape, layers: Vec::new(), metadata: BTreeMap::new() }
    }

    pub fn layer(&self, id: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    /// Layers whose output no other layer consumes, in layer order.
    pub fn outputs(&self) -> Vec<&Layer> {
        self.layers.iter().filter(|l| !self.layers.iter().any(|c| c.inputs.contains(&l.id))).collect()
    }
}
