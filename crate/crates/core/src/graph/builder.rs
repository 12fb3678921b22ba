use super::analysis::infer_shapes;
use super::{Activation, Graph, Layer, LayerKind, Padding, PoolKind, TensorShape, INPUT_ID};

/// Appends layers to a graph, chaining each new layer onto the previous one
/// unless a source is given explicitly.
///
/// ```
/// use tinydeploy::graph::{GraphBuilder, TensorShape, Activation};
///
/// let mut b = GraphBuilder::new("tiny", TensorShape::new(32, 32, 3));
/// b.conv_same("stem", 8, 3, 2);
/// b.activation("stem_relu", Activation::Relu);
/// b.depthwise_same("dw", 3, 1);
/// let graph = b.finish();
/// assert_eq!(graph.layers.len(), 3);
/// ```
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    graph: Graph,
    last: String,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>, input: TensorShape) -> Self {
        GraphBuilder { graph: Graph::new(name, input), last: INPUT_ID.to_string() }
    }

    /// Id of the most recently added layer (or the input).
    pub fn last(&self) -> &str {
        &self.last
    }

    pub fn metadata(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.graph.metadata.insert(key.to_string(), value.into());
        self
    }

    /// Shape of an already-added tensor. Panics on an unknown id or an
    /// invalid partial graph, since the builder is for constructing known
    /// architectures.
    pub fn shape_of(&self, id: &str) -> TensorShape {
        if id == INPUT_ID || self.graph.layers.is_empty() {
            return self.graph.input_shape;
        }
        infer_shapes(&self.graph).expect("builder graph is valid").get(id).expect("known tensor id")
    }

    pub fn push(&mut self, layer: Layer) -> &mut Self {
        self.last = layer.id.clone();
        self.graph.layers.push(layer);
        self
    }

    /// Marks the last layer as carrying an unfolded batch normalization.
    pub fn batch_norm(&mut self) -> &mut Self {
        if let Some(l) = self.graph.layers.last_mut() {
            l.batch_norm = true;
        }
        self
    }

    #[allow(clippy::too_many_arguments)]
    fn windowed(
        &mut self,
        id: &str,
        src: &str,
        kind: LayerKind,
        out_channels: Option<usize>,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    ) -> &mut Self {
        let mut layer = Layer::new(id, kind, vec![src.to_string()]);
        layer.kernel = kernel;
        layer.stride = stride;
        layer.padding = padding;
        layer.out_channels = out_channels;
        self.push(layer)
    }

    pub fn conv(&mut self, id: &str, out_channels: usize, kernel: (usize, usize), stride: (usize, usize), padding: Padding) -> &mut Self {
        let src = self.last.clone();
        self.conv_from(id, &src, out_channels, kernel, stride, padding)
    }

    pub fn conv_from(
        &mut self,
        id: &str,
        src: &str,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    ) -> &mut Self {
        self.windowed(id, src, LayerKind::Conv2d, Some(out_channels), kernel, stride, padding)
    }

    /// Square conv with TensorFlow `same` padding.
    pub fn conv_same(&mut self, id: &str, out_channels: usize, k: usize, s: usize) -> &mut Self {
        let src = self.last.clone();
        let x = self.shape_of(&src);
        let pad = Padding::same((x.height, x.width), (k, k), (s, s));
        self.conv(id, out_channels, (k, k), (s, s), pad)
    }

    pub fn depthwise(&mut self, id: &str, kernel: (usize, usize), stride: (usize, usize), padding: Padding) -> &mut Self {
        let src = self.last.clone();
        self.depthwise_from(id, &src, kernel, stride, padding)
    }

    pub fn depthwise_from(&mut self, id: &str, src: &str, kernel: (usize, usize), stride: (usize, usize), padding: Padding) -> &mut Self {
        self.windowed(id, src, LayerKind::DepthwiseConv2d, None, kernel, stride, padding)
    }

    pub fn depthwise_same(&mut self, id: &str, k: usize, s: usize) -> &mut Self {
        let src = self.last.clone();
        let x = self.shape_of(&src);
        let pad = Padding::same((x.height, x.width), (k, k), (s, s));
        self.depthwise(id, (k, k), (s, s), pad)
    }

    pub fn fully_connected(&mut self, id: &str, out_channels: usize) -> &mut Self {
        let mut layer = Layer::new(id, LayerKind::FullyConnected, vec![self.last.clone()]);
        layer.out_channels = Some(out_channels);
        self.push(layer)
    }

    pub fn activation(&mut self, id: &str, act: Activation) -> &mut Self {
        let layer = Layer::new(id, LayerKind::Activation(act), vec![self.last.clone()]);
        self.push(layer)
    }

    pub fn pool(&mut self, id: &str, kind: PoolKind, kernel: (usize, usize), stride: (usize, usize), padding: Padding) -> &mut Self {
        let src = self.last.clone();
        self.windowed(id, &src, LayerKind::Pool(kind), None, kernel, stride, padding)
    }

    /// Explicit zero padding, expressed as a 1×1 average pool over a padded
    /// input (padded cells average to zero).
    pub fn zero_pad(&mut self, id: &str, padding: Padding) -> &mut Self {
        self.pool(id, PoolKind::Avg, (1, 1), (1, 1), padding)
    }

    pub fn add(&mut self, id: &str, a: &str, b: &str) -> &mut Self {
        let layer = Layer::new(id, LayerKind::Add, vec![a.to_string(), b.to_string()]);
        self.push(layer)
    }

    pub fn concat(&mut self, id: &str, inputs: &[&str]) -> &mut Self {
        let layer = Layer::new(id, LayerKind::Concat, inputs.iter().map(|s| s.to_string()).collect());
        self.push(layer)
    }

    pub fn finish(self) -> Graph {
        self.graph
    }
}
