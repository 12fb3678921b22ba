use crate::graph::{Layer, LayerKind, TensorShape};

use super::{PlanError, Precision, TileSchedule};

/// Kernel geometry used to size a tile's input region.
struct Geometry {
    kernel: (usize, usize),
    stride: (usize, usize),
    /// The whole input is needed for every tile (fully connected).
    whole_input: bool,
    /// Input channels follow the output-channel slice (depthwise, pooling
    /// and element-wise layers).
    channelwise: bool,
}

fn geometry(layer: &Layer) -> Geometry {
    match layer.kind {
        LayerKind::Conv2d => Geometry { kernel: layer.kernel, stride: layer.stride, whole_input: false, channelwise: false },
        LayerKind::DepthwiseConv2d | LayerKind::Pool(_) => {
            Geometry { kernel: layer.kernel, stride: layer.stride, whole_input: false, channelwise: true }
        }
        LayerKind::FullyConnected => Geometry { kernel: (1, 1), stride: (1, 1), whole_input: true, channelwise: false },
        LayerKind::Activation(_) | LayerKind::Add => Geometry { kernel: (1, 1), stride: (1, 1), whole_input: false, channelwise: true },
        LayerKind::Concat => Geometry { kernel: (1, 1), stride: (1, 1), whole_input: false, channelwise: false },
    }
}

struct Sizer<'a> {
    layer: &'a Layer,
    inputs: &'a [TensorShape],
    output: TensorShape,
    precision: Precision,
    geo: Geometry,
    double_buffer: bool,
}

impl Sizer<'_> {
    /// L1 bytes for a `th x tw x tc` output tile.
    fn bytes(&self, th: usize, tw: usize, tc: usize) -> u64 {
        let e = self.precision.element_bytes();
        let g = &self.geo;
        let cout = self.output.channels;
        let input: u64 = self
            .inputs
            .iter()
            .map(|s| {
                if g.whole_input {
                    return s.elements() as u64 * e;
                }
                let rows = ((th - 1) * g.stride.0 + g.kernel.0).min(s.height);
                let cols = ((tw - 1) * g.stride.1 + g.kernel.1).min(s.width);
                let ch = if g.channelwise { s.channels * tc / cout } else { s.channels };
                (rows * cols * ch) as u64 * e
            })
            .sum();
        let weights = match crate::weights::weight_shape(self.layer, self.inputs[0], self.output) {
            Some(shape) => {
                let n: usize = shape.iter().product();
                (n * tc / cout) as u64 * e + tc as u64 * self.precision.bias_bytes()
            }
            None => 0,
        };
        let output = (th * tw * tc) as u64 * e;
        let total = input + weights + output;
        if self.double_buffer {
            2 * total
        } else {
            total
        }
    }

    /// Halves the larger spatial dimension (height on ties) until the tile
    /// fits; `None` once a 1x1 tile still does not.
    fn spatial(&self, tc: usize, budget: u64) -> Result<(usize, usize, u64), u64> {
        let (mut th, mut tw) = (self.output.height, self.output.width);
        loop {
            let need = self.bytes(th, tw, tc);
            if need <= budget {
                return Ok((th, tw, need));
            }
            if th == 1 && tw == 1 {
                return Err(need);
            }
            if th >= tw {
                th = th.div_ceil(2);
            } else {
                tw = tw.div_ceil(2);
            }
        }
    }

    fn schedule(&self, th: usize, tw: usize, tc: usize, bytes: u64) -> TileSchedule {
        let o = self.output;
        TileSchedule {
            layer_id: self.layer.id.clone(),
            tile_h: th,
            tile_w: tw,
            tile_c: tc,
            buffers_bytes: bytes,
            n_tiles: o.height.div_ceil(th) * o.width.div_ceil(tw) * o.channels.div_ceil(tc),
        }
    }
}

/// Largest spatial tile whose input region (with halo), weights and output
/// fit `l1_budget`, doubled when double buffering. Weights are never split.
pub fn tile_layer(
    layer: &Layer,
    inputs: &[TensorShape],
    output: TensorShape,
    precision: Precision,
    l1_budget: u64,
    double_buffer: bool,
) -> Result<TileSchedule, PlanError> {
    if l1_budget == 0 {
        return Err(PlanError::ZeroBudget);
    }
    if inputs.is_empty() {
        return Err(PlanError::NotTileable(layer.id.clone()));
    }
    let s = Sizer { layer, inputs, output, precision, geo: geometry(layer), double_buffer };
    match s.spatial(output.channels, l1_budget) {
        Ok((th, tw, bytes)) => Ok(s.schedule(th, tw, output.channels, bytes)),
        Err(required) => Err(PlanError::Untileable { layer: layer.id.clone(), required, budget: l1_budget }),
    }
}

/// Like [`tile_layer`], but when no spatial tile fits, halves the
/// output-channel slice (and with it the weight slice) until one does.
pub fn tile_layer_streaming(
    layer: &Layer,
    inputs: &[TensorShape],
    output: TensorShape,
    precision: Precision,
    l1_budget: u64,
    double_buffer: bool,
) -> Result<TileSchedule, PlanError> {
    if l1_budget == 0 {
        return Err(PlanError::ZeroBudget);
    }
    if inputs.is_empty() {
        return Err(PlanError::NotTileable(layer.id.clone()));
    }
    let s = Sizer { layer, inputs, output, precision, geo: geometry(layer), double_buffer };
    let mut tc = output.channels;
    loop {
        match s.spatial(tc, l1_budget) {
            Ok((th, tw, bytes)) => return Ok(s.schedule(th, tw, tc, bytes)),
            Err(required) if tc == 1 => return Err(PlanError::Untileable { layer: layer.id.clone(), required, budget: l1_budget }),
            Err(_) => tc = tc.div_ceil(2),
        }
    }
}
