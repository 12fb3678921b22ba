use crate::graph::{infer_shapes, Graph, LayerKind, PoolKind, INPUT_ID};
use crate::weights::{weight_id, LayerWeights, Weights};

use super::{require_params, FixedMultiplier, QuantError, QuantParams, Scheme, TensorQuant};

/// Integer realization of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantOp {
    /// Conv2d, DepthwiseConv2d and FullyConnected: int8 weights (same layout
    /// as the float weights), int32 bias at scale `s_in * s_w`, and the
    /// multiplier `s_in * s_w / s_out`.
    Linear {
        weight: Vec<i8>,
        bias: Vec<i32>,
        requant: FixedMultiplier,
    },
    /// 256-entry table indexed by `code + 128`.
    Lut {
        table: Box<[i8; 256]>,
    },
    MaxPool {
        rescale: FixedMultiplier,
    },
    /// Multiplier `s_in / (s_out * kh * kw)` applied to the int32 window sum.
    AvgPool {
        requant: FixedMultiplier,
    },
    /// Per-operand multipliers `s_a / s_out` and `s_b / s_out`.
    Add {
        a: FixedMultiplier,
        b: FixedMultiplier,
    },
    Concat {
        rescale: Vec<FixedMultiplier>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub id: String,
    pub op: QuantOp,
}

/// A graph ready for integer-only execution.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedGraph {
    pub graph: Graph,
    pub qparams: QuantParams,
    /// Aligned with `graph.layers`.
    pub layers: Vec<QuantizedLayer>,
}

impl QuantizedGraph {
    pub fn input_params(&self) -> &TensorQuant {
        &self.qparams[INPUT_ID]
    }

    pub fn layer(&self, id: &str) -> Option<&QuantizedLayer> {
        self.layers.iter().find(|l| l.id == id)
    }
}

/// Quantizes one weighted layer: symmetric int8 weights and int32 bias at
/// scale `s_in * s_w`.
pub(crate) fn quantize_linear(lw: &LayerWeights, w_qp: &TensorQuant, s_in: f64) -> (Vec<i8>, Vec<i32>) {
    let weight = lw.weight.iter().map(|&w| w_qp.quantize(w as f64)).collect();
    let bias_scale = s_in * w_qp.scale;
    let bias = lw.bias.iter().map(|&b| (b as f64 / bias_scale).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32).collect();
    (weight, bias)
}

pub(crate) fn weight_params<'a>(qparams: &'a QuantParams, layer: &str) -> Result<&'a TensorQuant, QuantError> {
    let id = weight_id(layer);
    let qp = require_params(qparams, &id)?;
    if qp.scheme != Scheme::Symmetric || qp.zero_point != 0 {
        return Err(QuantError::AsymmetricWeights(id));
    }
    Ok(qp)
}

pub(crate) fn activation_table(f: impl Fn(f64) -> f64, input: &TensorQuant, output: &TensorQuant) -> Box<[i8; 256]> {
    let mut table = Box::new([0i8; 256]);
    for (i, slot) in table.iter_mut().enumerate() {
        *slot = output.quantize(f(input.dequantize((i as i32 - 128) as i8)));
    }
    table
}

/// Builds the integer graph. Every activation tensor (`input` and each layer
/// id) and every `<layer>.weight` must have parameters.
pub fn quantize_graph(graph: &Graph, weights: &Weights, qparams: &QuantParams) -> Result<QuantizedGraph, QuantError> {
    infer_shapes(graph).map_err(|e| QuantError::Exec(Box::new(e.into())))?;
    require_params(qparams, INPUT_ID)?;
    let mut layers = Vec::with_capacity(graph.layers.len());
    for layer in &graph.layers {
        let out = require_params(qparams, &layer.id)?;
        let ins = layer.inputs.iter().map(|i| require_params(qparams, i)).collect::<Result<Vec<_>, _>>()?;
        let input = ins[0];
        let too_large = |value: f64| QuantError::MultiplierTooLarge { layer: layer.id.clone(), value };
        let op = match layer.kind {
            LayerKind::Conv2d | LayerKind::DepthwiseConv2d | LayerKind::FullyConnected => {
                let lw = weights.get(&layer.id).ok_or_else(|| QuantError::MissingWeights(layer.id.clone()))?;
                let w_qp = weight_params(qparams, &layer.id)?;
                let (weight, bias) = quantize_linear(lw, w_qp, input.scale);
                let m = input.scale * w_qp.scale / out.scale;
                let requant = FixedMultiplier::below_one(m).ok_or_else(|| too_large(m))?;
                QuantOp::Linear { weight, bias, requant }
            }
            LayerKind::Activation(act) => QuantOp::Lut { table: activation_table(|x| act.apply(x), input, out) },
            LayerKind::Pool(PoolKind::Max) => QuantOp::MaxPool { rescale: FixedMultiplier::from_real(input.scale / out.scale) },
            LayerKind::Pool(PoolKind::Avg) => {
                let window = (layer.kernel.0 * layer.kernel.1) as f64;
                QuantOp::AvgPool { requant: FixedMultiplier::from_real(input.scale / (out.scale * window)) }
            }
            LayerKind::Add => QuantOp::Add {
                a: FixedMultiplier::from_real(ins[0].scale / out.scale),
                b: FixedMultiplier::from_real(ins[1].scale / out.scale),
            },
            LayerKind::Concat => QuantOp::Concat { rescale: ins.iter().map(|q| FixedMultiplier::from_real(q.scale / out.scale)).collect() },
        };
        layers.push(QuantizedLayer { id: layer.id.clone(), op });
    }
    Ok(QuantizedGraph { graph: graph.clone(), qparams: qparams.clone(), layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, Padding, TensorShape};

    fn one_conv() -> (Graph, Weights) {
        let mut b = GraphBuilder::new("c", TensorShape::new(2, 2, 1));
        b.conv("conv", 1, (1, 1), (1, 1), Padding::ZERO);
        let g = b.finish();
        let mut w = Weights::new();
        w.insert("conv".into(), LayerWeights { shape: vec![1, 1, 1, 1], weight: vec![1.0], bias: vec![5.0] });
        (g, w)
    }

    fn unit(scheme: Scheme) -> TensorQuant {
        TensorQuant::new(1.0, 0, scheme)
    }

    #[test]
    fn identity_scales_pass_bias_through() {
        let (g, w) = one_conv();
        let mut qp = QuantParams::new();
        qp.insert("input".into(), unit(Scheme::Affine));
        qp.insert("conv".into(), TensorQuant::new(2.0, 0, Scheme::Affine));
        qp.insert("conv.weight".into(), unit(Scheme::Symmetric));
        let q = quantize_graph(&g, &w, &qp).unwrap();
        match &q.layers[0].op {
            QuantOp::Linear { bias, weight, requant } => {
                assert_eq!(bias, &vec![5]);
                assert_eq!(weight, &vec![1]);
                assert_eq!(*requant, FixedMultiplier { mantissa: 1 << 30, shift: 0 });
            }
            other => panic!("unexpected op {other:?}"),
        }
    }

    #[test]
    fn multiplier_of_one_is_rejected() {
        let (g, w) = one_conv();
        let mut qp = QuantParams::new();
        qp.insert("input".into(), unit(Scheme::Affine));
        qp.insert("conv".into(), unit(Scheme::Affine));
        qp.insert("conv.weight".into(), unit(Scheme::Symmetric));
        assert!(matches!(quantize_graph(&g, &w, &qp), Err(QuantError::MultiplierTooLarge { .. })));
    }

    #[test]
    fn missing_params_are_named() {
        let (g, w) = one_conv();
        let mut qp = QuantParams::new();
        qp.insert("input".into(), unit(Scheme::Affine));
        qp.insert("conv".into(), unit(Scheme::Affine));
        assert_eq!(quantize_graph(&g, &w, &qp), Err(QuantError::MissingParams("conv.weight".into())));
    }

    #[test]
    fn affine_weights_are_rejected() {
        let (g, w) = one_conv();
        let mut qp = QuantParams::new();
        qp.insert("input".into(), unit(Scheme::Affine));
        qp.insert("conv".into(), TensorQuant::new(2.0, 0, Scheme::Affine));
        qp.insert("conv.weight".into(), TensorQuant::new(1.0, 3, Scheme::Affine));
        assert_eq!(quantize_graph(&g, &w, &qp), Err(QuantError::AsymmetricWeights("conv.weight".into())));
    }
}
