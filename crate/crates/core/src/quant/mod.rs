//! Post-training int8 quantization.
//!
//! Activations use per-tensor affine parameters derived from calibration
//! min/max statistics, weights use per-tensor symmetric parameters, biases are
//! stored as int32 at scale `s_in * s_w`. All rounding is half away from zero.

mod calib;
mod fixed;
pub(crate) mod graph;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use calib::{collect_calibration_stats, CalibStats, TensorStats};
pub(crate) use fixed::rounding_shift;
pub use fixed::FixedMultiplier;
pub use graph::{quantize_graph, QuantOp, QuantizedGraph, QuantizedLayer};

pub const QMIN: i32 = -128;
pub const QMAX: i32 = 127;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("calibration input {index} has shape {got}, graph expects {expected}")]
    CalibrationShape { index: usize, expected: crate::graph::TensorShape, got: crate::graph::TensorShape },
    #[error("no calibration statistics for tensor `{0}`")]
    MissingStats(String),
    #[error("no quantization parameters for tensor `{0}`")]
    MissingParams(String),
    #[error("weight tensor `{0}` must use the symmetric scheme")]
    AsymmetricWeights(String),
    #[error("missing weights for layer `{0}`")]
    MissingWeights(String),
    #[error("layer `{layer}`: requantization multiplier {value} is not below 1 (output scale too small)")]
    MultiplierTooLarge { layer: String, value: f64 },
    #[error("invalid statistics for `{0}`: min > max or no samples")]
    InvalidStats(String),
    #[error(transparent)]
    Exec(#[from] Box<crate::exec::ExecError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Affine,
    Symmetric,
}

/// Affine map between reals and int8 codes: `real = (q - zero_point) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorQuant {
    pub scale: f64,
    pub zero_point: i32,
    pub scheme: Scheme,
}

impl TensorQuant {
    pub fn new(scale: f64, zero_point: i32, scheme: Scheme) -> Self {
        debug_assert!(scale > 0.0);
        debug_assert!(scheme == Scheme::Affine || zero_point == 0);
        TensorQuant { scale, zero_point, scheme }
    }

    #[inline]
    pub fn quantize(&self, x: f64) -> i8 {
        let q = (x / self.scale).round() + self.zero_point as f64;
        q.clamp(QMIN as f64, QMAX as f64) as i8
    }

    #[inline]
    pub fn dequantize(&self, q: i8) -> f64 {
        (q as i32 - self.zero_point) as f64 * self.scale
    }

    /// Quantize then dequantize.
    #[inline]
    pub fn fake(&self, x: f64) -> f64 {
        self.dequantize(self.quantize(x))
    }
}

pub fn quantize_tensor(x: &[f32], qp: &TensorQuant) -> Vec<i8> {
    x.iter().map(|&v| qp.quantize(v as f64)).collect()
}

pub fn dequantize_tensor(q: &[i8], qp: &TensorQuant) -> Vec<f32> {
    q.iter().map(|&v| qp.dequantize(v) as f32).collect()
}

/// Parameters for every quantized tensor, keyed by tensor id (`input`, layer
/// ids for activations, `<layer>.weight` for weights).
pub type QuantParams = BTreeMap<String, TensorQuant>;

/// Which scheme each tensor gets: weights default to symmetric, activations
/// to affine, with optional per-tensor overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemePolicy {
    pub activations: Scheme,
    pub weights: Scheme,
    pub overrides: BTreeMap<String, Scheme>,
}

impl Default for SchemePolicy {
    fn default() -> Self {
        SchemePolicy { activations: Scheme::Affine, weights: Scheme::Symmetric, overrides: BTreeMap::new() }
    }
}

impl SchemePolicy {
    pub fn scheme_for(&self, tensor_id: &str) -> Scheme {
        if let Some(s) = self.overrides.get(tensor_id) {
            return *s;
        }
        if tensor_id.ends_with(".weight") {
            self.weights
        } else {
            self.activations
        }
    }
}

const DEGENERATE_FLOOR: f64 = 1e-8;

/// Quantization parameters for one observed range.
///
/// A degenerate range (`min == max`) gets `scale = max(|min|, 1e-8) / 127`
/// and zero point 0, which maps the constant exactly onto ±127 (or 0).
/// Affine ranges are first widened to contain zero, so that zero (and thus
/// padding) is exactly representable and the zero point never clamps.
pub fn qparams_for_range(min: f64, max: f64, scheme: Scheme) -> TensorQuant {
    if min == max {
        return TensorQuant::new(min.abs().max(DEGENERATE_FLOOR) / 127.0, 0, scheme);
    }
    match scheme {
        Scheme::Affine => {
            let (min, max) = (min.min(0.0), max.max(0.0));
            let scale = (max - min) / 255.0;
            // Rounding the offset first keeps symmetric ranges on zero point 0.
            let zp = (QMIN as f64 - (min / scale).round()).clamp(QMIN as f64, QMAX as f64) as i32;
            TensorQuant::new(scale, zp, scheme)
        }
        Scheme::Symmetric => {
            let bound = min.abs().max(max.abs());
            TensorQuant::new(bound / 127.0, 0, scheme)
        }
    }
}

pub fn derive_qparams(stats: &CalibStats, policy: &SchemePolicy) -> Result<QuantParams, QuantError> {
    stats
        .iter()
        .map(|(id, s)| {
            if s.sample_count == 0 || s.min > s.max {
                return Err(QuantError::InvalidStats(id.clone()));
            }
            Ok((id.clone(), qparams_for_range(s.min, s.max, policy.scheme_for(id))))
        })
        .collect()
}

/// Looks up one tensor's parameters.
pub fn require_params<'a>(qparams: &'a QuantParams, id: &str) -> Result<&'a TensorQuant, QuantError> {
    qparams.get(id).ok_or_else(|| QuantError::MissingParams(id.to_string()))
}
