use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exec::run_float;
use crate::graph::{Graph, INPUT_ID};
use crate::tensor::Tensor;
use crate::weights::{weight_id, Weights};

use super::QuantError;

/// Observed range of one tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorStats {
    pub min: f64,
    pub max: f64,
    pub sample_count: u64,
}

impl TensorStats {
    pub fn observe(values: &[f32]) -> Self {
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
        TensorStats { min, max, sample_count: 1 }
    }

    /// Associative and commutative.
    pub fn merge(self, other: Self) -> Self {
        TensorStats { min: self.min.min(other.min), max: self.max.max(other.max), sample_count: self.sample_count + other.sample_count }
    }
}

/// Statistics keyed by tensor id: `input`, each layer id, and
/// `<layer>.weight` for weighted layers.
pub type CalibStats = BTreeMap<String, TensorStats>;

fn merge_maps(mut a: CalibStats, b: CalibStats) -> CalibStats {
    for (id, s) in b {
        a.entry(id).and_modify(|e| *e = e.merge(s)).or_insert(s);
    }
    a
}

/// Runs float inference on every calibration input (in parallel) and records
/// running min/max of the graph input and of every layer output. Weight
/// ranges are added once per weighted layer.
pub fn collect_calibration_stats(graph: &Graph, weights: &Weights, inputs: &[Tensor<f32>]) -> Result<CalibStats, QuantError> {
    if inputs.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    for (index, x) in inputs.iter().enumerate() {
        if x.shape != graph.input_shape {
            return Err(QuantError::CalibrationShape { index, expected: graph.input_shape, got: x.shape });
        }
    }
    let mut stats = inputs
        .par_iter()
        .map(|x| {
            let trace = run_float(graph, weights, x).map_err(|e| QuantError::Exec(Box::new(e)))?;
            let mut s = CalibStats::new();
            s.insert(INPUT_ID.to_string(), TensorStats::observe(&x.data));
            for out in &trace.layers {
                s.insert(out.id.clone(), TensorStats::observe(&out.values.data));
            }
            Ok::<_, QuantError>(s)
        })
        .try_reduce(CalibStats::new, |a, b| Ok(merge_maps(a, b)))?;
    for layer in graph.layers.iter().filter(|l| l.kind.has_weights()) {
        if let Some(lw) = weights.get(&layer.id) {
            stats.insert(weight_id(&layer.id), TensorStats::observe(&lw.weight));
        }
    }
    Ok(stats)
}
