//! Calibrated latency, per-inference energy and battery lifetime.
//!
//! Latency is affine in MACs: `overhead_ms + mmac / throughput_mmac_per_ms`.
//! The overhead term absorbs idle periods such as the initial tensor
//! transfers that do not overlap with compute.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::planner::Precision;

/// Joules per mAh at one volt.
const J_PER_MAH_V: f64 = 3.6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerfError {
    #[error("a fit needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("all calibration points share the same MAC count")]
    DegeneratePoints,
    #[error("daily energy drain is zero")]
    ZeroDailyDrain,
    #[error("invalid performance profile: {0}")]
    InvalidProfile(String),
    #[error("invalid energy budget: {0}")]
    InvalidBudget(String),
    #[error("no performance profile for engine {engine} at {precision}")]
    NoProfile { engine: Engine, precision: Precision },
    #[error("unknown engine `{0}` (expected cpu, cluster or ne16)")]
    UnknownEngine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Cpu,
    Cluster,
    Ne16,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Cpu => "cpu",
            Engine::Cluster => "cluster",
            Engine::Ne16 => "ne16",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = PerfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu" => Ok(Engine::Cpu),
            "cluster" => Ok(Engine::Cluster),
            "ne16" => Ok(Engine::Ne16),
            other => Err(PerfError::UnknownEngine(other.to_string())),
        }
    }
}

/// One measured (MMAC, latency) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub mmac: f64,
    pub latency_ms: f64,
}

/// Latency and power of one (engine, precision) pair on a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfProfile {
    pub engine: Engine,
    pub precision: Precision,
    pub throughput_mmac_per_ms: f64,
    pub overhead_ms: f64,
    pub active_power_mw: f64,
    /// Measurements the throughput and overhead were fitted on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calibration: Vec<CalibrationPoint>,
}

impl PerfProfile {
    pub fn check(&self) -> Result<(), PerfError> {
        let bad = |m: &str| Err(PerfError::InvalidProfile(format!("{} {}: {m}", self.engine, self.precision)));
        if !(self.throughput_mmac_per_ms > 0.0) {
            return bad("throughput must be positive");
        }
        if !(self.overhead_ms >= 0.0) {
            return bad("overhead must be non-negative");
        }
        if !(self.active_power_mw > 0.0) {
            return bad("power must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub mmac: f64,
    pub latency_ms: f64,
    pub predicted_ms: f64,
    /// `(predicted - measured) / measured`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfFit {
    pub throughput_mmac_per_ms: f64,
    pub overhead_ms: f64,
    pub residuals: Vec<Residual>,
}

impl PerfFit {
    pub fn slope_ms_per_mmac(&self) -> f64 {
        1.0 / self.throughput_mmac_per_ms
    }

    pub fn max_relative_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.relative.abs()).fold(0.0, f64::max)
    }

    fn with_residuals(throughput: f64, overhead: f64, points: &[CalibrationPoint]) -> Self {
        let residuals = points
            .iter()
            .map(|p| {
                let predicted_ms = overhead + p.mmac / throughput;
                Residual { mmac: p.mmac, latency_ms: p.latency_ms, predicted_ms, relative: (predicted_ms - p.latency_ms) / p.latency_ms }
            })
            .collect();
        PerfFit { throughput_mmac_per_ms: throughput, overhead_ms: overhead, residuals }
    }
}

/// Ordinary least squares `latency = overhead + slope * mmac`.
pub fn fit_perf(points: &[CalibrationPoint]) -> Result<PerfFit, PerfError> {
    if points.len() < 2 {
        return Err(PerfError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.mmac).sum::<f64>() / n;
    let my = points.iter().map(|p| p.latency_ms).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.mmac - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(PerfError::DegeneratePoints);
    }
    let sxy: f64 = points.iter().map(|p| (p.mmac - mx) * (p.latency_ms - my)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(PerfError::InvalidProfile(format!("fitted slope {slope} ms/MMAC is not positive")));
    }
    Ok(PerfFit::with_residuals(1.0 / slope, my - slope * mx, points))
}

/// Single-point fit with the overhead pinned to zero.
pub fn fit_through_origin(point: CalibrationPoint) -> Result<PerfFit, PerfError> {
    if !(point.mmac > 0.0 && point.latency_ms > 0.0) {
        return Err(PerfError::InvalidProfile("calibration point must be positive".into()));
    }
    Ok(PerfFit::with_residuals(point.mmac / point.latency_ms, 0.0, &[point]))
}

pub fn estimate_latency(total_mmac: f64, profile: &PerfProfile) -> f64 {
    profile.overhead_ms + total_mmac / profile.throughput_mmac_per_ms
}

pub fn frame_rate_hz(latency_ms: f64) -> f64 {
    1000.0 / latency_ms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBudget {
    pub battery_mah: f64,
    pub battery_v: f64,
    pub sleep_j_per_day: f64,
    /// Per-inference energy by component. Keys `compute` or `compute.*`
    /// replace the power x latency product; `radio` counts only when the
    /// radio is enabled; every other key always counts.
    pub per_event_mj: BTreeMap<String, f64>,
    /// Engine the explicit compute energy was measured on; other engines
    /// fall back to power x latency. `None` applies it to every engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_engine: Option<Engine>,
}

impl EnergyBudget {
    pub fn capacity_j(&self) -> f64 {
        self.battery_mah * self.battery_v * J_PER_MAH_V
    }

    pub fn check(&self) -> Result<(), PerfError> {
        let fields = [("battery_mah", self.battery_mah), ("battery_v", self.battery_v), ("sleep_j_per_day", self.sleep_j_per_day)];
        for (name, v) in fields.into_iter().chain(self.per_event_mj.iter().map(|(k, v)| (k.as_str(), *v))) {
            if !(v >= 0.0) {
                return Err(PerfError::InvalidBudget(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DutyCycle {
    pub inferences_per_day: u64,
    pub radio_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputeSource {
    PowerTimesLatency,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyItem {
    pub component: String,
    pub mj: f64,
}

/// Itemized per-inference energy; `total_mj` is the sum of `items`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub items: Vec<EnergyItem>,
    pub total_mj: f64,
    pub compute_source: ComputeSource,
    /// Power x latency, reported even when the budget overrides it.
    pub power_latency_mj: f64,
}

fn is_compute(key: &str) -> bool {
    key == "compute" || key.starts_with("compute.")
}

pub fn estimate_inference_energy(latency_ms: f64, profile: &PerfProfile, budget: &EnergyBudget, radio_enabled: bool) -> EnergyReport {
    let power_latency_mj = profile.active_power_mw * latency_ms / 1000.0;
    let applies = budget.compute_engine.is_none_or(|e| e == profile.engine);
    let explicit: Vec<EnergyItem> = budget
        .per_event_mj
        .iter()
        .filter(|(k, _)| applies && is_compute(k))
        .map(|(k, v)| EnergyItem { component: k.clone(), mj: *v })
        .collect();
    let (mut items, compute_source) = if explicit.is_empty() {
        (vec![EnergyItem { component: "compute".into(), mj: power_latency_mj }], ComputeSource::PowerTimesLatency)
    } else {
        (explicit, ComputeSource::Budget)
    };
    for (k, v) in &budget.per_event_mj {
        if is_compute(k) || (k == "radio" && !radio_enabled) {
            continue;
        }
        items.push(EnergyItem { component: k.clone(), mj: *v });
    }
    let total_mj = items.iter().map(|i| i.mj).sum();
    EnergyReport { items, total_mj, compute_source, power_latency_mj }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryEstimate {
    /// Rounded to the nearest whole day.
    pub days: u64,
    pub exact_days: f64,
    pub capacity_j: f64,
    pub daily_j: f64,
}

/// `capacity / (sleep + inferences * energy)`, rounded to the nearest day.
pub fn estimate_battery_days(budget: &EnergyBudget, duty: &DutyCycle, e_inference_mj: f64) -> Result<BatteryEstimate, PerfError> {
    let daily_j = budget.sleep_j_per_day + duty.inferences_per_day as f64 * e_inference_mj / 1000.0;
    if !(daily_j > 0.0) {
        return Err(PerfError::ZeroDailyDrain);
    }
    let capacity_j = budget.capacity_j();
    let exact_days = capacity_j / daily_j;
    Ok(BatteryEstimate { days: exact_days.round() as u64, exact_days, capacity_j, daily_j })
}
