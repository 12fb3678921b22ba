//! Memory feasibility: per-layer footprints, peak memory, the deployability
//! gate, and L1 tiling for the tiled strategy.
//!
//! A layer's footprint is input + weights + bias + output bytes. Activation
//! layers run in place, so their footprint is their input only. Under the
//! no-tiling strategy the peak additionally holds the resident runtime and the
//! input image, which is never freed.

mod tiling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{infer_shapes, Graph, GraphError, LayerKind};
use crate::profile::DeviceProfile;

pub use tiling::{tile_layer, tile_layer_streaming};

pub const KIB: u64 = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("unknown precision `{0}` (expected f32, f16 or i8)")]
    UnknownPrecision(String),
    #[error("layer `{0}` cannot be tiled")]
    NotTileable(String),
    #[error("layer `{layer}` is untileable: a 1x1 output tile needs {required} B, L1 budget is {budget} B")]
    Untileable { layer: String, required: u64, budget: u64 },
    #[error("L1 budget must be positive")]
    ZeroBudget,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F16,
    I8,
}

impl Precision {
    /// Bytes per activation or weight element.
    pub fn element_bytes(self) -> u64 {
        match self {
            Precision::F32 => 4,
            Precision::F16 => 2,
            Precision::I8 => 1,
        }
    }

    /// Bytes per bias element; int8 deployments keep int32 biases.
    pub fn bias_bytes(self) -> u64 {
        match self {
            Precision::F32 | Precision::I8 => 4,
            Precision::F16 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F16 => "f16",
            Precision::I8 => "i8",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f16" => Ok(Precision::F16),
            "i8" => Ok(Precision::I8),
            other => Err(PlanError::UnknownPrecision(other.to_string())),
        }
    }
}

/// Capacities in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryHierarchy {
    #[serde(rename = "l1")]
    pub l1_bytes: u64,
    #[serde(rename = "l2")]
    pub l2_bytes: u64,
    #[serde(rename = "flash")]
    pub onchip_flash_bytes: u64,
    #[serde(rename = "ram")]
    pub offchip_ram_bytes: u64,
    #[serde(rename = "offchip_flash")]
    pub offchip_flash_bytes: u64,
}

impl MemoryHierarchy {
    /// Non-fatal inconsistencies.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.l1_bytes > self.l2_bytes {
            w.push(format!("L1 ({} B) is larger than L2 ({} B)", self.l1_bytes, self.l2_bytes));
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    NoTiling,
    Tiled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentStrategy {
    pub kind: StrategyKind,
    /// Runtime/OS bytes kept resident for the whole inference (no_tiling only).
    #[serde(default)]
    pub resident_overhead_bytes: u64,
    #[serde(default)]
    pub double_buffer: bool,
    /// Layers whose weights exceed L1 may be split along output channels
    /// and streamed from L2.
    #[serde(default)]
    pub stream_weights: bool,
}

impl DeploymentStrategy {
    pub fn no_tiling(resident_overhead_bytes: u64) -> Self {
        DeploymentStrategy { kind: StrategyKind::NoTiling, resident_overhead_bytes, double_buffer: false, stream_weights: false }
    }

    pub fn tiled(double_buffer: bool) -> Self {
        DeploymentStrategy { kind: StrategyKind::Tiled, resident_overhead_bytes: 0, double_buffer, stream_weights: false }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.kind == StrategyKind::Tiled && self.resident_overhead_bytes != 0 {
            return Err("resident_overhead_bytes must be 0 for the tiled strategy".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFootprint {
    pub id: String,
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub bias_bytes: u64,
    pub output_bytes: u64,
    pub total_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Deployable,
    NotDeployable { reason: String },
}

impl Verdict {
    pub fn is_deployable(&self) -> bool {
        matches!(self, Verdict::Deployable)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Deployable => f.write_str("deployable"),
            Verdict::NotDeployable { reason } => write!(f, "N.D. ({reason})"),
        }
    }
}

/// L1 working-set choice for one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSchedule {
    pub layer_id: String,
    pub tile_h: usize,
    pub tile_w: usize,
    /// Output channels per tile; below the layer's channel count only when
    /// weights are streamed.
    pub tile_c: usize,
    pub buffers_bytes: u64,
    pub n_tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub precision: Precision,
    pub strategy: StrategyKind,
    pub layers: Vec<LayerFootprint>,
    /// Largest per-layer footprint.
    pub max_layer_bytes: u64,
    /// Runtime overhead plus input image (no_tiling only).
    pub resident_bytes: u64,
    pub peak_bytes: u64,
    pub peak_layer_id: String,
    pub total_weight_bytes: u64,
    pub verdict: Option<Verdict>,
    pub tiles: Option<Vec<TileSchedule>>,
    /// Layers that admit no tile schedule, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub untileable: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MemoryPlan {
    /// Activation plus weight bytes of the peak layer (bias excluded).
    pub fn peak_activation_weight_bytes(&self) -> u64 {
        self.layers.iter().find(|l| l.id == self.peak_layer_id).map_or(0, |l| l.input_bytes + l.weight_bytes + l.output_bytes)
    }

    pub fn layer(&self, id: &str) -> Option<&LayerFootprint> {
        self.layers.iter().find(|l| l.id == id)
    }
}

/// Per-layer footprints and peak; the verdict is left unset.
pub fn peak_memory(
    graph: &Graph,
    precision: Precision,
    strategy: &DeploymentStrategy,
    _hierarchy: &MemoryHierarchy,
) -> Result<MemoryPlan, PlanError> {
    let shapes = infer_shapes(graph)?;
    let e = precision.element_bytes();
    let mut layers = Vec::with_capacity(graph.layers.len());
    for (i, layer) in graph.layers.iter().enumerate() {
        let ins = shapes.inputs_of(layer);
        let out = shapes.layers[i];
        let input_bytes: u64 = ins.iter().map(|s| s.elements() as u64 * e).sum();
        let weight_elems = crate::weights::weight_shape(layer, ins[0], out).map_or(0, |s| s.iter().product::<usize>()) as u64;
        let bias_bytes = if layer.kind.has_weights() { out.channels as u64 * precision.bias_bytes() } else { 0 };
        let output_bytes = match layer.kind {
            LayerKind::Activation(_) => 0,
            _ => out.elements() as u64 * e,
        };
        let weight_bytes = weight_elems * e;
        layers.push(LayerFootprint {
            id: layer.id.clone(),
            input_bytes,
            weight_bytes,
            bias_bytes,
            output_bytes,
            total_bytes: input_bytes + weight_bytes + bias_bytes + output_bytes,
        });
    }
    // first layer wins ties, keeping the choice deterministic
    let peak = layers.iter().fold(&layers[0], |best, l| if l.total_bytes > best.total_bytes { l } else { best });
    let max_layer_bytes = peak.total_bytes;
    let peak_layer_id = peak.id.clone();
    let resident_bytes = match strategy.kind {
        StrategyKind::NoTiling => strategy.resident_overhead_bytes + graph.input_shape.elements() as u64 * e,
        StrategyKind::Tiled => 0,
    };
    let total_weight_bytes = layers.iter().map(|l| l.weight_bytes + l.bias_bytes).sum();
    Ok(MemoryPlan {
        precision,
        strategy: strategy.kind,
        layers,
        max_layer_bytes,
        resident_bytes,
        peak_bytes: max_layer_bytes + resident_bytes,
        peak_layer_id,
        total_weight_bytes,
        verdict: None,
        tiles: None,
        untileable: Vec::new(),
        notes: Vec::new(),
    })
}

/// The no-tiling gate on its own: deployable iff `peak_bytes <= l2_bytes`.
pub fn l2_gate(peak_bytes: u64, l2_bytes: u64) -> Verdict {
    if peak_bytes <= l2_bytes {
        Verdict::Deployable
    } else {
        Verdict::NotDeployable {
            reason: format!("peak {:.1} KB exceeds the {:.1} KB L2", peak_bytes as f64 / KIB as f64, l2_bytes as f64 / KIB as f64),
        }
    }
}

pub fn check_deployable(plan: &MemoryPlan, hierarchy: &MemoryHierarchy, strategy: &DeploymentStrategy) -> Verdict {
    match strategy.kind {
        StrategyKind::NoTiling => l2_gate(plan.peak_bytes, hierarchy.l2_bytes),
        StrategyKind::Tiled => {
            if let Some((id, reason)) = plan.untileable.first() {
                return Verdict::NotDeployable { reason: format!("layer `{id}`: {reason}") };
            }
            if plan.tiles.is_none() {
                return Verdict::NotDeployable { reason: "no tile schedule computed".into() };
            }
            if plan.total_weight_bytes > hierarchy.offchip_flash_bytes {
                return Verdict::NotDeployable {
                    reason: format!("weights ({} B) exceed off-chip flash ({} B)", plan.total_weight_bytes, hierarchy.offchip_flash_bytes),
                };
            }
            Verdict::Deployable
        }
    }
}

/// Footprints, tiling (tiled strategy) and verdict for one device profile.
pub fn plan_graph(graph: &Graph, precision: Precision, profile: &DeviceProfile) -> Result<MemoryPlan, PlanError> {
    let hierarchy = &profile.hierarchy;
    let strategy = &profile.strategy;
    let mut plan = peak_memory(graph, precision, strategy, hierarchy)?;
    plan.notes.extend(hierarchy.warnings());
    if strategy.kind == StrategyKind::Tiled {
        let shapes = infer_shapes(graph)?;
        let mut tiles = Vec::new();
        for (i, layer) in graph.layers.iter().enumerate() {
            let ins = shapes.inputs_of(layer);
            let out = shapes.layers[i];
            let spatial = tile_layer(layer, &ins, out, precision, hierarchy.l1_bytes, strategy.double_buffer);
            let schedule = match spatial {
                Err(PlanError::Untileable { .. }) if strategy.stream_weights => {
                    tile_layer_streaming(layer, &ins, out, precision, hierarchy.l1_bytes, strategy.double_buffer)
                }
                other => other,
            };
            match schedule {
                Ok(t) => tiles.push(t),
                Err(e) => plan.untileable.push((layer.id.clone(), e.to_string())),
            }
        }
        let streamed = tiles.iter().zip(&shapes.layers).filter(|(t, s)| t.tile_c < s.channels).count();
        if streamed > 0 {
            plan.notes.push(format!("{streamed} layer(s) stream weights from L2 in output-channel slices"));
        }
        if plan.peak_bytes > hierarchy.l2_bytes {
            plan.notes.push(format!(
                "peak layer {:.1} KB exceeds L2 {:.1} KB; its tensors are staged through off-chip RAM",
                plan.peak_bytes as f64 / KIB as f64,
                hierarchy.l2_bytes as f64 / KIB as f64
            ));
        }
        plan.tiles = Some(tiles);
    }
    plan.verdict = Some(check_deployable(&plan, hierarchy, strategy));
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, TensorShape};

    fn toy() -> Graph {
        let mut b = GraphBuilder::new("toy", TensorShape::new(4, 4, 1));
        b.conv_same("c", 8, 3, 1);
        b.finish()
    }

    fn hierarchy(l2: u64) -> MemoryHierarchy {
        MemoryHierarchy { l1_bytes: 16 * KIB, l2_bytes: l2, onchip_flash_bytes: 0, offchip_ram_bytes: 0, offchip_flash_bytes: 0 }
    }

    #[test]
    fn toy_footprint_by_hand() {
        let p = peak_memory(&toy(), Precision::I8, &DeploymentStrategy::tiled(false), &hierarchy(KIB)).unwrap();
        let l = &p.layers[0];
        assert_eq!((l.input_bytes, l.weight_bytes, l.bias_bytes, l.output_bytes), (16, 72, 32, 128));
        assert_eq!(l.total_bytes, 248);
        assert_eq!(p.peak_bytes, 248);
    }

    #[test]
    fn f32_scales_activations_and_weights_by_four() {
        let s = DeploymentStrategy::tiled(false);
        let a = peak_memory(&toy(), Precision::I8, &s, &hierarchy(KIB)).unwrap();
        let b = peak_memory(&toy(), Precision::F32, &s, &hierarchy(KIB)).unwrap();
        let (x, y) = (&a.layers[0], &b.layers[0]);
        assert_eq!(y.input_bytes, 4 * x.input_bytes);
        assert_eq!(y.weight_bytes, 4 * x.weight_bytes);
        assert_eq!(y.output_bytes, 4 * x.output_bytes);
    }

    #[test]
    fn no_tiling_adds_overhead_and_image() {
        let p = peak_memory(&toy(), Precision::I8, &DeploymentStrategy::no_tiling(1000), &hierarchy(KIB)).unwrap();
        assert_eq!(p.peak_bytes, 248 + 1000 + 16);
    }

    #[test]
    fn gate_boundaries() {
        assert!(!l2_gate(1070 * KIB, 1024 * KIB).is_deployable());
        assert!(l2_gate(398 * KIB, 1024 * KIB).is_deployable());
        assert!(l2_gate(1024 * KIB, 1024 * KIB).is_deployable());
    }

    #[test]
    fn activations_are_in_place() {
        let mut b = GraphBuilder::new("a", TensorShape::new(4, 4, 2));
        b.activation("r", crate::graph::Activation::Relu);
        let p = peak_memory(&b.finish(), Precision::I8, &DeploymentStrategy::tiled(false), &hierarchy(KIB)).unwrap();
        assert_eq!(p.layers[0].total_bytes, 32);
    }

    #[test]
    fn precision_parsing() {
        assert_eq!("f16".parse::<Precision>().unwrap(), Precision::F16);
        assert_eq!("bf16".parse::<Precision>(), Err(PlanError::UnknownPrecision("bf16".into())));
    }
}
