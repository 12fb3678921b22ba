//! Reference architectures and device profiles used by the bundled fixtures.
//!
//! The JSON files under `fixtures/` are generated from these builders by the
//! `gen_fixtures` example and checked for drift by the test suite.

use std::collections::BTreeMap;

use crate::detect::{AnchorSpec, FeatureMapSpec, DEFAULT_VARIANCES};
use crate::graph::{Activation, Graph, GraphBuilder, Padding, TensorShape};
use crate::perfmodel::{CalibrationPoint, EnergyBudget, Engine, PerfProfile};
use crate::planner::{DeploymentStrategy, MemoryHierarchy, Precision, StrategyKind};
use crate::profile::{Configuration, DeviceProfile};

const KIB: u64 = 1024;
const MIB: u64 = 1024 * 1024;

/// Keras `_make_divisible`.
pub fn make_divisible(v: f64, divisor: usize) -> usize {
    let d = divisor as f64;
    let mut n = (((v + d / 2.0) as usize) / divisor * divisor).max(divisor);
    if (n as f64) < 0.9 * v {
        n += divisor;
    }
    n
}

/// FOMO on a MobileNetV2 (alpha 0.35) backbone cut after `block_6_expand`,
/// with a 32-filter 1x1 head and `classes` output channels (background
/// included). Convs followed by batch norm carry the `batch_norm` flag and
/// stride-2 depthwise convs are preceded by Keras-style asymmetric padding.
pub fn fomo_mobilenet_v2(side: usize, channels: usize, classes: usize) -> Graph {
    let alpha = 0.35;
    let mut b = GraphBuilder::new(
        format!("fomo_mnv2_035_{side}_{}", if channels == 1 { "g" } else { "rgb" }),
        TensorShape::new(side, side, channels),
    );
    b.metadata("family", "fomo").metadata("backbone", "mobilenet_v2").metadata("alpha", alpha).metadata("stride", 8);

    let first = make_divisible(32.0 * alpha, 8);
    b.conv_same("conv1", first, 3, 2).batch_norm().activation("conv1_relu", Activation::Relu6);

    // (expansion, filters, stride); block 6 keeps only its expansion.
    let blocks = [(1, 16, 1), (6, 24, 2), (6, 24, 1), (6, 32, 2), (6, 32, 1), (6, 32, 1)];
    let mut cin = first;
    for (i, &(t, c, s)) in blocks.iter().enumerate() {
        let cout = make_divisible(c as f64 * alpha, 8);
        let src = b.last().to_string();
        if t != 1 {
            b.conv_same(&format!("b{i}_exp"), cin * t, 1, 1).batch_norm().activation(&format!("b{i}_exp_relu"), Activation::Relu6);
        }
        if s == 2 {
            b.zero_pad(&format!("b{i}_pad"), Padding { top: 0, bottom: 1, left: 0, right: 1 });
            b.depthwise(&format!("b{i}_dw"), (3, 3), (2, 2), Padding::ZERO);
        } else {
            b.depthwise_same(&format!("b{i}_dw"), 3, 1);
        }
        b.batch_norm().activation(&format!("b{i}_dw_relu"), Activation::Relu6);
        b.conv_same(&format!("b{i}_proj"), cout, 1, 1).batch_norm();
        if s == 1 && cin == cout {
            let proj = b.last().to_string();
            b.add(&format!("b{i}_add"), &src, &proj);
        }
        cin = cout;
    }
    b.conv_same("b6_exp", cin * 6, 1, 1).batch_norm().activation("b6_exp_relu", Activation::Relu6);
    b.conv_same("head", 32, 1, 1).activation("head_relu", Activation::Relu);
    b.conv_same("logits", classes, 1, 1);
    b.finish()
}

fn pad(k: usize) -> Padding {
    Padding::uniform((k - 1) / 2)
}

/// SSDLite on a MobileNetV3-Large backbone (width 1.3, no squeeze-excite)
/// with four depthwise-separable extra blocks and depthwise-separable heads
/// on six feature maps. `classes` counts background.
pub fn ssdlite_mobilenet_v3(height: usize, width: usize, classes: usize) -> Graph {
    let wm = 1.3;
    let anchors = 6;
    let mut b = GraphBuilder::new(format!("ssdlite_mnv3_{width}x{height}"), TensorShape::new(height, width, 3));
    b.metadata("family", "ssdlite").metadata("backbone", "mobilenet_v3_large").metadata("width_multiplier", wm);
    b.metadata("anchors_per_cell", anchors).metadata("classes", classes);

    b.conv("stem", 16, (3, 3), (2, 2), pad(3)).activation("stem_act", Activation::HardSwish);
    // (kernel, expansion, filters, stride, hard-swish)
    let cfg = [
        (3, 16, 16, 1, false),
        (3, 64, 24, 2, false),
        (3, 72, 24, 1, false),
        (5, 72, 40, 2, false),
        (5, 120, 40, 1, false),
        (5, 120, 40, 1, false),
        (3, 240, 80, 2, true),
        (3, 200, 80, 1, true),
        (3, 184, 80, 1, true),
        (3, 184, 80, 1, true),
        (3, 480, 112, 1, true),
        (3, 672, 112, 1, true),
        (5, 672, 160, 2, true),
        (5, 960, 160, 1, true),
        (5, 960, 160, 1, true),
    ];
    let mut cin = 16;
    let mut features = Vec::new();
    for (i, &(k, e, o, s, hs)) in cfg.iter().enumerate() {
        let (e, o) = if i == 0 { (e, o) } else { (make_divisible(e as f64 * wm, 8), make_divisible(o as f64 * wm, 8)) };
        let act = if hs { Activation::HardSwish } else { Activation::Relu };
        let src = b.last().to_string();
        if e != cin {
            b.conv(&format!("b{i}_exp"), e, (1, 1), (1, 1), Padding::ZERO);
            if i == 12 {
                features.push(b.last().to_string());
            }
            b.activation(&format!("b{i}_exp_act"), act);
        }
        b.depthwise(&format!("b{i}_dw"), (k, k), (s, s), pad(k)).activation(&format!("b{i}_dw_act"), act);
        b.conv(&format!("b{i}_proj"), o, (1, 1), (1, 1), Padding::ZERO);
        if s == 1 && cin == o {
            let proj = b.last().to_string();
            b.add(&format!("b{i}_add"), &src, &proj);
        }
        cin = o;
    }
    b.conv("last", 1152, (1, 1), (1, 1), Padding::ZERO);
    features.push(b.last().to_string());
    b.activation("last_act", Activation::HardSwish);
    for (j, &o) in [512, 512, 256, 128].iter().enumerate() {
        b.conv(&format!("x{j}_reduce"), o / 2, (1, 1), (1, 1), Padding::ZERO).activation(&format!("x{j}_reduce_act"), Activation::Relu6);
        b.depthwise(&format!("x{j}_dw"), (3, 3), (2, 2), pad(3)).activation(&format!("x{j}_dw_act"), Activation::Relu6);
        b.conv(&format!("x{j}_out"), o, (1, 1), (1, 1), Padding::ZERO);
        features.push(b.last().to_string());
        b.activation(&format!("x{j}_out_act"), Activation::Relu6);
    }
    for (f, src) in features.iter().enumerate() {
        for (head, n) in [("cls", classes), ("reg", 4)] {
            b.depthwise_from(&format!("f{f}_{head}_dw"), src, (3, 3), (1, 1), pad(3));
            b.conv(&format!("f{f}_{head}"), anchors * n, (1, 1), (1, 1), Padding::ZERO);
        }
    }
    b.finish()
}

/// Anchors matching [`ssdlite_mobilenet_v3`] at 240x320: two scales times
/// three aspect ratios per cell, scales spaced linearly from 0.2 to 0.95.
pub fn ssdlite_anchor_spec() -> AnchorSpec {
    let grids = [(15, 20), (8, 10), (4, 5), (2, 3), (1, 2), (1, 1)];
    let n = grids.len();
    let scale = |k: usize| 0.2 + 0.75 * k as f64 / (n - 1) as f64;
    let feature_maps = grids
        .iter()
        .enumerate()
        .map(|(k, &grid)| {
            let s = scale(k);
            let next = if k + 1 < n { scale(k + 1) } else { 1.0 };
            FeatureMapSpec { grid, scales: vec![s, (s * next).sqrt()], aspect_ratios: vec![1.0, 2.0, 0.5] }
        })
        .collect();
    AnchorSpec { feature_maps, variances: DEFAULT_VARIANCES }
}

fn single_point(engine: Engine, precision: Precision, mmac: f64, latency_ms: f64, power_mw: f64) -> PerfProfile {
    PerfProfile {
        engine,
        precision,
        throughput_mmac_per_ms: mmac / latency_ms,
        overhead_ms: 0.0,
        active_power_mw: power_mw,
        calibration: vec![CalibrationPoint { mmac, latency_ms }],
    }
}

fn mj(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// STM32H747 (Arduino Portenta H7): no tiling, runtime kept resident.
pub fn stm32h747_profile() -> DeviceProfile {
    let calibration = vec![
        CalibrationPoint { mmac: 5.21, latency_ms: 57.0 },
        CalibrationPoint { mmac: 5.88, latency_ms: 62.0 },
        CalibrationPoint { mmac: 14.49, latency_ms: 158.0 },
        CalibrationPoint { mmac: 16.33, latency_ms: 169.0 },
    ];
    let fit = crate::perfmodel::fit_perf(&calibration).expect("four distinct points");
    DeviceProfile {
        name: "stm32h747".into(),
        hierarchy: MemoryHierarchy {
            l1_bytes: 16 * KIB,
            l2_bytes: MIB,
            onchip_flash_bytes: 2 * MIB,
            offchip_ram_bytes: 8 * MIB,
            offchip_flash_bytes: 16 * MIB,
        },
        strategy: DeploymentStrategy {
            kind: StrategyKind::NoTiling,
            resident_overhead_bytes: 140 * KIB,
            double_buffer: false,
            stream_weights: false,
        },
        configurations: vec![Configuration { name: "default".into(), voltage_v: 3.3, cluster_mhz: 480.0, fc_mhz: 480.0, selected: true }],
        perf: vec![PerfProfile {
            engine: Engine::Cpu,
            precision: Precision::I8,
            throughput_mmac_per_ms: fit.throughput_mmac_per_ms,
            overhead_ms: fit.overhead_ms,
            active_power_mw: 498.0,
            calibration,
        }],
        power: Some(EnergyBudget {
            battery_mah: 1000.0,
            battery_v: 3.7,
            sleep_j_per_day: 214.0,
            per_event_mj: mj(&[("compute", 28.95), ("camera", 0.05), ("radio", 2.0)]),
            compute_engine: None,
        }),
        reference: mj(&[("battery_days_radio", 51.0), ("battery_days_no_radio", 58.0), ("battery_wh", 7.4)]),
    }
}

/// GAP9: tiled execution from L2 into the cluster L1, weights streamed.
pub fn gap9_profile() -> DeviceProfile {
    let ssd = 584.0;
    DeviceProfile {
        name: "gap9".into(),
        hierarchy: MemoryHierarchy {
            l1_bytes: 128 * KIB,
            l2_bytes: 1_677_722,
            onchip_flash_bytes: 2 * MIB,
            offchip_ram_bytes: 32 * MIB,
            offchip_flash_bytes: 64 * MIB,
        },
        strategy: DeploymentStrategy { kind: StrategyKind::Tiled, resident_overhead_bytes: 0, double_buffer: true, stream_weights: true },
        configurations: vec![
            Configuration { name: "min_power".into(), voltage_v: 0.65, cluster_mhz: 150.0, fc_mhz: 150.0, selected: false },
            Configuration { name: "max_efficiency".into(), voltage_v: 0.65, cluster_mhz: 240.0, fc_mhz: 240.0, selected: true },
            Configuration { name: "min_latency".into(), voltage_v: 0.8, cluster_mhz: 370.0, fc_mhz: 370.0, selected: false },
        ],
        perf: vec![
            single_point(Engine::Ne16, Precision::I8, ssd, 147.0, 34.0),
            single_point(Engine::Cluster, Precision::I8, ssd, 249.0, 31.0),
            single_point(Engine::Cluster, Precision::F16, ssd, 462.0, 41.0),
        ],
        power: Some(EnergyBudget {
            battery_mah: 1000.0,
            battery_v: 3.7,
            sleep_j_per_day: 40.0,
            per_event_mj: mj(&[("compute.soc", 3.82), ("compute.memory", 1.03), ("camera", 0.05), ("radio", 2.0)]),
            compute_engine: Some(Engine::Ne16),
        }),
        reference: mj(&[("battery_days_radio", 267.0), ("battery_days_no_radio", 283.0), ("battery_wh", 7.4)]),
    }
}

/// Every bundled model fixture as `(file stem, graph)`.
pub fn model_fixtures() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for side in [96, 160] {
        for (tag, c) in [("g", 1), ("rgb", 3)] {
            out.push((format!("fomo_mnv2_035_{side}_{tag}"), fomo_mobilenet_v2(side, c, 4)));
        }
    }
    out.push(("ssdlite_mnv3_320x240".to_string(), ssdlite_mobilenet_v3(240, 320, 4)));
    out
}

pub fn profile_fixtures() -> Vec<(String, DeviceProfile)> {
    vec![("stm32h747".to_string(), stm32h747_profile()), ("gap9".to_string(), gap9_profile())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{count_macs, count_params, validate};

    #[test]
    fn make_divisible_matches_keras() {
        assert_eq!(make_divisible(11.2, 8), 16);
        assert_eq!(make_divisible(5.6, 8), 8);
        assert_eq!(make_divisible(83.2, 8), 80);
        assert_eq!(make_divisible(8.4, 8), 8);
    }

    #[test]
    fn fomo_counts() {
        let rgb = fomo_mobilenet_v2(96, 3, 4);
        let g = fomo_mobilenet_v2(96, 1, 4);
        validate(&rgb).unwrap();
        assert_eq!(count_params(&rgb).unwrap().total, 20_820);
        assert_eq!(count_params(&g).unwrap().total, 20_532);
        assert_eq!(count_macs(&rgb).unwrap().total, 5_877_504);
    }

    #[test]
    fn ssdlite_counts() {
        let g = ssdlite_mobilenet_v3(240, 320, 4);
        validate(&g).unwrap();
        let macs = count_macs(&g).unwrap().total as f64 / 1e6;
        let params = count_params(&g).unwrap().total as f64 / 1e6;
        assert!((macs / 584.0 - 1.0).abs() < 0.02, "{macs}");
        assert!((params / 3.44 - 1.0).abs() < 0.02, "{params}");
    }

    #[test]
    fn anchor_count_matches_heads() {
        let spec = ssdlite_anchor_spec();
        assert_eq!(crate::detect::generate_anchors(&spec).unwrap().len(), 2454);
    }

    #[test]
    fn profiles_are_valid() {
        for (_, p) in profile_fixtures() {
            p.check().unwrap();
        }
    }
}
