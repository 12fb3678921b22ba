//! Generators and independent oracles shared by the integration tests and
//! the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinydeploy::detect::{iou, BBox, Detection, GroundTruth, ImageDetection};
use tinydeploy::exec::{quantize_input, run_fakequant, run_int8};
use tinydeploy::graph::{infer_shapes, Activation, Graph, GraphBuilder, Padding, PoolKind, TensorShape};
use tinydeploy::quant::{collect_calibration_stats, derive_qparams, quantize_graph, SchemePolicy};
use tinydeploy::weights::{random_inputs, random_weights};

/// A random valid graph of 1 to `max_layers` layers over a small input.
pub fn random_graph(seed: u64, max_layers: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = TensorShape::new(rng.gen_range(3..9), rng.gen_range(3..9), rng.gen_range(1..4));
    let mut b = GraphBuilder::new(format!("random_{seed}"), input);
    let n = rng.gen_range(1..=max_layers);
    for i in 0..n {
        let id = format!("l{i}");
        let cur = b.shape_of(b.last());
        let last = i + 1 == n;
        // residual partner: an earlier tensor with the current shape
        let partner: Option<String> =
            (0..i).map(|j| format!("l{j}")).chain(["input".to_string()]).filter(|t| *t != b.last()).find(|t| b.shape_of(t) == cur);
        match rng.gen_range(0..9) {
            0 | 1 => {
                let k = if rng.gen_bool(0.5) { 1 } else { 3 };
                let s = if cur.height >= 4 && rng.gen_bool(0.3) { 2 } else { 1 };
                b.conv_same(&id, rng.gen_range(1..6), k, s);
            }
            2 => {
                let s = if cur.height >= 4 && rng.gen_bool(0.3) { 2 } else { 1 };
                b.depthwise_same(&id, 3, s);
            }
            3 => {
                let act = [Activation::Relu, Activation::Relu6, Activation::HardSwish][rng.gen_range(0..3)];
                b.activation(&id, act);
            }
            4 if cur.height >= 2 && cur.width >= 2 => {
                let kind = if rng.gen_bool(0.5) { PoolKind::Max } else { PoolKind::Avg };
                b.pool(&id, kind, (2, 2), (2, 2), Padding::ZERO);
            }
            5 if partner.is_some() => {
                let a = b.last().to_string();
                b.add(&id, &a, partner.as_deref().unwrap());
            }
            6 if partner.is_some() => {
                let a = b.last().to_string();
                b.concat(&id, &[&a, partner.as_deref().unwrap()]);
            }
            7 if last => {
                b.fully_connected(&id, rng.gen_range(1..5));
            }
            _ => {
                b.conv_same(&id, rng.gen_range(1..6), 1, 1);
            }
        }
    }
    let g = b.finish();
    infer_shapes(&g).expect("generated graph is valid");
    g
}

/// Largest element-wise gap between the int8 and fake-quant outputs of a
/// random graph, in output quantization steps.
pub fn int8_vs_fakequant_steps(seed: u64) -> f64 {
    let graph = random_graph(seed, 5);
    let shapes = infer_shapes(&graph).unwrap();
    let weights = random_weights(&graph, &shapes, seed);
    let inputs = random_inputs(graph.input_shape, 3, -1.0, 1.0, seed ^ 0x5eed);
    let stats = collect_calibration_stats(&graph, &weights, &inputs).unwrap();
    let qparams = derive_qparams(&stats, &SchemePolicy::default()).unwrap();
    let qgraph = quantize_graph(&graph, &weights, &qparams).unwrap();
    let out_id = &graph.layers.last().unwrap().id;
    let scale = qparams[out_id].scale;
    let mut worst: f64 = 0.0;
    for x in &inputs {
        let fake = run_fakequant(&graph, &weights, &qparams, x).unwrap();
        let int = run_int8(&qgraph, &quantize_input(qgraph.input_params(), x)).unwrap();
        for (a, b) in fake.output().values.data.iter().zip(&int.output().values.data) {
            worst = worst.max(((*a as f64) - (*b as f64)).abs() / scale);
        }
    }
    worst
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: f64) -> BBox {
    let x1 = rng.gen_range(0.0..extent);
    let y1 = rng.gen_range(0.0..extent);
    BBox::new(x1, y1, x1 + rng.gen_range(1.0..extent / 2.0), y1 + rng.gen_range(1.0..extent / 2.0)).unwrap()
}

/// Six detections over two classes in a small field, so overlaps are common.
/// Scores come from a coarse grid to exercise ties.
pub fn random_nms_instance(seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..6)
        .map(|_| Detection { bbox: random_box(&mut rng, 20.0), class_id: rng.gen_range(0..2), score: rng.gen_range(0..10) as f64 / 10.0 })
        .collect()
}

/// NMS from its definition: per class, walk candidates by descending score
/// (lower index first on ties) and keep one iff its IoU with every kept
/// same-class detection is at most the threshold; then keep the `top_k`
/// highest-scoring survivors overall.
pub fn nms_oracle(dets: &[Detection], iou_thr: f64, score_thr: f64, top_k: usize) -> Vec<Detection> {
    let mut survivors: Vec<usize> = Vec::new();
    let mut classes: Vec<usize> = dets.iter().map(|d| d.class_id).collect();
    classes.sort();
    classes.dedup();
    for c in classes {
        let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class_id == c && dets[i].score >= score_thr).collect();
        order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap().then(a.cmp(&b)));
        let mut kept: Vec<usize> = Vec::new();
        for i in order {
            if kept.iter().all(|&k| iou(&dets[i].bbox, &dets[k].bbox) <= iou_thr) {
                kept.push(i);
            }
        }
        survivors.extend(kept);
    }
    survivors.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap().then(a.cmp(&b)));
    survivors.truncate(top_k);
    survivors.into_iter().map(|i| dets[i]).collect()
}

pub struct Dataset {
    pub detections: Vec<ImageDetection>,
    pub ground_truth: Vec<GroundTruth>,
}

pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = rng.gen_range(1..5);
    let classes = rng.gen_range(1..4);
    let mut ground_truth = Vec::new();
    let mut detections = Vec::new();
    for img in 0..images {
        let image_id = format!("img{img}");
        for _ in 0..rng.gen_range(0..5) {
            let gt = GroundTruth { image_id: image_id.clone(), class_id: rng.gen_range(0..classes), bbox: random_box(&mut rng, 40.0) };
            // a jittered copy often matches, sometimes not
            if rng.gen_bool(0.7) {
                let j = |v: f64, r: &mut ChaCha8Rng| v + r.gen_range(-3.0..3.0);
                let b = gt.bbox;
                let (x1, y1) = (j(b.x1, &mut rng), j(b.y1, &mut rng));
                let bbox = BBox::new(x1, y1, x1.max(j(b.x2, &mut rng)), y1.max(j(b.y2, &mut rng))).unwrap();
                detections.push(ImageDetection {
                    image_id: image_id.clone(),
                    detection: Detection { bbox, class_id: gt.class_id, score: rng.gen_range(0..20) as f64 / 20.0 },
                });
            }
            ground_truth.push(gt);
        }
        let has_gt = ground_truth.iter().any(|g: &GroundTruth| g.image_id == image_id);
        for _ in 0..if has_gt { rng.gen_range(0..4) } else { 0 } {
            detections.push(ImageDetection {
                image_id: image_id.clone(),
                detection: Detection {
                    bbox: random_box(&mut rng, 40.0),
                    class_id: rng.gen_range(0..classes),
                    score: rng.gen_range(0..20) as f64 / 20.0,
                },
            });
        }
    }
    Dataset { detections, ground_truth }
}

/// mAP computed independently: per class, detections in score order (stable
/// on input order) each claim the best-IoU unclaimed ground truth of their
/// image; AP is the area under the precision envelope summed over every
/// recall step.
pub fn naive_map(dets: &[ImageDetection], gts: &[GroundTruth], iou_thr: f64) -> f64 {
    let mut classes: Vec<usize> = gts.iter().map(|g| g.class_id).collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &c in &classes {
        let class_gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == c).collect();
        let mut order: Vec<&ImageDetection> = dets.iter().filter(|d| d.detection.class_id == c).collect();
        order.sort_by(|a, b| b.detection.score.partial_cmp(&a.detection.score).unwrap());
        let mut claimed = vec![false; class_gts.len()];
        let mut flags = Vec::new();
        for d in order {
            let mut best: Option<(usize, f64)> = None;
            for (k, g) in class_gts.iter().enumerate() {
                if g.image_id != d.image_id || claimed[k] {
                    continue;
                }
                let v = iou(&g.bbox, &d.detection.bbox);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((k, v));
                }
            }
            match best {
                Some((k, v)) if v >= iou_thr => {
                    claimed[k] = true;
                    flags.push(true);
                }
                _ => flags.push(false),
            }
        }
        let n = class_gts.len() as f64;
        let mut points = Vec::new();
        let mut tp = 0.0;
        for (i, &hit) in flags.iter().enumerate() {
            if hit {
                tp += 1.0;
            }
            points.push((tp / n, tp / (i as f64 + 1.0)));
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for (i, &(r, _)) in points.iter().enumerate() {
            if r > prev_recall {
                let envelope = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
                ap += (r - prev_recall) * envelope;
                prev_recall = r;
            }
        }
        total += ap;
    }
    total / classes.len() as f64
}

/// Fixtures on disk keyed by file name.
pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn by_name<T: Clone>(items: &[(String, T)]) -> BTreeMap<String, T> {
    items.iter().cloned().collect()
}
