//! Detection post-processing against independent oracles.

mod common;

use proptest::prelude::*;
use tinydeploy::detect::{evaluate_map, nms, BBox, Detection, GroundTruth, ImageDetection};

#[test]
fn nms_matches_oracle_on_1000_instances() {
    for seed in 0..1000 {
        let dets = common::random_nms_instance(seed);
        for (iou_thr, score_thr, top_k) in [(0.5, 0.0, 100), (0.3, 0.25, 100), (0.5, 0.0, 2)] {
            assert_eq!(nms(&dets, iou_thr, score_thr, top_k), common::nms_oracle(&dets, iou_thr, score_thr, top_k), "seed {seed}");
        }
    }
}

#[test]
fn map_matches_naive_evaluator_on_100_datasets() {
    for seed in 0..100 {
        let d = common::random_dataset(seed);
        let got = evaluate_map(&d.detections, &d.ground_truth, 0.5).unwrap().map;
        let want = common::naive_map(&d.detections, &d.ground_truth, 0.5);
        assert!((got - want).abs() <= 1e-9, "seed {seed}: {got} vs {want}");
    }
}

fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).unwrap()
}

#[test]
fn single_perfect_match() {
    let gts = [GroundTruth { image_id: "a".into(), class_id: 0, bbox: bx(0.0, 0.0, 10.0, 10.0) }];
    let dets = [ImageDetection { image_id: "a".into(), detection: Detection { bbox: bx(0.0, 0.0, 10.0, 9.0), class_id: 0, score: 0.8 } }];
    let r = evaluate_map(&dets, &gts, 0.5).unwrap();
    assert_eq!(r.map, 1.0);
}

#[test]
fn duplicate_detection_is_a_false_positive() {
    let gts = [GroundTruth { image_id: "a".into(), class_id: 0, bbox: bx(0.0, 0.0, 10.0, 10.0) }];
    let d = |s| ImageDetection { image_id: "a".into(), detection: Detection { bbox: bx(0.0, 0.0, 10.0, 10.0), class_id: 0, score: s } };
    let r = evaluate_map(&[d(0.9), d(0.8)], &gts, 0.5).unwrap();
    assert_eq!(r.map, 1.0);
    assert_eq!(r.per_class[0].true_positives, 1);
    assert_eq!(r.per_class[0].num_det, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nms_oracle_on_arbitrary_seeds(seed in any::<u64>(), iou_thr in 0.0f64..1.0, score_thr in 0.0f64..1.0, top_k in 0usize..8) {
        let dets = common::random_nms_instance(seed);
        prop_assert_eq!(nms(&dets, iou_thr, score_thr, top_k), common::nms_oracle(&dets, iou_thr, score_thr, top_k));
    }

    #[test]
    fn map_oracle_on_arbitrary_seeds(seed in any::<u64>(), iou_thr in 0.1f64..0.9) {
        let d = common::random_dataset(seed);
        let got = evaluate_map(&d.detections, &d.ground_truth, iou_thr).unwrap().map;
        prop_assert!((got - common::naive_map(&d.detections, &d.ground_truth, iou_thr)).abs() <= 1e-9);
    }

    #[test]
    fn map_is_in_unit_interval(seed in any::<u64>()) {
        let d = common::random_dataset(seed);
        let m = evaluate_map(&d.detections, &d.ground_truth, 0.5).unwrap().map;
        prop_assert!((0.0..=1.0).contains(&m));
    }
}
