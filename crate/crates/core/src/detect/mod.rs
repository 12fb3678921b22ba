//! Detection post-processing and evaluation: IoU, SSD anchors and box
//! decoding, per-class NMS, FOMO centroid decoding, and mAP at a single IoU
//! threshold with all-points interpolation.

mod fomo;
mod io;
mod map;
mod ssd;

use serde::{Deserialize, Serialize};

pub use fomo::{decode_fomo, FomoDetection, FomoGrid};
pub use io::{parse_records, read_records, records_to_jsonl, write_records, Record};
pub use map::{ap_by_class, evaluate_map, ClassAp, GroundTruth, ImageDetection, MapReport};
pub use ssd::{decode_ssd, generate_anchors, Anchor, AnchorSpec, FeatureMapSpec};

pub const DEFAULT_IOU_THR: f64 = 0.5;
pub const DEFAULT_SCORE_THR: f64 = 0.25;
pub const DEFAULT_TOP_K: usize = 100;
pub const DEFAULT_VARIANCES: (f64, f64) = (0.1, 0.2);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("{what}: expected {expected} values, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("detection references unknown image `{0}`")]
    UnknownImage(String),
    #[error("invalid box [{0}, {1}, {2}, {3}]: corners out of order or not finite")]
    InvalidBox(f64, f64, f64, f64),
    #[error("score {0} is outside [0, 1]")]
    InvalidScore(f64),
    #[error("invalid anchor spec: {0}")]
    InvalidSpec(String),
    #[error("invalid FOMO grid: {0}")]
    InvalidGrid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Axis-aligned box in corner format, serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, DetectError> {
        let ok = [x1, y1, x2, y2].iter().all(|v| v.is_finite()) && x1 <= x2 && y1 <= y2;
        if !ok {
            return Err(DetectError::InvalidBox(x1, y1, x2, y2));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = DetectError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

/// Per-class greedy non-maximum suppression.
///
/// Drops detections below `score_thr`; within each class, visits detections
/// by descending score (ties: lower input index first) and keeps one iff its
/// IoU with every kept same-class detection is at most `iou_thr`. The result
/// is ordered by descending score (same tie rule) and truncated to `top_k`.
pub fn nms(dets: &[Detection], iou_thr: f64, score_thr: f64, top_k: usize) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score >= score_thr).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let d = &dets[i];
        let suppressed = kept.iter().any(|&k| dets[k].class_id == d.class_id && iou(&dets[k].bbox, &d.bbox) > iou_thr);
        if !suppressed {
            kept.push(i);
        }
    }
    kept.truncate(top_k);
    kept.into_iter().map(|i| dets[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(bbox: BBox, class_id: usize, score: f64) -> Detection {
        Detection { bbox, class_id, score }
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(iou(&a, &b(1.0, 1.0, 3.0, 3.0)), 1.0 / 7.0);
        let point = b(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&point, &point), 0.0);
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(BBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(serde_json::from_str::<BBox>("[0, 0, 1, -1]").is_err());
    }

    /// Two boxes of width 10 offset so that IoU = 0.6.
    fn overlapping() -> (BBox, BBox) {
        // overlap length o on a 10x10 pair: o / (20 - o) = 0.6 -> o = 7.5
        (b(0.0, 0.0, 10.0, 10.0), b(2.5, 0.0, 12.5, 10.0))
    }

    #[test]
    fn nms_suppresses_same_class() {
        let (p, q) = overlapping();
        assert!((iou(&p, &q) - 0.6).abs() < 1e-12);
        let out = nms(&[det(q, 0, 0.8), det(p, 0, 0.9)], 0.5, 0.25, 100);
        assert_eq!(out, vec![det(p, 0, 0.9)]);
    }

    #[test]
    fn nms_keeps_other_classes() {
        let (p, q) = overlapping();
        let out = nms(&[det(p, 0, 0.9), det(q, 1, 0.8)], 0.5, 0.25, 100);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn nms_score_threshold_and_top_k() {
        let a = b(0.0, 0.0, 1.0, 1.0);
        let c = b(5.0, 5.0, 6.0, 6.0);
        let e = b(9.0, 9.0, 10.0, 10.0);
        let out = nms(&[det(a, 0, 0.1), det(c, 0, 0.5), det(e, 0, 0.7)], 0.5, 0.25, 1);
        assert_eq!(out, vec![det(e, 0, 0.7)]);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0f64..10.0, 0.0f64..10.0, 0.5f64..6.0, 0.5f64..6.0).prop_map(|(x, y, w, h)| b(x, y, x + w, y + h))
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        proptest::collection::vec((arb_box(), 0usize..2, 0.0f64..1.0), 0..12)
            .prop_map(|v| v.into_iter().map(|(bx, c, s)| det(bx, c, s)).collect())
    }

    proptest! {
        #[test]
        fn nms_output_is_valid_subset(dets in arb_dets(), thr in 0.1f64..0.9) {
            let out = nms(&dets, thr, 0.2, 100);
            for d in &out {
                prop_assert!(dets.contains(d));
                prop_assert!(d.score >= 0.2);
            }
            for (i, a) in out.iter().enumerate() {
                for c in &out[i + 1..] {
                    prop_assert!(a.class_id != c.class_id || iou(&a.bbox, &c.bbox) <= thr);
                }
            }
        }

        #[test]
        fn nms_invariant_under_monotone_rescale(dets in arb_dets(), k in 0.1f64..3.0) {
            let thr = 0.2;
            let scaled: Vec<Detection> = dets.iter().map(|d| det(d.bbox, d.class_id, (d.score * k).sqrt())).collect();
            let a = nms(&dets, 0.5, thr, 100);
            let s = nms(&scaled, 0.5, (thr * k).sqrt(), 100);
            prop_assert_eq!(a.len(), s.len());
            for (x, y) in a.iter().zip(&s) {
                prop_assert_eq!(x.bbox, y.bbox);
            }
        }

        #[test]
        fn iou_symmetric_and_bounded(p in arb_box(), q in arb_box()) {
            let v = iou(&p, &q);
            prop_assert_eq!(v, iou(&q, &p));
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((iou(&p, &p) - 1.0).abs() < 1e-12);
        }
    }
}
