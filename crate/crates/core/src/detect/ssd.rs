use serde::{Deserialize, Serialize};

use super::{BBox, DetectError, Detection, DEFAULT_VARIANCES};

/// Prior box in normalized center format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapSpec {
    /// `(rows, cols)`.
    pub grid: (usize, usize),
    pub scales: Vec<f64>,
    pub aspect_ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub feature_maps: Vec<FeatureMapSpec>,
    /// `(center, size)` variances.
    #[serde(default = "default_variances")]
    pub variances: (f64, f64),
}

fn default_variances() -> (f64, f64) {
    DEFAULT_VARIANCES
}

impl AnchorSpec {
    pub fn check(&self) -> Result<(), DetectError> {
        let bad = |m: String| Err(DetectError::InvalidSpec(m));
        if !(self.variances.0 > 0.0 && self.variances.1 > 0.0) {
            return bad("variances must be positive".into());
        }
        for (i, fm) in self.feature_maps.iter().enumerate() {
            if fm.grid.0 == 0 || fm.grid.1 == 0 {
                return bad(format!("feature map {i}: empty grid"));
            }
            if fm.scales.is_empty() || fm.aspect_ratios.is_empty() {
                return bad(format!("feature map {i}: scales and aspect_ratios must be non-empty"));
            }
            if fm.scales.iter().chain(&fm.aspect_ratios).any(|v| !(*v > 0.0)) {
                return bad(format!("feature map {i}: scales and ratios must be positive"));
            }
        }
        Ok(())
    }

    pub fn anchors_per_cell(&self, feature_map: usize) -> usize {
        let fm = &self.feature_maps[feature_map];
        fm.scales.len() * fm.aspect_ratios.len()
    }
}

/// Anchors in feature-map order, then row-major cells, then scale-major
/// `(scale, ratio)` pairs. A ratio `r` gives `w = s * sqrt(r)`,
/// `h = s / sqrt(r)`.
pub fn generate_anchors(spec: &AnchorSpec) -> Result<Vec<Anchor>, DetectError> {
    spec.check()?;
    let mut out = Vec::new();
    for fm in &spec.feature_maps {
        let (gh, gw) = fm.grid;
        for i in 0..gh {
            for j in 0..gw {
                let cx = (j as f64 + 0.5) / gw as f64;
                let cy = (i as f64 + 0.5) / gh as f64;
                for &s in &fm.scales {
                    for &r in &fm.aspect_ratios {
                        let k = r.sqrt();
                        out.push(Anchor { cx, cy, w: s * k, h: s / k });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Decodes raw SSD outputs into pre-NMS detections in pixel coordinates.
///
/// `raw_boxes` holds `(dx, dy, dw, dh)` per anchor; `raw_scores` holds
/// `classes + 1` logits per anchor with background in column 0. One
/// detection is emitted per anchor and non-background class.
pub fn decode_ssd(
    raw_boxes: &[f64],
    raw_scores: &[f64],
    anchors: &[Anchor],
    variances: (f64, f64),
    image_size: (f64, f64),
) -> Result<Vec<Detection>, DetectError> {
    let n = anchors.len();
    if raw_boxes.len() != 4 * n {
        return Err(DetectError::LengthMismatch { what: "box offsets", expected: 4 * n, got: raw_boxes.len() });
    }
    if n == 0 || !raw_scores.len().is_multiple_of(n) || raw_scores.len() / n < 2 {
        return Err(DetectError::LengthMismatch { what: "class logits", expected: 2 * n.max(1), got: raw_scores.len() });
    }
    let columns = raw_scores.len() / n;
    let (vc, vs) = variances;
    let (img_w, img_h) = image_size;
    let mut out = Vec::with_capacity(n * (columns - 1));
    for (k, a) in anchors.iter().enumerate() {
        let d = &raw_boxes[4 * k..4 * k + 4];
        let cx = a.cx + d[0] * vc * a.w;
        let cy = a.cy + d[1] * vc * a.h;
        let w = a.w * (d[2] * vs).exp();
        let h = a.h * (d[3] * vs).exp();
        let clip = |v: f64| v.clamp(0.0, 1.0);
        let bbox =
            BBox::new(clip(cx - w / 2.0) * img_w, clip(cy - h / 2.0) * img_h, clip(cx + w / 2.0) * img_w, clip(cy + h / 2.0) * img_h)?;
        let probs = softmax(&raw_scores[k * columns..(k + 1) * columns]);
        for (c, &p) in probs.iter().enumerate().skip(1) {
            out.push(Detection { bbox, class_id: c - 1, score: p });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_map(grid: (usize, usize), scales: Vec<f64>, aspect_ratios: Vec<f64>) -> AnchorSpec {
        AnchorSpec { feature_maps: vec![FeatureMapSpec { grid, scales, aspect_ratios }], variances: DEFAULT_VARIANCES }
    }

    #[test]
    fn single_cell_anchor() {
        let a = generate_anchors(&one_map((1, 1), vec![0.5], vec![1.0])).unwrap();
        assert_eq!(a, vec![Anchor { cx: 0.5, cy: 0.5, w: 0.5, h: 0.5 }]);
    }

    #[test]
    fn anchor_count_and_order() {
        let a = generate_anchors(&one_map((2, 2), vec![0.2], vec![1.0, 2.0])).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!((a[2].cx, a[2].cy), (0.75, 0.25));
        assert_eq!((a[4].cx, a[4].cy), (0.25, 0.75));
    }

    #[test]
    fn ratio_is_width_over_height() {
        for r in [0.5, 2.0, 3.0] {
            let a = generate_anchors(&one_map((1, 1), vec![0.3], vec![r])).unwrap()[0];
            assert_relative_eq!(a.w / a.h, r, max_relative = 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(generate_anchors(&one_map((1, 1), vec![], vec![1.0])).is_err());
        let mut s = one_map((1, 1), vec![0.5], vec![1.0]);
        s.variances = (0.0, 0.2);
        assert!(generate_anchors(&s).is_err());
    }

    #[test]
    fn zero_offsets_reproduce_anchors() {
        let anchors = [Anchor { cx: 0.5, cy: 0.5, w: 0.5, h: 0.25 }, Anchor { cx: 0.25, cy: 0.75, w: 0.1, h: 0.2 }];
        let d = decode_ssd(&[0.0; 8], &[0.0; 4], &anchors, DEFAULT_VARIANCES, (320.0, 240.0)).unwrap();
        assert_eq!(d[0].bbox, BBox::new(80.0, 90.0, 240.0, 150.0).unwrap());
        assert_relative_eq!(d[1].bbox.x1, 0.2 * 320.0);
        assert_relative_eq!(d[1].bbox.y2, 0.85 * 240.0);
    }

    #[test]
    fn size_offsets_scale_area() {
        let anchors = [Anchor { cx: 0.5, cy: 0.5, w: 0.2, h: 0.2 }];
        let dw = 0.7;
        let d = decode_ssd(&[0.0, 0.0, dw, dw], &[0.0, 0.0], &anchors, DEFAULT_VARIANCES, (1.0, 1.0)).unwrap();
        assert_relative_eq!(d[0].bbox.area(), 0.04 * (2.0 * dw * 0.2).exp(), max_relative = 1e-12);
    }

    #[test]
    fn two_anchor_softmax_by_hand() {
        let anchors = [Anchor { cx: 0.5, cy: 0.5, w: 0.2, h: 0.2 }; 2];
        // anchor 0 logits (0, ln 2, ln 3) -> probs 1/6, 2/6, 3/6
        // anchor 1 logits (1, 1, 1)      -> probs 1/3 each
        let logits = [0.0, 2f64.ln(), 3f64.ln(), 1.0, 1.0, 1.0];
        let d = decode_ssd(&[0.0; 8], &logits, &anchors, DEFAULT_VARIANCES, (1.0, 1.0)).unwrap();
        let scores: Vec<f64> = d.iter().map(|x| x.score).collect();
        for (got, want) in scores.iter().zip([2.0 / 6.0, 3.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        assert_eq!(d.iter().map(|x| x.class_id).collect::<Vec<_>>(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn length_mismatch() {
        let anchors = [Anchor { cx: 0.5, cy: 0.5, w: 0.2, h: 0.2 }];
        assert!(matches!(
            decode_ssd(&[0.0; 3], &[0.0; 2], &anchors, DEFAULT_VARIANCES, (1.0, 1.0)),
            Err(DetectError::LengthMismatch { .. })
        ));
    }
}
