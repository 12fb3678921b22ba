use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{iou, BBox, DetectError, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetection {
    pub image_id: String,
    #[serde(flatten)]
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: usize,
    /// `None` for classes without ground truth; they do not enter the mean.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_det: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub iou_thr: f64,
    pub map: f64,
    pub per_class: Vec<ClassAp>,
}

/// Mean average precision at one IoU threshold.
///
/// The image set is the set of ids appearing in `ground_truth`; a detection on
/// any other image is an error. Per class, detections are pooled across
/// images and visited by descending score (ties: input order). Each is a true
/// positive iff its best-IoU unmatched same-class ground truth in the same
/// image reaches `iou_thr`, which then becomes matched. AP is the area under
/// the all-points interpolated precision/recall curve. mAP averages classes
/// with at least one ground truth; it is 0 when there are none.
pub fn evaluate_map(detections: &[ImageDetection], ground_truth: &[GroundTruth], iou_thr: f64) -> Result<MapReport, DetectError> {
    let images: BTreeSet<&str> = ground_truth.iter().map(|g| g.image_id.as_str()).collect();
    if let Some(d) = detections.iter().find(|d| !images.contains(d.image_id.as_str())) {
        return Err(DetectError::UnknownImage(d.image_id.clone()));
    }
    let classes: BTreeSet<usize> = ground_truth.iter().map(|g| g.class_id).chain(detections.iter().map(|d| d.detection.class_id)).collect();

    let mut per_class = Vec::with_capacity(classes.len());
    for &c in &classes {
        let mut gts: HashMap<&str, Vec<(BBox, bool)>> = HashMap::new();
        for g in ground_truth.iter().filter(|g| g.class_id == c) {
            gts.entry(g.image_id.as_str()).or_default().push((g.bbox, false));
        }
        let num_gt: usize = gts.values().map(Vec::len).sum();
        let mut dets: Vec<&ImageDetection> = detections.iter().filter(|d| d.detection.class_id == c).collect();
        dets.sort_by(|a, b| b.detection.score.total_cmp(&a.detection.score));

        let mut tp_flags = Vec::with_capacity(dets.len());
        for d in &dets {
            let mut hit = false;
            if let Some(cands) = gts.get_mut(d.image_id.as_str()) {
                let mut best: Option<(usize, f64)> = None;
                for (k, (g, matched)) in cands.iter().enumerate() {
                    if *matched {
                        continue;
                    }
                    let v = iou(&d.detection.bbox, g);
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((k, v));
                    }
                }
                if let Some((k, v)) = best {
                    if v >= iou_thr {
                        cands[k].1 = true;
                        hit = true;
                    }
                }
            }
            tp_flags.push(hit);
        }
        let true_positives = tp_flags.iter().filter(|&&t| t).count();
        let ap = (num_gt > 0).then(|| average_precision(&tp_flags, num_gt));
        per_class.push(ClassAp { class_id: c, ap, num_gt, num_det: dets.len(), true_positives });
    }

    let aps: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    Ok(MapReport { iou_thr, map, per_class })
}

/// All-points interpolated AP from score-ordered TP flags.
fn average_precision(tp_flags: &[bool], num_gt: usize) -> f64 {
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, &t) in tp_flags.iter().enumerate() {
        tp += t as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}

/// Per-class summary keyed by class id, for reports.
pub fn ap_by_class(report: &MapReport) -> BTreeMap<usize, Option<f64>> {
    report.per_class.iter().map(|c| (c.class_id, c.ap)).collect()
}
