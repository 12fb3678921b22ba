use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::{BBox, DetectError, Detection, GroundTruth, ImageDetection};
use crate::error::{read_file, schema_error, Error};

/// One line of a detections or ground-truth JSONL file. Ground-truth lines
/// omit `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    #[serde(deserialize_with = "image_id")]
    pub image_id: String,
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Accepts string or integer ids.
fn image_id<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(u64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

impl Record {
    pub fn detection(&self, line: usize) -> Result<ImageDetection, DetectError> {
        let score = self.score.ok_or(DetectError::Parse { line, message: "missing `score`".into() })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectError::InvalidScore(score));
        }
        Ok(ImageDetection { image_id: self.image_id.clone(), detection: Detection { bbox: self.bbox, class_id: self.class_id, score } })
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth { image_id: self.image_id.clone(), class_id: self.class_id, bbox: self.bbox }
    }
}

impl From<&ImageDetection> for Record {
    fn from(d: &ImageDetection) -> Self {
        Record { image_id: d.image_id.clone(), class_id: d.detection.class_id, bbox: d.detection.bbox, score: Some(d.detection.score) }
    }
}

/// Parses JSONL text; blank lines are skipped, line numbers start at 1.
pub fn parse_records(text: &str) -> Result<Vec<Record>, DetectError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| DetectError::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<Record>, Error> {
    let path = path.as_ref();
    parse_records(&read_file(path)?).map_err(|e| schema_error(path, e))
}

pub fn records_to_jsonl(records: &[Record]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn write_records(path: impl AsRef<Path>, records: &[Record]) -> Result<(), Error> {
    let path = path.as_ref();
    std::fs::write(path, records_to_jsonl(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "{\"image_id\":\"a\",\"class_id\":0,\"box\":[0.0,0.0,2.0,2.0],\"score\":0.5}\n\n{\"image_id\":7,\"class_id\":1,\"box\":[1,1,3,3]}\n";
        let recs = parse_records(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].image_id, "7");
        assert_eq!(recs[1].score, None);
        assert_eq!(parse_records(&records_to_jsonl(&recs)).unwrap(), recs);
    }

    #[test]
    fn bad_line_reports_number() {
        let err = parse_records("\n{\"image_id\":\"a\",\"class_id\":0,\"box\":[2,0,1,1]}").unwrap_err();
        assert!(matches!(err, DetectError::Parse { line: 2, .. }));
    }

    #[test]
    fn detection_requires_score() {
        let r = parse_records("{\"image_id\":\"a\",\"class_id\":0,\"box\":[0,0,1,1]}").unwrap();
        assert!(r[0].detection(1).is_err());
        assert_eq!(r[0].ground_truth().class_id, 0);
    }
}
