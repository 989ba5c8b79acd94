//! Predictions JSON Lines and the metrics CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassMetrics, Detection};
use crate::error::{Error, Result};
use crate::geometry::{NormalizedBox, TEXT_TOLERANCE};
use crate::splitter::csv_field;

pub const METRICS_HEADER: &str = "class,targets,f1,precision,recall,map50,map50_95";

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    image_id: String,
    class: usize,
    conf: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

/// Parses predictions, one JSON object per line. Blank lines are ignored.
/// When `num_classes` is given, class indices are range-checked.
pub fn parse_predictions(text: &str, source: &Path, num_classes: Option<usize>) -> Result<Vec<Detection>> {
    let mut dets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: PredictionLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(source, lineno, format!("malformed prediction: {e}")))?;
        if raw.image_id.is_empty() {
            return Err(Error::parse(source, lineno, "empty image_id"));
        }
        if !(0.0..=1.0).contains(&raw.conf) {
            return Err(Error::parse(
                source,
                lineno,
                format!("confidence {} outside [0, 1]", raw.conf),
            ));
        }
        if let Some(c) = num_classes {
            if raw.class >= c {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("class {} out of range for {c} classes", raw.class),
                ));
            }
        }
        let [cx, cy, w, h] = raw.bbox;
        let bbox = NormalizedBox::with_tolerance(cx, cy, w, h, TEXT_TOLERANCE)
            .map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        dets.push(Detection {
            image_id: raw.image_id,
            class_index: raw.class,
            confidence: raw.conf,
            bbox,
        });
    }
    Ok(dets)
}

pub fn read_predictions(path: &Path, num_classes: Option<usize>) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, path, num_classes)
}

pub fn prediction_line(det: &Detection) -> String {
    serde_json::to_string(&PredictionLine {
        image_id: det.image_id.clone(),
        class: det.class_index,
        conf: det.confidence,
        bbox: det.bbox.as_array(),
    })
    .expect("prediction serializes")
}

pub fn predictions_to_jsonl(dets: &[Detection]) -> String {
    dets.iter().map(|d| prediction_line(d) + "\n").collect()
}

/// Table-style metrics CSV; rows are written in the given order.
pub fn metrics_to_csv(rows: &[ClassMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            csv_field(&r.name),
            r.targets,
            r.f1,
            r.precision,
            r.recall,
            r.ap50,
            r.ap50_95
        ));
    }
    out
}

pub fn parse_metrics_csv(text: &str, source: &Path) -> Result<Vec<ClassMetrics>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(Error::parse(source, 1, format!("expected header {METRICS_HEADER:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        let num = |idx: usize| -> Result<f64> {
            rec[idx]
                .parse::<f64>()
                .map_err(|e| Error::parse(source, lineno, format!("column {idx}: {e}")))
        };
        rows.push(ClassMetrics {
            name: rec[0].to_string(),
            targets: rec[1]
                .parse()
                .map_err(|e| Error::parse(source, lineno, format!("targets: {e}")))?,
            f1: num(2)?,
            precision: num(3)?,
            recall: num(4)?,
            ap50: num(5)?,
            ap50_95: num(6)?,
        });
    }
    Ok(rows)
}
