//! Per-epoch training log CSV.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const EPOCH_LOG_HEADER: &str = "epoch,box_loss,cls_loss,obj_loss,precision,recall,f1,map50,map50_95";
const REQUIRED: [&str; 7] = ["epoch", "box_loss", "cls_loss", "obj_loss", "precision", "recall", "f1"];
const OPTIONAL: [&str; 2] = ["map50", "map50_95"];

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: u32,
    pub box_loss: f64,
    pub cls_loss: f64,
    pub obj_loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map50: Option<f64>,
    pub map50_95: Option<f64>,
}

/// Which series a log carries for every epoch.
pub fn has_map50(logs: &[EpochLog]) -> bool {
    !logs.is_empty() && logs.iter().all(|l| l.map50.is_some())
}

pub fn has_map50_95(logs: &[EpochLog]) -> bool {
    !logs.is_empty() && logs.iter().all(|l| l.map50_95.is_some())
}

/// Parses an epoch log. Columns are matched by name; the two mAP columns
/// may be absent or left empty. Rows are returned sorted by epoch.
pub fn parse_training_log(text: &str, source: &Path) -> Result<Vec<EpochLog>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    let mut seen = BTreeSet::new();
    for h in headers.iter() {
        if !REQUIRED.contains(&h) && !OPTIONAL.contains(&h) {
            return Err(Error::parse(source, 1, format!("unknown column {h:?}")));
        }
        if !seen.insert(h) {
            return Err(Error::parse(source, 1, format!("duplicate column {h:?}")));
        }
    }
    if let Some(missing) = REQUIRED.iter().find(|c| !seen.contains(*c)) {
        return Err(Error::parse(source, 1, format!("missing column {missing:?}")));
    }
    let col = |name: &str| headers.iter().position(|h| h == name);

    let mut logs: Vec<(EpochLog, usize)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
        let field = |name: &str| -> Option<&str> { col(name).map(|c| &rec[c]).filter(|s| !s.is_empty()) };
        let number = |name: &str| -> Result<Option<f64>> {
            field(name)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(source, line, format!("{name}: {s:?} is not a number")))
                })
                .transpose()
        };
        let required = |name: &str| -> Result<f64> {
            number(name)?.ok_or_else(|| Error::parse(source, line, format!("{name} is empty")))
        };
        let epoch_text = field("epoch").ok_or_else(|| Error::parse(source, line, "epoch is empty"))?;
        let epoch: u32 = epoch_text.parse().map_err(|_| {
            Error::parse(
                source,
                line,
                format!("epoch {epoch_text:?} is not a non-negative integer"),
            )
        })?;
        let entry = EpochLog {
            epoch,
            box_loss: required("box_loss")?,
            cls_loss: required("cls_loss")?,
            obj_loss: required("obj_loss")?,
            precision: required("precision")?,
            recall: required("recall")?,
            f1: required("f1")?,
            map50: number("map50")?,
            map50_95: number("map50_95")?,
        };
        for (name, v) in [
            ("box_loss", entry.box_loss),
            ("cls_loss", entry.cls_loss),
            ("obj_loss", entry.obj_loss),
        ] {
            if v < 0.0 {
                return Err(Error::parse(source, line, format!("{name} {v} is negative")));
            }
        }
        let ratios = [
            ("precision", Some(entry.precision)),
            ("recall", Some(entry.recall)),
            ("f1", Some(entry.f1)),
            ("map50", entry.map50),
            ("map50_95", entry.map50_95),
        ];
        for (name, v) in ratios {
            if let Some(v) = v.filter(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::parse(source, line, format!("{name} {v} outside [0, 1]")));
            }
        }
        if let Some((_, first)) = logs.iter().find(|(l, _)| l.epoch == epoch) {
            return Err(Error::parse(
                source,
                line,
                format!("duplicate epoch {epoch}, first seen on line {first}"),
            ));
        }
        logs.push((entry, line));
    }
    let mut logs: Vec<EpochLog> = logs.into_iter().map(|(l, _)| l).collect();
    logs.sort_by_key(|l| l.epoch);
    Ok(logs)
}

pub fn read_training_log(path: &Path) -> Result<Vec<EpochLog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_training_log(&text, path)
}

/// Writes the full nine-column layout; missing mAP values become empty cells.
pub fn training_log_to_csv(logs: &[EpochLog]) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            l.epoch,
            l.box_loss,
            l.cls_loss,
            l.obj_loss,
            l.precision,
            l.recall,
            l.f1,
            opt(l.map50),
            opt(l.map50_95)
        ));
    }
    out
}
