//! Plot-ready training series and the markdown run summary.

use std::fmt::Write as _;

use crate::diagnostics::{detect_plateau, has_map50, has_map50_95, EpochLog};
use crate::evaluator::ClassMetrics;

/// `epoch,box_loss,cls_loss,obj_loss,total_loss`, six decimals.
pub fn loss_series_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,box_loss,cls_loss,obj_loss,total_loss\n");
    for l in logs {
        let total = l.box_loss + l.cls_loss + l.obj_loss;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            l.epoch, l.box_loss, l.cls_loss, l.obj_loss, total
        );
    }
    out
}

/// Validation quality per epoch. mAP columns appear only when every epoch
/// has them.
pub fn quality_series_csv(logs: &[EpochLog]) -> String {
    let (m50, m95) = (has_map50(logs), has_map50_95(logs));
    let mut out = String::from("epoch,precision,recall,f1");
    if m50 {
        out.push_str(",map50");
    }
    if m95 {
        out.push_str(",map50_95");
    }
    out.push('\n');
    for l in logs {
        let _ = write!(out, "{},{:.6},{:.6},{:.6}", l.epoch, l.precision, l.recall, l.f1);
        if let (true, Some(v)) = (m50, l.map50) {
            let _ = write!(out, ",{v:.6}");
        }
        if let (true, Some(v)) = (m95, l.map50_95) {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauFinding {
    pub series: &'static str,
    /// `None` when the series never settles or is too short to judge.
    pub epoch: Option<u32>,
    pub too_short: bool,
}

/// Plateau epochs of the total loss, the objectness loss and F1.
pub fn plateau_findings(logs: &[EpochLog], window: usize, epsilon: f64) -> Vec<PlateauFinding> {
    type Pick = fn(&EpochLog) -> f64;
    let series: [(&'static str, Pick); 3] = [
        ("total loss", |l| l.box_loss + l.cls_loss + l.obj_loss),
        ("objectness loss", |l| l.obj_loss),
        ("F1", |l| l.f1),
    ];
    series
        .iter()
        .map(|&(name, pick)| {
            let values: Vec<f64> = logs.iter().map(pick).collect();
            match detect_plateau(&values, window, epsilon) {
                Ok(idx) => PlateauFinding {
                    series: name,
                    epoch: idx.map(|i| logs[i].epoch),
                    too_short: false,
                },
                Err(_) => PlateauFinding {
                    series: name,
                    epoch: None,
                    too_short: true,
                },
            }
        })
        .collect()
}

pub fn metrics_markdown_table(rows: &[ClassMetrics]) -> String {
    let mut out = String::from(
        "| Class | Targets | F1 | Precision | Recall | mAP@.5 | mAP@.5:.95 |\n\
         |---|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.name.replace('|', "\\|"),
            r.targets,
            r.f1,
            r.precision,
            r.recall,
            r.ap50,
            r.ap50_95
        );
    }
    out
}

pub fn summary_markdown(logs: &[EpochLog], metrics: &[ClassMetrics], window: usize, epsilon: f64) -> String {
    let mut out = String::from("# Run summary\n\n## Training\n\n");
    match (logs.first(), logs.last()) {
        (Some(first), Some(last)) => {
            let _ = writeln!(
                out,
                "{} epochs logged ({} to {}).\n",
                logs.len(),
                first.epoch,
                last.epoch
            );
            let _ = writeln!(
                out,
                "A plateau starts at the first epoch of {window} consecutive epochs whose \
                 relative change stays below {epsilon}.\n"
            );
            out.push_str("| Series | Plateau epoch |\n|---|---:|\n");
            for f in plateau_findings(logs, window, epsilon) {
                let cell = match (f.epoch, f.too_short) {
                    (Some(e), _) => e.to_string(),
                    (None, true) => "too few epochs".to_string(),
                    (None, false) => "none".to_string(),
                };
                let _ = writeln!(out, "| {} | {cell} |", f.series);
            }
            let mut series = vec!["box, class and objectness loss", "precision, recall and F1"];
            if has_map50(logs) {
                series.push("mAP@.5");
            }
            if has_map50_95(logs) {
                series.push("mAP@.5:.95");
            }
            let _ = writeln!(out, "\nSeries exported: {}.", series.join("; "));
        }
        _ => out.push_str("No epochs logged.\n"),
    }
    out.push_str("\n## Detection metrics\n\n");
    out.push_str(&metrics_markdown_table(metrics));
    out
}
