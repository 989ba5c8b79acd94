//! Detection matching, precision/recall metrics and the confusion matrix.

use std::collections::BTreeMap;

use crate::dataset::{ClassCatalog, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{to_normalized, NormalizedBox};

mod confusion;
pub mod io;
mod matching;
pub mod metrics;
mod pooling;

pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use matching::{match_detections, MatchResult, MatchedPair};
pub use metrics::{
    average_precision, best_operating_point, class_curves, coco_iou_thresholds, f1_score, map_at, pr_curve, ClassAp,
    MapResult, OperatingPoint, PrCurve, PrPoint, PrfScore, ScoredOutcome,
};
pub use pooling::{pool_cv, FoldPredictions};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_index: usize,
    /// Score in `[0, 1]`.
    pub confidence: f64,
    pub bbox: NormalizedBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_index: usize,
    pub bbox: NormalizedBox,
}

/// Ground-truth boxes of every record, in record order.
pub fn ground_truths(records: &[ImageRecord], catalog: &ClassCatalog) -> Result<Vec<GroundTruth>> {
    let mut out = Vec::new();
    for rec in records {
        for ann in &rec.annotations {
            out.push(GroundTruth {
                image_id: rec.image_id.clone(),
                class_index: catalog.require_index(&ann.species_name)?,
                bbox: to_normalized(&ann.bbox, rec.size)?,
            });
        }
    }
    Ok(out)
}

pub(crate) fn validate_inputs(dets: &[Detection], gts: &[GroundTruth], num_classes: usize) -> Result<()> {
    if num_classes == 0 {
        return Err(Error::invalid("class catalog is empty"));
    }
    for d in dets {
        if d.class_index >= num_classes {
            return Err(Error::invalid(format!(
                "detection on {} has class {} but only {num_classes} classes exist",
                d.image_id, d.class_index
            )));
        }
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(Error::invalid(format!(
                "detection on {} has confidence {} outside [0, 1]",
                d.image_id, d.confidence
            )));
        }
    }
    if let Some(g) = gts.iter().find(|g| g.class_index >= num_classes) {
        return Err(Error::invalid(format!(
            "ground truth on {} has class {} but only {num_classes} classes exist",
            g.image_id, g.class_index
        )));
    }
    Ok(())
}

type ImageGroup = (Vec<Detection>, Vec<GroundTruth>);

/// Splits inputs per image, keyed and ordered by image id. Input order is
/// kept within each image.
pub(crate) fn group_by_image(dets: &[Detection], gts: &[GroundTruth]) -> BTreeMap<String, ImageGroup> {
    let mut groups: BTreeMap<String, ImageGroup> = BTreeMap::new();
    for d in dets {
        groups.entry(d.image_id.clone()).or_default().0.push(d.clone());
    }
    for g in gts {
        groups.entry(g.image_id.clone()).or_default().1.push(g.clone());
    }
    groups
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub targets: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap50: f64,
    pub ap50_95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Matching IoU for precision, recall, F1 and the confusion matrix.
    pub iou_threshold: f64,
    /// Confidence cut-off for the confusion matrix.
    pub conf_threshold: f64,
    /// IoU ladder behind the `map50_95` column.
    pub map_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            map_thresholds: coco_iou_thresholds(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `all` first, then one row per class in catalog order.
    pub rows: Vec<ClassMetrics>,
    pub operating_point: OperatingPoint,
    pub map: MapResult,
    /// AP at IoU 0.5 per class.
    pub ap50: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

impl Evaluation {
    pub fn overall(&self) -> &ClassMetrics {
        &self.rows[0]
    }

    pub fn class_rows(&self) -> &[ClassMetrics] {
        &self.rows[1..]
    }
}

/// Full evaluation of one detection set against its ground truth.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    class_names: &[String],
    config: &EvalConfig,
) -> Result<Evaluation> {
    let c = class_names.len();
    if !(0.0..=1.0).contains(&config.iou_threshold) {
        return Err(Error::invalid(format!(
            "IoU threshold {} outside [0, 1]",
            config.iou_threshold
        )));
    }
    let curves = class_curves(dets, gts, c, config.iou_threshold)?;
    let operating_point = best_operating_point(&curves)?;
    let map = map_at(dets, gts, c, &config.map_thresholds)?;
    let ap50_result = match map.thresholds.iter().position(|&t| (t - 0.5).abs() < 1e-12) {
        Some(i) => map.per_class.iter().map(|a| a.ap[i]).collect::<Vec<f64>>(),
        None => map_at(dets, gts, c, &[0.5])?
            .per_class
            .iter()
            .map(|a| a.ap[0])
            .collect(),
    };
    let confusion = confusion_matrix(dets, gts, c, config.conf_threshold, config.iou_threshold)?;

    let included: Vec<usize> = (0..c).filter(|&i| map.per_class[i].included()).collect();
    let mean = |v: &dyn Fn(usize) -> f64| {
        if included.is_empty() {
            0.0
        } else {
            included.iter().map(|&i| v(i)).sum::<f64>() / included.len() as f64
        }
    };
    let (precision, recall) = operating_point.mean_precision_recall();
    let mut rows = vec![ClassMetrics {
        name: "all".into(),
        targets: curves.iter().map(|cv| cv.targets).sum(),
        precision,
        recall,
        f1: f1_score(precision, recall),
        ap50: mean(&|i| ap50_result[i]),
        ap50_95: map.map_over_thresholds(),
    }];
    for (i, name) in class_names.iter().enumerate() {
        let prf = operating_point.per_class[i].unwrap_or_default();
        rows.push(ClassMetrics {
            name: name.clone(),
            targets: curves[i].targets,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            ap50: ap50_result[i],
            ap50_95: map.per_class[i].mean(),
        });
    }
    Ok(Evaluation {
        rows,
        operating_point,
        map,
        ap50: ap50_result,
        confusion,
    })
}

/// Evaluates every fold on its own images and averages the rows.
///
/// Targets are summed across folds. Each class metric is averaged over the
/// folds where that class has targets or detections; the `all` row over
/// every fold.
pub fn evaluate_per_fold_mean(
    folds: &[FoldPredictions],
    gts: &[GroundTruth],
    class_names: &[String],
    config: &EvalConfig,
) -> Result<Vec<ClassMetrics>> {
    if folds.is_empty() {
        return Err(Error::invalid("no folds given"));
    }
    pool_cv(folds)?;
    let mut sums: Vec<ClassMetrics> = std::iter::once("all")
        .chain(class_names.iter().map(String::as_str))
        .map(|name| ClassMetrics {
            name: name.to_string(),
            targets: 0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            ap50: 0.0,
            ap50_95: 0.0,
        })
        .collect();
    let mut counts = vec![0usize; sums.len()];
    for fold in folds {
        let fold_gts: Vec<GroundTruth> = gts
            .iter()
            .filter(|g| fold.images.contains(&g.image_id))
            .cloned()
            .collect();
        let eval = evaluate(&fold.detections, &fold_gts, class_names, config)?;
        for (r, row) in eval.rows.iter().enumerate() {
            sums[r].targets += row.targets;
            if r > 0 && !eval.map.per_class[r - 1].included() {
                continue;
            }
            counts[r] += 1;
            sums[r].precision += row.precision;
            sums[r].recall += row.recall;
            sums[r].f1 += row.f1;
            sums[r].ap50 += row.ap50;
            sums[r].ap50_95 += row.ap50_95;
        }
    }
    for (row, n) in sums.iter_mut().zip(counts) {
        if n > 0 {
            let n = n as f64;
            row.precision /= n;
            row.recall /= n;
            row.f1 /= n;
            row.ap50 /= n;
            row.ap50_95 /= n;
        }
    }
    Ok(sums)
}
