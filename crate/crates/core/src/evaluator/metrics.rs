//! Precision/recall sweeps, interpolated average precision, mAP over IoU
//! thresholds and confidence operating-point selection.

use super::matching::match_detections;
use super::{group_by_image, validate_inputs, Detection, GroundTruth};
use crate::error::{Error, Result};

/// Number of evenly spaced recall samples used for interpolated AP.
pub const RECALL_SAMPLES: usize = 101;

/// Confidence grid size for operating-point selection.
pub const CONFIDENCE_GRID: usize = 1000;

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum > 0.0 {
        2.0 * precision * recall / sum
    } else {
        0.0
    }
}

/// A detection reduced to what a precision/recall sweep needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub confidence: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub confidence: f64,
    pub tp: usize,
    pub fp: usize,
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative precision/recall after each detection, by descending confidence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    pub targets: usize,
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// A class with neither targets nor detections takes no part in averages.
    pub fn is_empty(&self) -> bool {
        self.targets == 0 && self.points.is_empty()
    }

    /// Cumulative counts over detections with confidence `>= threshold`.
    pub fn counts_at(&self, threshold: f64) -> (usize, usize) {
        let kept = self.points.partition_point(|p| p.confidence >= threshold);
        match kept {
            0 => (0, 0),
            n => (self.points[n - 1].tp, self.points[n - 1].fp),
        }
    }
}

/// Sweeps detections of one class in descending confidence. Equal
/// confidences keep their input order.
pub fn pr_curve(outcomes: &[ScoredOutcome], targets: usize) -> PrCurve {
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let (mut tp, mut fp) = (0usize, 0usize);
    let points = sorted
        .iter()
        .map(|o| {
            if o.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                confidence: o.confidence,
                tp,
                fp,
                recall: if targets == 0 { 0.0 } else { tp as f64 / targets as f64 },
                precision: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect();
    PrCurve { targets, points }
}

/// 101-point interpolated AP.
///
/// Precision is replaced by its running maximum from the right, then read at
/// recall `0.00, 0.01, ..., 1.00` (zero past the largest recall reached) and
/// averaged. Zero targets yields 0.
pub fn average_precision(curve: &PrCurve) -> f64 {
    if curve.targets == 0 || curve.points.is_empty() {
        return 0.0;
    }
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let total: f64 = (0..RECALL_SAMPLES)
        .map(|i| {
            let r = i as f64 / (RECALL_SAMPLES - 1) as f64;
            let idx = curve.points.partition_point(|p| p.recall < r);
            envelope.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    total / RECALL_SAMPLES as f64
}

/// Per-class curves for a whole dataset at one IoU threshold.
///
/// Detections enter each class sweep in image-id order, then input order
/// within the image.
pub fn class_curves(
    dets: &[Detection],
    gts: &[GroundTruth],
    num_classes: usize,
    iou_threshold: f64,
) -> Result<Vec<PrCurve>> {
    validate_inputs(dets, gts, num_classes)?;
    let mut outcomes = vec![Vec::new(); num_classes];
    let mut targets = vec![0usize; num_classes];
    for (_, (img_dets, img_gts)) in group_by_image(dets, gts) {
        let m = match_detections(&img_dets, &img_gts, iou_threshold)?;
        for g in &img_gts {
            targets[g.class_index] += 1;
        }
        for (i, d) in img_dets.iter().enumerate() {
            outcomes[d.class_index].push(ScoredOutcome {
                confidence: d.confidence,
                true_positive: m.is_true_positive(i),
            });
        }
    }
    Ok(outcomes.iter().zip(targets).map(|(o, t)| pr_curve(o, t)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    pub targets: usize,
    pub detections: usize,
    /// AP at each threshold of [`MapResult::thresholds`].
    pub ap: Vec<f64>,
}

impl ClassAp {
    pub fn included(&self) -> bool {
        self.targets > 0 || self.detections > 0
    }

    pub fn mean(&self) -> f64 {
        self.ap.iter().sum::<f64>() / self.ap.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub thresholds: Vec<f64>,
    pub per_class: Vec<ClassAp>,
}

impl MapResult {
    fn mean_over_included(&self, value: impl Fn(&ClassAp) -> f64) -> f64 {
        let vals: Vec<f64> = self.per_class.iter().filter(|c| c.included()).map(value).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Mean AP over included classes at one threshold.
    pub fn map_at_index(&self, t: usize) -> f64 {
        self.mean_over_included(|c| c.ap[t])
    }

    /// Mean AP at a threshold present in [`MapResult::thresholds`].
    pub fn map_at_threshold(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-12)
            .map(|i| self.map_at_index(i))
    }

    /// Mean over included classes of each class's mean AP across thresholds.
    pub fn map_over_thresholds(&self) -> f64 {
        self.mean_over_included(ClassAp::mean)
    }
}

/// AP of every class at every IoU threshold.
pub fn map_at(
    dets: &[Detection],
    gts: &[GroundTruth],
    num_classes: usize,
    iou_thresholds: &[f64],
) -> Result<MapResult> {
    if iou_thresholds.is_empty() {
        return Err(Error::invalid("IoU threshold set is empty"));
    }
    if let Some(t) = iou_thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("IoU threshold {t} outside [0, 1]")));
    }
    let mut per_class: Vec<ClassAp> = (0..num_classes)
        .map(|_| ClassAp {
            targets: 0,
            detections: 0,
            ap: Vec::with_capacity(iou_thresholds.len()),
        })
        .collect();
    for &t in iou_thresholds {
        let curves = class_curves(dets, gts, num_classes, t)?;
        for (entry, curve) in per_class.iter_mut().zip(&curves) {
            entry.targets = curve.targets;
            entry.detections = curve.points.len();
            entry.ap.push(average_precision(curve));
        }
    }
    Ok(MapResult {
        thresholds: iou_thresholds.to_vec(),
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    pub fn from_counts(tp: usize, fp: usize, targets: usize) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if targets == 0 { 0.0 } else { tp as f64 / targets as f64 };
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    /// `None` for classes with neither targets nor detections.
    pub per_class: Vec<Option<PrfScore>>,
    pub mean_f1: f64,
}

impl OperatingPoint {
    /// Macro-averaged precision and recall over participating classes.
    pub fn mean_precision_recall(&self) -> (f64, f64) {
        let scores: Vec<&PrfScore> = self.per_class.iter().flatten().collect();
        if scores.is_empty() {
            return (0.0, 0.0);
        }
        let n = scores.len() as f64;
        (
            scores.iter().map(|s| s.precision).sum::<f64>() / n,
            scores.iter().map(|s| s.recall).sum::<f64>() / n,
        )
    }
}

/// `j / 999` for `j = 0..1000`.
pub fn confidence_grid() -> impl Iterator<Item = f64> {
    (0..CONFIDENCE_GRID).map(|j| j as f64 / (CONFIDENCE_GRID - 1) as f64)
}

fn scores_at(curves: &[PrCurve], threshold: f64) -> Vec<Option<PrfScore>> {
    curves
        .iter()
        .map(|c| {
            (!c.is_empty()).then(|| {
                let (tp, fp) = c.counts_at(threshold);
                PrfScore::from_counts(tp, fp, c.targets)
            })
        })
        .collect()
}

fn mean_f1(scores: &[Option<PrfScore>]) -> f64 {
    let f1s: Vec<f64> = scores.iter().flatten().map(|s| s.f1).collect();
    if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    }
}

/// Confidence threshold on [`confidence_grid`] maximizing the mean F1 over
/// participating classes; the lowest threshold wins ties.
pub fn best_operating_point(curves: &[PrCurve]) -> Result<OperatingPoint> {
    if curves.is_empty() {
        return Err(Error::invalid("no class sweeps given"));
    }
    let mut best = OperatingPoint {
        threshold: 0.0,
        per_class: scores_at(curves, 0.0),
        mean_f1: 0.0,
    };
    best.mean_f1 = mean_f1(&best.per_class);
    for t in confidence_grid().skip(1) {
        let scores = scores_at(curves, t);
        let f1 = mean_f1(&scores);
        if f1 > best.mean_f1 {
            best = OperatingPoint {
                threshold: t,
                per_class: scores,
                mean_f1: f1,
            };
        }
    }
    Ok(best)
}
