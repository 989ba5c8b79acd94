use std::cmp::Ordering;

use super::{Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::iou_normalized;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    /// Index into the detection slice given to [`match_detections`].
    pub detection: usize,
    /// Index into the ground-truth slice.
    pub ground_truth: usize,
    pub iou: f64,
}

/// Outcome of matching one image's detections against its ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

impl MatchResult {
    pub fn is_true_positive(&self, detection: usize) -> bool {
        self.pairs.iter().any(|p| p.detection == detection)
    }
}

/// Processing order for detections: confidence descending, then class index
/// ascending, then input position.
pub(crate) fn detection_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then_with(|| dets[a].class_index.cmp(&dets[b].class_index))
            .then_with(|| a.cmp(&b))
    });
    order
}

pub(crate) fn check_single_image(dets: &[Detection], gts: &[GroundTruth]) -> Result<()> {
    let mut ids = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()));
    if let Some(first) = ids.next() {
        if let Some(other) = ids.find(|id| *id != first) {
            return Err(Error::invalid(format!(
                "matching expects a single image, got {first:?} and {other:?}"
            )));
        }
    }
    Ok(())
}

/// Class-aware greedy matching within one image.
///
/// Each detection, in [`detection_order`], claims the still-unclaimed
/// ground truth of its own class with the highest IoU, provided that IoU is
/// at least `iou_threshold`. IoU ties go to the lower ground-truth index.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Result<MatchResult> {
    check_single_image(dets, gts)?;
    let mut claimed = vec![false; gts.len()];
    let mut result = MatchResult::default();

    for d in detection_order(dets) {
        let det = &dets[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] || gt.class_index != det.class_index {
                continue;
            }
            let iou = iou_normalized(&det.bbox, &gt.bbox);
            if iou < iou_threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| iou.partial_cmp(&b) == Some(Ordering::Greater)) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) => {
                claimed[g] = true;
                result.pairs.push(MatchedPair {
                    detection: d,
                    ground_truth: g,
                    iou,
                });
            }
            None => result.unmatched_detections.push(d),
        }
    }
    result.unmatched_ground_truths = (0..gts.len()).filter(|&g| !claimed[g]).collect();
    Ok(result)
}
