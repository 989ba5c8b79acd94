use super::matching::detection_order;
use super::{group_by_image, validate_inputs, Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::iou_normalized;
use crate::splitter::csv_field;

/// Detection confusion matrix with a background pseudo-class.
///
/// Rows are predicted classes, columns are true classes; index
/// `num_classes` is background. A missed animal is counted in the
/// background row, a spurious detection in the background column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![vec![0; num_classes + 1]; num_classes + 1],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn background(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted][truth]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn column_sum(&self, truth: usize) -> u64 {
        self.counts.iter().map(|row| row[truth]).sum()
    }

    /// Each column divided by its sum; empty columns stay zero.
    pub fn column_normalized(&self) -> Vec<Vec<f64>> {
        let sums: Vec<u64> = (0..=self.num_classes).map(|c| self.column_sum(c)).collect();
        self.counts
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&sums)
                    .map(|(&v, &s)| if s == 0 { 0.0 } else { v as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    fn header(names: &[String]) -> String {
        let mut line = String::from("predicted\\true");
        for n in names {
            line.push(',');
            line.push_str(&csv_field(n));
        }
        line.push_str(",background\n");
        line
    }

    fn row_label(&self, names: &[String], row: usize) -> String {
        if row == self.num_classes {
            "background".to_string()
        } else {
            csv_field(&names[row])
        }
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = Self::header(names);
        for (r, row) in self.counts.iter().enumerate() {
            out.push_str(&self.row_label(names, r));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Column-normalized values with three decimals.
    pub fn to_normalized_csv(&self, names: &[String]) -> String {
        let mut out = Self::header(names);
        for (r, row) in self.column_normalized().iter().enumerate() {
            out.push_str(&self.row_label(names, r));
            for v in row {
                out.push_str(&format!(",{v:.3}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the confusion matrix at one operating point.
///
/// Detections below `conf_threshold` are dropped. Within each image, all
/// detection/ground-truth pairs with IoU at least `iou_threshold` are taken
/// greedily by descending IoU regardless of class (ties: detection order,
/// then ground-truth index); each box takes part in at most one pair.
pub fn confusion_matrix(
    dets: &[Detection],
    gts: &[GroundTruth],
    num_classes: usize,
    conf_threshold: f64,
    iou_threshold: f64,
) -> Result<ConfusionMatrix> {
    for (name, t) in [("confidence", conf_threshold), ("IoU", iou_threshold)] {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("{name} threshold {t} outside [0, 1]")));
        }
    }
    validate_inputs(dets, gts, num_classes)?;
    let mut cm = ConfusionMatrix::new(num_classes);
    let bg = cm.background();

    for (_, (img_dets, img_gts)) in group_by_image(dets, gts) {
        let kept: Vec<Detection> = img_dets
            .into_iter()
            .filter(|d| d.confidence >= conf_threshold)
            .collect();
        let order = detection_order(&kept);
        let mut candidates = Vec::new();
        for (rank, &d) in order.iter().enumerate() {
            for (g, gt) in img_gts.iter().enumerate() {
                let iou = iou_normalized(&kept[d].bbox, &gt.bbox);
                if iou >= iou_threshold && iou > 0.0 {
                    candidates.push((iou, rank, g, d));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        let mut det_used = vec![false; kept.len()];
        let mut gt_used = vec![false; img_gts.len()];
        for (_, _, g, d) in candidates {
            if det_used[d] || gt_used[g] {
                continue;
            }
            det_used[d] = true;
            gt_used[g] = true;
            cm.counts[kept[d].class_index][img_gts[g].class_index] += 1;
        }
        for (g, gt) in img_gts.iter().enumerate() {
            if !gt_used[g] {
                cm.counts[bg][gt.class_index] += 1;
            }
        }
        for (d, det) in kept.iter().enumerate() {
            if !det_used[d] {
                cm.counts[det.class_index][bg] += 1;
            }
        }
    }
    Ok(cm)
}
