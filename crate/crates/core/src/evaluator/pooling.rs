use std::collections::{BTreeMap, BTreeSet};

use super::Detection;
use crate::error::{Error, Result};

/// Validation-split predictions of one cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub name: String,
    /// Images this fold was evaluated on.
    pub images: BTreeSet<String>,
    pub detections: Vec<Detection>,
}

impl FoldPredictions {
    /// Fold whose image set is taken to be the images it has detections for.
    pub fn from_detections(name: impl Into<String>, detections: Vec<Detection>) -> Self {
        let images = detections.iter().map(|d| d.image_id.clone()).collect();
        Self {
            name: name.into(),
            images,
            detections,
        }
    }
}

/// Combines per-fold validation predictions into one dataset-wide set.
///
/// Every image must belong to at most one fold, and every detection to an
/// image of its own fold.
pub fn pool_cv(folds: &[FoldPredictions]) -> Result<Vec<Detection>> {
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for fold in folds {
        for image in &fold.images {
            if let Some(prev) = owner.insert(image.as_str(), fold.name.as_str()) {
                return Err(Error::invalid(format!(
                    "image {image} is predicted in both {prev} and {}",
                    fold.name
                )));
            }
        }
        if let Some(d) = fold.detections.iter().find(|d| !fold.images.contains(&d.image_id)) {
            return Err(Error::invalid(format!(
                "{} has a detection for image {} outside its validation split",
                fold.name, d.image_id
            )));
        }
    }
    Ok(folds.iter().flat_map(|f| f.detections.iter().cloned()).collect())
}
