use std::collections::BTreeMap;

use super::{ClassCatalog, ImageRecord};
use crate::error::Result;
use crate::splitter::csv_field;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCount {
    pub name: String,
    pub targets: usize,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetStats {
    /// In catalog index order.
    pub classes: Vec<ClassCount>,
    /// Image count per whole-megapixel bucket: key `m` covers `[m, m+1)` MP.
    pub megapixel_histogram: BTreeMap<u32, usize>,
    /// Image count per exact `(width, height)`.
    pub dimensions: BTreeMap<(u32, u32), usize>,
    pub total_images: usize,
    pub total_annotations: usize,
}

impl DatasetStats {
    /// `class,targets,images`, one row per class.
    pub fn class_counts_csv(&self) -> String {
        let mut out = String::from("class,targets,images\n");
        for c in &self.classes {
            out.push_str(&format!("{},{},{}\n", csv_field(&c.name), c.targets, c.images));
        }
        out
    }

    /// `megapixels,images`; bucket `m` covers `[m, m+1)` MP.
    pub fn megapixel_csv(&self) -> String {
        let mut out = String::from("megapixels,images\n");
        for (mp, n) in &self.megapixel_histogram {
            out.push_str(&format!("{mp},{n}\n"));
        }
        out
    }

    pub fn dimensions_csv(&self) -> String {
        let mut out = String::from("width,height,images\n");
        for ((w, h), n) in &self.dimensions {
            out.push_str(&format!("{w},{h},{n}\n"));
        }
        out
    }
}

pub fn dataset_stats(records: &[ImageRecord], catalog: &ClassCatalog) -> Result<DatasetStats> {
    let mut classes: Vec<ClassCount> = catalog
        .entries()
        .iter()
        .map(|e| ClassCount {
            name: e.name.clone(),
            targets: 0,
            images: 0,
        })
        .collect();
    let mut stats = DatasetStats::default();

    for rec in records {
        for ann in &rec.annotations {
            classes[catalog.require_index(&ann.species_name)?].targets += 1;
        }
        for species in rec.species() {
            classes[catalog.require_index(species)?].images += 1;
        }
        let size = rec.size;
        *stats
            .megapixel_histogram
            .entry(size.megapixels().floor() as u32)
            .or_default() += 1;
        *stats.dimensions.entry((size.width(), size.height())).or_default() += 1;
        stats.total_images += 1;
        stats.total_annotations += rec.annotations.len();
    }
    stats.classes = classes;
    Ok(stats)
}
