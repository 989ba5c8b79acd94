//! Annotated camera-trap images, the on-disk manifest, class catalog
//! construction and dataset statistics.

mod catalog;
pub mod fetch;
mod manifest;
mod stats;

pub use catalog::{build_catalog, ClassCatalog, ClassEntry, OTHER_CLASS};
pub use manifest::{CoordSpace, Manifest, MANIFEST_SCHEMA_VERSION};
pub use stats::{dataset_stats, ClassCount, DatasetStats};

use crate::error::{Error, Result};
use crate::geometry::{ImageSize, PixelBox};

/// One ground-truth animal in an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub species_name: String,
    pub bbox: PixelBox,
}

impl Annotation {
    pub fn new(species_name: impl Into<String>, bbox: PixelBox) -> Result<Self> {
        let species_name = species_name.into();
        if species_name.trim().is_empty() {
            return Err(Error::invalid("annotation species name is empty"));
        }
        Ok(Self { species_name, bbox })
    }
}

/// A camera-trap image with at least one annotated animal.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    /// Media location; relative paths are resolved against the manifest's directory.
    pub source_uri: String,
    pub size: ImageSize,
    pub location_id: Option<String>,
    pub annotations: Vec<Annotation>,
}

impl ImageRecord {
    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::invalid("image record has an empty image_id"));
        }
        if self.annotations.is_empty() {
            return Err(Error::invalid(format!("image {} has no annotations", self.image_id)));
        }
        for ann in &self.annotations {
            if ann.species_name.trim().is_empty() {
                return Err(Error::invalid(format!(
                    "image {} has an annotation without species",
                    self.image_id
                )));
            }
            if !ann.bbox.fits_within(self.size) {
                return Err(Error::invalid(format!(
                    "image {}: box {:?} exceeds image size {}",
                    self.image_id, ann.bbox, self.size
                )));
            }
        }
        Ok(())
    }

    /// Distinct species present in the image, sorted.
    pub fn species(&self) -> std::collections::BTreeSet<&str> {
        self.annotations.iter().map(|a| a.species_name.as_str()).collect()
    }
}
