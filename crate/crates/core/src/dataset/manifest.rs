use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Annotation, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{to_pixel, ImageSize, NormalizedBox, PixelBox};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// The local dataset description: class list plus image records.
///
/// Media paths are stored relative to the directory holding the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub images: Vec<ImageRecord>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    schema_version: u32,
    classes: Vec<String>,
    images: Vec<ImageDoc>,
}

#[derive(Serialize, Deserialize)]
struct ImageDoc {
    image_id: String,
    path: String,
    width: u32,
    height: u32,
    location_id: Option<String>,
    annotations: Vec<AnnotationDoc>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationDoc {
    class: String,
    #[serde(rename = "box")]
    bbox: BoxDoc,
    coords: CoordSpace,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct BoxDoc {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

/// How the four box numbers of an annotation are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordSpace {
    Pixel,
    Normalized,
}

impl CoordSpace {
    /// Interprets corner coordinates in this space as a pixel box.
    pub fn to_pixel_box(self, corners: [f64; 4], size: ImageSize) -> Result<PixelBox> {
        let [x0, y0, x1, y1] = corners;
        match self {
            CoordSpace::Pixel => PixelBox::new(x0, y0, x1, y1),
            CoordSpace::Normalized => {
                let nb = NormalizedBox::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)?;
                to_pixel(&nb, size)
            }
        }
    }
}

impl Manifest {
    pub fn new(classes: Vec<String>, mut images: Vec<ImageRecord>) -> Result<Self> {
        images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let manifest = Self { classes, images };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for name in &self.classes {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate class name {name:?}")));
            }
        }
        let mut ids = BTreeSet::new();
        for rec in &self.images {
            rec.validate()?;
            if !ids.insert(rec.image_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate image_id {:?} in manifest",
                    rec.image_id
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ManifestDoc =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed manifest: {e}")))?;
        if doc.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported manifest schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let mut images = Vec::with_capacity(doc.images.len());
        for img in doc.images {
            let size = ImageSize::new(img.width, img.height)?;
            let annotations = img
                .annotations
                .into_iter()
                .map(|a| {
                    let b = a.bbox;
                    let pixel = a
                        .coords
                        .to_pixel_box([b.x_min, b.y_min, b.x_max, b.y_max], size)
                        .map_err(|e| Error::invalid(format!("image {}: {e}", img.image_id)))?;
                    Annotation::new(a.class, pixel)
                })
                .collect::<Result<Vec<_>>>()?;
            images.push(ImageRecord {
                image_id: img.image_id,
                source_uri: img.path,
                size,
                location_id: img.location_id,
                annotations,
            });
        }
        let manifest = Self {
            classes: doc.classes,
            images,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Serializes with pixel coordinates, images in stored order.
    pub fn to_json_string(&self) -> String {
        let doc = ManifestDoc {
            schema_version: MANIFEST_SCHEMA_VERSION,
            classes: self.classes.clone(),
            images: self
                .images
                .iter()
                .map(|rec| ImageDoc {
                    image_id: rec.image_id.clone(),
                    path: rec.source_uri.clone(),
                    width: rec.size.width(),
                    height: rec.size.height(),
                    location_id: rec.location_id.clone(),
                    annotations: rec
                        .annotations
                        .iter()
                        .map(|a| AnnotationDoc {
                            class: a.species_name.clone(),
                            bbox: BoxDoc {
                                x_min: a.bbox.x_min(),
                                y_min: a.bbox.y_min(),
                                x_max: a.bbox.x_max(),
                                y_max: a.bbox.y_max(),
                            },
                            coords: CoordSpace::Pixel,
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Writes atomically via a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json_string()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// Resolves an image's media path against the manifest directory.
    pub fn media_path(manifest_dir: &Path, record: &ImageRecord) -> PathBuf {
        let p = Path::new(&record.source_uri);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }

    /// Rewrites relative media paths so they stay valid when the manifest is
    /// saved in `to_dir` instead of `from_dir`.
    pub fn relocate(&mut self, from_dir: &Path, to_dir: &Path) {
        let from = absolute(from_dir);
        let to = absolute(to_dir);
        if from == to {
            return;
        }
        for rec in &mut self.images {
            let media = Path::new(&rec.source_uri);
            if media.is_absolute() {
                continue;
            }
            let full = from.join(media);
            let rel = pathdiff::diff_paths(&full, &to).unwrap_or(full);
            rec.source_uri = rel.to_string_lossy().replace('\\', "/");
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    let joined = if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|cwd| cwd.join(p))
            .unwrap_or_else(|_| p.to_path_buf())
    };
    // Lexical normalization only; the target may not exist yet.
    let mut out = PathBuf::new();
    for comp in joined.components() {
        match comp {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}
