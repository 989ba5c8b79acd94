//! Bounding-box representations and conversions.
//!
//! Two box spaces are used throughout the toolkit:
//!
//! * [`PixelBox`]: corner coordinates in image pixels, origin top-left. This is
//!   how annotations are stored in the manifest.
//! * [`NormalizedBox`]: center/size as fractions of the image dimensions. This is
//!   the detector's label format and the format of prediction files.
//!
//! Coordinates are continuous. Areas are `(x_max - x_min) * (y_max - y_min)`
//! without any `+1` pixel correction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the `[0, 1]` bounds of a [`NormalizedBox`].
pub const NORMALIZED_TOLERANCE: f64 = 1e-9;

/// Slack used when reading text formats with fixed 6-decimal precision
/// (label files, prediction files).
pub const TEXT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawImageSize")]
pub struct ImageSize {
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct RawImageSize {
    width: u32,
    height: u32,
}

impl TryFrom<RawImageSize> for ImageSize {
    type Error = Error;

    fn try_from(raw: RawImageSize) -> Result<Self> {
        ImageSize::new(raw.width, raw.height)
    }
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn megapixels(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height) / 1_000_000.0
    }
}

impl fmt::Display for ImageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Axis-aligned box in pixel corner coordinates.
///
/// Always has strictly positive area and non-negative, finite coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPixelBox")]
pub struct PixelBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

#[derive(Deserialize)]
struct RawPixelBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl TryFrom<RawPixelBox> for PixelBox {
    type Error = Error;

    fn try_from(raw: RawPixelBox) -> Result<Self> {
        PixelBox::new(raw.x_min, raw.y_min, raw.x_max, raw.y_max)
    }
}

impl PixelBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "pixel box has non-finite coordinates: {coords:?}"
            )));
        }
        if x_min < 0.0 || y_min < 0.0 {
            return Err(Error::invalid(format!(
                "pixel box has negative coordinates: {coords:?}"
            )));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::invalid(format!("pixel box has non-positive area: {coords:?}")));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn fits_within(&self, size: ImageSize) -> bool {
        self.x_max <= f64::from(size.width) && self.y_max <= f64::from(size.height)
    }

    fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Center/size box with every component expressed as a fraction of the
/// image dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl NormalizedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::with_tolerance(cx, cy, w, h, NORMALIZED_TOLERANCE)
    }

    /// Like [`NormalizedBox::new`] but with a caller-chosen slack on the
    /// `[0, 1]` bounds. Extent must still be strictly positive.
    pub fn with_tolerance(cx: f64, cy: f64, w: f64, h: f64, tolerance: f64) -> Result<Self> {
        let comps = [cx, cy, w, h];
        if comps.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "normalized box has non-finite components: {comps:?}"
            )));
        }
        if w <= 0.0 || h <= 0.0 || w > 1.0 + tolerance || h > 1.0 + tolerance {
            return Err(Error::invalid(format!(
                "normalized box extent out of (0, 1]: {comps:?}"
            )));
        }
        let inside = |c: f64, extent: f64| c - extent / 2.0 >= -tolerance && c + extent / 2.0 <= 1.0 + tolerance;
        if !inside(cx, w) || !inside(cy, h) {
            return Err(Error::invalid(format!(
                "normalized box exceeds the unit square: {comps:?}"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }
}

fn corner_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let area_a = (a[2] - a[0]) * (a[3] - a[1]);
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

/// Intersection over union of two pixel boxes.
///
/// Both boxes are valid by construction, so the union is never zero.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    corner_iou(a.corners(), b.corners())
}

/// Intersection over union computed directly in normalized space.
///
/// IoU is invariant under per-axis scaling, so this agrees with [`iou`] on
/// the corresponding pixel boxes up to rounding.
pub fn iou_normalized(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    corner_iou(a.corners(), b.corners())
}

/// Converts a pixel box to the normalized center format.
///
/// Fails if the box extends beyond the image; boxes are never clamped.
pub fn to_normalized(b: &PixelBox, size: ImageSize) -> Result<NormalizedBox> {
    if !b.fits_within(size) {
        return Err(Error::invalid(format!(
            "box {:?} exceeds image bounds {size}",
            b.corners()
        )));
    }
    let (w_img, h_img) = (f64::from(size.width), f64::from(size.height));
    NormalizedBox::new(
        (b.x_min + b.x_max) / (2.0 * w_img),
        (b.y_min + b.y_max) / (2.0 * h_img),
        (b.x_max - b.x_min) / w_img,
        (b.y_max - b.y_min) / h_img,
    )
}

/// Converts a normalized box back to pixel corners.
pub fn to_pixel(b: &NormalizedBox, size: ImageSize) -> Result<PixelBox> {
    let (w_img, h_img) = (f64::from(size.width), f64::from(size.height));
    // Tolerated overshoot on the unit square is snapped back onto the image.
    let x_min = ((b.cx - b.w / 2.0) * w_img).clamp(0.0, w_img);
    let y_min = ((b.cy - b.h / 2.0) * h_img).clamp(0.0, h_img);
    let x_max = ((b.cx + b.w / 2.0) * w_img).clamp(0.0, w_img);
    let y_max = ((b.cy + b.h / 2.0) * h_img).clamp(0.0, h_img);
    PixelBox::new(x_min, y_min, x_max, y_max)
}

/// One object in a detector label file: `<class_index> <cx> <cy> <w> <h>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelLine {
    pub class_index: usize,
    pub bbox: NormalizedBox,
}

impl fmt::Display for LabelLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.bbox;
        write!(f, "{} {:.6} {:.6} {:.6} {:.6}", self.class_index, b.cx, b.cy, b.w, b.h)
    }
}

impl FromStr for LabelLine {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 5 {
            return Err(Error::invalid(format!(
                "label line must have 5 space-separated fields, got {}: {line:?}",
                fields.len()
            )));
        }
        let class_index = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::invalid(format!("bad class index {:?}: {e}", fields[0])))?;
        let mut comps = [0.0f64; 4];
        for (slot, raw) in comps.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad coordinate {raw:?}: {e}")))?;
        }
        let bbox = NormalizedBox::with_tolerance(comps[0], comps[1], comps[2], comps[3], TEXT_TOLERANCE)?;
        Ok(LabelLine { class_index, bbox })
    }
}
