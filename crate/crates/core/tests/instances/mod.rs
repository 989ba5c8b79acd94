//! Random small detection problems and conversion to the oracle's types.
#![allow(dead_code)]

use camtrap_core::evaluator::{Detection, GroundTruth};
use camtrap_core::geometry::NormalizedBox;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::{OBox, ODet, OGt};

pub struct Instance {
    pub classes: usize,
    pub dets: Vec<Detection>,
    pub gts: Vec<GroundTruth>,
}

impl Instance {
    pub fn oracle(&self) -> (Vec<ODet>, Vec<OGt>) {
        let ob = |b: &NormalizedBox| OBox {
            cx: b.cx(),
            cy: b.cy(),
            w: b.w(),
            h: b.h(),
        };
        (
            self.dets
                .iter()
                .map(|d| ODet {
                    image: d.image_id.clone(),
                    class: d.class_index,
                    conf: d.confidence,
                    b: ob(&d.bbox),
                })
                .collect(),
            self.gts
                .iter()
                .map(|g| OGt {
                    image: g.image_id.clone(),
                    class: g.class_index,
                    b: ob(&g.bbox),
                })
                .collect(),
        )
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("class{c}")).collect()
    }
}

fn fit(cx: f64, cy: f64, w: f64, h: f64) -> NormalizedBox {
    let w = w.clamp(0.01, 1.0);
    let h = h.clamp(0.01, 1.0);
    let cx = cx.clamp(w / 2.0, 1.0 - w / 2.0);
    let cy = cy.clamp(h / 2.0, 1.0 - h / 2.0);
    NormalizedBox::new(cx, cy, w, h).expect("fitted box is valid")
}

pub fn random_box(rng: &mut ChaCha8Rng) -> NormalizedBox {
    let w = rng.gen_range(0.05..0.5);
    let h = rng.gen_range(0.05..0.5);
    fit(rng.gen(), rng.gen(), w, h)
}

fn jitter(rng: &mut ChaCha8Rng, b: &NormalizedBox, amount: f64) -> NormalizedBox {
    fit(
        b.cx() + rng.gen_range(-amount..=amount) * b.w(),
        b.cy() + rng.gen_range(-amount..=amount) * b.h(),
        b.w() * rng.gen_range(1.0 - amount..=1.0 + amount),
        b.h() * rng.gen_range(1.0 - amount..=1.0 + amount),
    )
}

fn confidence(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.3) {
        f64::from(rng.gen_range(0..=10u8)) / 10.0
    } else {
        rng.gen()
    }
}

/// Up to 10 images, 5 classes and 20 boxes per image.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let classes = rng.gen_range(1..=5);
    let images = rng.gen_range(1..=10);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..images {
        let id = format!("img{:02}", rng.gen_range(0..40));
        if gts.iter().any(|g: &GroundTruth| g.image_id == id) || dets.iter().any(|d: &Detection| d.image_id == id) {
            continue;
        }
        let n_gt = rng.gen_range(0..=10);
        let mut boxes = 0;
        for _ in 0..n_gt {
            let b = random_box(rng);
            let class = rng.gen_range(0..classes);
            gts.push(GroundTruth {
                image_id: id.clone(),
                class_index: class,
                bbox: b,
            });
            boxes += 1;
            if rng.gen_bool(0.7) && boxes < 20 {
                let det_class = if rng.gen_bool(0.8) {
                    class
                } else {
                    rng.gen_range(0..classes)
                };
                let amount = rng.gen_range(0.0..0.4);
                dets.push(Detection {
                    image_id: id.clone(),
                    class_index: det_class,
                    confidence: confidence(rng),
                    bbox: jitter(rng, &b, amount),
                });
                boxes += 1;
            }
        }
        for _ in 0..rng.gen_range(0..=3) {
            if boxes >= 20 {
                break;
            }
            dets.push(Detection {
                image_id: id.clone(),
                class_index: rng.gen_range(0..classes),
                confidence: confidence(rng),
                bbox: random_box(rng),
            });
            boxes += 1;
        }
    }
    // Interleave images so input order is not grouped by image.
    dets.shuffle(rng);
    Instance { classes, dets, gts }
}
