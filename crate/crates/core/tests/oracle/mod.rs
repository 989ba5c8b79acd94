//! Brute-force reference evaluator.
//!
//! Written straight from the metric definitions with its own types and no
//! shared code paths: every sample point, threshold and grid value is
//! recomputed from scratch.
#![allow(dead_code)]

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ODet {
    pub image: String,
    pub class: usize,
    pub conf: f64,
    pub b: OBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OGt {
    pub image: String,
    pub class: usize,
    pub b: OBox,
}

pub fn iou(a: &OBox, b: &OBox) -> f64 {
    let (ax0, ax1) = (a.cx - a.w / 2.0, a.cx + a.w / 2.0);
    let (ay0, ay1) = (a.cy - a.h / 2.0, a.cy + a.h / 2.0);
    let (bx0, bx1) = (b.cx - b.w / 2.0, b.cx + b.w / 2.0);
    let (by0, by1) = (b.cy - b.h / 2.0, b.cy + b.h / 2.0);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn images(dets: &[ODet], gts: &[OGt]) -> Vec<String> {
    let mut ids: Vec<String> = dets
        .iter()
        .map(|d| d.image.clone())
        .chain(gts.iter().map(|g| g.image.clone()))
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// True-positive flag for every detection (indexed like `dets`).
pub fn class_aware_tp(dets: &[ODet], gts: &[OGt], t: f64) -> Vec<bool> {
    let mut tp = vec![false; dets.len()];
    for img in images(dets, gts) {
        let di: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].image == img).collect();
        let gi: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].image == img).collect();
        // Selection sort by (confidence desc, class asc, position asc).
        let mut order = Vec::new();
        let mut left = di.clone();
        while !left.is_empty() {
            let mut best = 0;
            for k in 1..left.len() {
                let (a, b) = (&dets[left[k]], &dets[left[best]]);
                let better = a.conf > b.conf
                    || (a.conf == b.conf && (a.class < b.class || (a.class == b.class && left[k] < left[best])));
                if better {
                    best = k;
                }
            }
            order.push(left.remove(best));
        }
        let mut taken = vec![false; gi.len()];
        for d in order {
            let mut pick: Option<usize> = None;
            let mut pick_iou = -1.0;
            for (k, &g) in gi.iter().enumerate() {
                if taken[k] || gts[g].class != dets[d].class {
                    continue;
                }
                let v = iou(&dets[d].b, &gts[g].b);
                if v >= t && v > pick_iou {
                    pick = Some(k);
                    pick_iou = v;
                }
            }
            if let Some(k) = pick {
                taken[k] = true;
                tp[d] = true;
            }
        }
    }
    tp
}

/// One class's sweep: (confidence, tp) in evaluation order, plus targets.
pub struct Sweep {
    pub targets: usize,
    pub outcomes: Vec<(f64, bool)>,
}

impl Sweep {
    pub fn included(&self) -> bool {
        self.targets > 0 || !self.outcomes.is_empty()
    }
}

pub fn sweeps(dets: &[ODet], gts: &[OGt], classes: usize, t: f64) -> Vec<Sweep> {
    let tp = class_aware_tp(dets, gts, t);
    (0..classes)
        .map(|c| {
            let mut idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class == c).collect();
            // Descending confidence; ties by image id, then position.
            idx.sort_by(|&a, &b| {
                dets[b]
                    .conf
                    .partial_cmp(&dets[a].conf)
                    .unwrap()
                    .then(dets[a].image.cmp(&dets[b].image))
                    .then(a.cmp(&b))
            });
            Sweep {
                targets: gts.iter().filter(|g| g.class == c).count(),
                outcomes: idx.iter().map(|&i| (dets[i].conf, tp[i])).collect(),
            }
        })
        .collect()
}

/// 101-point AP: at each recall sample, the best precision among all
/// prefixes reaching at least that recall.
pub fn ap(s: &Sweep) -> f64 {
    if s.targets == 0 {
        return 0.0;
    }
    let mut prefixes = Vec::new();
    for n in 1..=s.outcomes.len() {
        let tp = s.outcomes[..n].iter().filter(|o| o.1).count();
        prefixes.push((tp as f64 / s.targets as f64, tp as f64 / n as f64));
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let best = prefixes
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

pub struct MapOut {
    pub map50: f64,
    pub map50_95: f64,
    pub ap50: Vec<f64>,
    pub ap_mean: Vec<f64>,
    pub included: Vec<bool>,
}

pub fn map(dets: &[ODet], gts: &[OGt], classes: usize) -> MapOut {
    let ladder: Vec<f64> = (0..10).map(|i| (50.0 + 5.0 * i as f64) / 100.0).collect();
    let per_t: Vec<Vec<f64>> = ladder
        .iter()
        .map(|&t| sweeps(dets, gts, classes, t).iter().map(ap).collect())
        .collect();
    let included: Vec<bool> = sweeps(dets, gts, classes, 0.5).iter().map(Sweep::included).collect();
    let ap50: Vec<f64> = per_t[0].clone();
    let ap_mean: Vec<f64> = (0..classes)
        .map(|c| per_t.iter().map(|v| v[c]).sum::<f64>() / ladder.len() as f64)
        .collect();
    let n = included.iter().filter(|x| **x).count();
    let avg = |v: &[f64]| {
        if n == 0 {
            0.0
        } else {
            (0..classes).filter(|&c| included[c]).map(|c| v[c]).sum::<f64>() / n as f64
        }
    };
    MapOut {
        map50: avg(&ap50),
        map50_95: avg(&ap_mean),
        ap50,
        ap_mean,
        included,
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per class (p, r, f1), `None` for excluded classes.
pub type Scores = Vec<Option<(f64, f64, f64)>>;

/// (threshold, per-class scores, mean F1).
pub fn best_threshold(dets: &[ODet], gts: &[OGt], classes: usize, t: f64) -> (f64, Scores, f64) {
    let sw = sweeps(dets, gts, classes, t);
    let mut best: Option<(f64, Scores, f64)> = None;
    for j in 0..1000 {
        let th = j as f64 / 999.0;
        let scores: Scores = sw
            .iter()
            .map(|s| {
                if !s.included() {
                    return None;
                }
                let tp = s.outcomes.iter().filter(|o| o.0 >= th && o.1).count();
                let fp = s.outcomes.iter().filter(|o| o.0 >= th && !o.1).count();
                let p = if tp + fp == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fp) as f64
                };
                let r = if s.targets == 0 {
                    0.0
                } else {
                    tp as f64 / s.targets as f64
                };
                Some((p, r, f1(p, r)))
            })
            .collect();
        let f1s: Vec<f64> = scores.iter().flatten().map(|s| s.2).collect();
        let mean = if f1s.is_empty() {
            0.0
        } else {
            f1s.iter().sum::<f64>() / f1s.len() as f64
        };
        if best.as_ref().is_none_or(|b| mean > b.2) {
            best = Some((th, scores, mean));
        }
    }
    best.unwrap()
}

/// Class-agnostic confusion counts, `(C+1) x (C+1)`, rows predicted.
pub fn confusion(dets: &[ODet], gts: &[OGt], classes: usize, conf: f64, t: f64) -> Vec<Vec<u64>> {
    let bg = classes;
    let mut m = vec![vec![0u64; classes + 1]; classes + 1];
    for img in images(dets, gts) {
        // Kept detections in (confidence desc, class asc, position) rank.
        let mut di: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].image == img && dets[i].conf >= conf)
            .collect();
        di.sort_by(|&a, &b| {
            dets[b]
                .conf
                .partial_cmp(&dets[a].conf)
                .unwrap()
                .then(dets[a].class.cmp(&dets[b].class))
                .then(a.cmp(&b))
        });
        let gi: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].image == img).collect();
        let mut d_used = vec![false; di.len()];
        let mut g_used = vec![false; gi.len()];
        loop {
            // Highest remaining IoU; ties to better-ranked detection, then lower gt.
            let mut best: Option<(f64, usize, usize)> = None;
            for (r, &d) in di.iter().enumerate() {
                if d_used[r] {
                    continue;
                }
                for (k, &g) in gi.iter().enumerate() {
                    if g_used[k] {
                        continue;
                    }
                    let v = iou(&dets[d].b, &gts[g].b);
                    if v >= t && v > 0.0 && best.is_none_or(|(bv, _, _)| v > bv) {
                        best = Some((v, r, k));
                    }
                }
            }
            let Some((_, r, k)) = best else { break };
            d_used[r] = true;
            g_used[k] = true;
            m[dets[di[r]].class][gts[gi[k]].class] += 1;
        }
        for (k, &g) in gi.iter().enumerate() {
            if !g_used[k] {
                m[bg][gts[g].class] += 1;
            }
        }
        for (r, &d) in di.iter().enumerate() {
            if !d_used[r] {
                m[dets[d].class][bg] += 1;
            }
        }
    }
    m
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Metrics table: `all` row, then each class.
pub fn metrics_csv(names: &[String], dets: &[ODet], gts: &[OGt], iou_t: f64) -> String {
    let c = names.len();
    let m = map(dets, gts, c);
    let (_, scores, _) = best_threshold(dets, gts, c, iou_t);
    let part: Vec<&(f64, f64, f64)> = scores.iter().flatten().collect();
    let (mp, mr) = if part.is_empty() {
        (0.0, 0.0)
    } else {
        (
            part.iter().map(|s| s.0).sum::<f64>() / part.len() as f64,
            part.iter().map(|s| s.1).sum::<f64>() / part.len() as f64,
        )
    };
    let mut out = String::from("class,targets,f1,precision,recall,map50,map50_95\n");
    let _ = writeln!(
        out,
        "all,{},{:.6},{:.6},{:.6},{:.6},{:.6}",
        gts.len(),
        f1(mp, mr),
        mp,
        mr,
        m.map50,
        m.map50_95
    );
    for (i, name) in names.iter().enumerate() {
        let (p, r, f) = scores[i].unwrap_or((0.0, 0.0, 0.0));
        let targets = gts.iter().filter(|g| g.class == i).count();
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            quote(name),
            targets,
            f,
            p,
            r,
            m.ap50[i],
            m.ap_mean[i]
        );
    }
    out
}

pub fn confusion_csv(names: &[String], m: &[Vec<u64>], normalized: bool) -> String {
    let mut out = String::from("predicted\\true");
    for n in names {
        out.push(',');
        out.push_str(&quote(n));
    }
    out.push_str(",background\n");
    let cols = m.len();
    let sums: Vec<u64> = (0..cols).map(|j| m.iter().map(|row| row[j]).sum()).collect();
    for (i, row) in m.iter().enumerate() {
        out.push_str(&if i < names.len() {
            quote(&names[i])
        } else {
            "background".into()
        });
        for (j, v) in row.iter().enumerate() {
            if normalized {
                let x = if sums[j] == 0 { 0.0 } else { *v as f64 / sums[j] as f64 };
                let _ = write!(out, ",{x:.3}");
            } else {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}
