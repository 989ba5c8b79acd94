//! Stratified k-fold assignment of images and export of per-fold training
//! layouts in the detector's label format.
//!
//! The stratification unit is the image: an image with three wild boars
//! counts once for wild boar.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassCatalog, ImageRecord, Manifest};
use crate::error::{Error, Result};
use crate::geometry::{to_normalized, LabelLine};

pub const TRAIN_LIST: &str = "train.txt";
pub const VAL_LIST: &str = "val.txt";
pub const DESCRIPTOR: &str = "dataset.yaml";

/// Image to fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    k: usize,
    seed: u64,
    assignment: BTreeMap<String, usize>,
}

impl SplitPlan {
    pub fn new(k: usize, seed: u64, assignment: BTreeMap<String, usize>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("k must be at least 2, got {k}")));
        }
        if let Some((id, f)) = assignment.iter().find(|(_, &f)| f >= k) {
            return Err(Error::invalid(format!("image {id} assigned to fold {f} >= k={k}")));
        }
        Ok(Self { k, seed, assignment })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.assignment
    }

    pub fn fold_of(&self, image_id: &str) -> Option<usize> {
        self.assignment.get(image_id).copied()
    }

    /// Image ids of one fold, sorted.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: SplitPlan =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed split plan: {e}")))?;
        Self::new(raw.k, raw.seed, raw.assignment)
    }
}

fn class_sets(records: &[ImageRecord], catalog: &ClassCatalog) -> Result<Vec<Vec<usize>>> {
    records
        .iter()
        .map(|rec| {
            let set: BTreeSet<usize> = rec
                .annotations
                .iter()
                .map(|a| catalog.require_index(&a.species_name))
                .collect::<Result<_>>()?;
            Ok(set.into_iter().collect())
        })
        .collect()
}

/// Uniform draw in `0..bound` by rejection, so the stream-to-value mapping
/// never depends on a library's sampling strategy.
fn bounded(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Greedy rarest-class-first stratified k-fold.
///
/// Images are processed in ascending global frequency of their rarest class;
/// images sharing that priority are shuffled by a ChaCha8 stream seeded with
/// `seed`. Each image goes to the fold most deficient in its rarest class
/// (ties: smaller fold, then lower index), restricted to folds that can still
/// grow without breaking the `floor(N/k)`/`ceil(N/k)` size balance.
///
/// The result depends only on the set of records, not on their order.
pub fn stratified_kfold(records: &[ImageRecord], catalog: &ClassCatalog, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if k > records.len() {
        return Err(Error::invalid(format!(
            "k={k} exceeds the number of images ({})",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].image_id.cmp(&records[b].image_id));
    if let Some(w) = order
        .windows(2)
        .find(|w| records[w[0]].image_id == records[w[1]].image_id)
    {
        return Err(Error::invalid(format!("duplicate image_id {}", records[w[0]].image_id)));
    }

    let classes = class_sets(records, catalog)?;
    let mut frequency = vec![0usize; catalog.len()];
    for set in &classes {
        for &c in set {
            frequency[c] += 1;
        }
    }

    // priority (frequency of rarest class, its index) -> images in id order
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for &i in &order {
        let rarest = *classes[i]
            .iter()
            .min_by_key(|&&c| (frequency[c], c))
            .expect("validated records carry at least one class");
        groups.entry((frequency[rarest], rarest)).or_default().push(i);
    }

    let n = records.len();
    let (base, extra) = (n / k, n % k);
    let mut sizes = vec![0usize; k];
    let mut counts = vec![vec![0usize; catalog.len()]; k];
    let mut assignment = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for ((_, rarest), mut members) in groups {
        shuffle(&mut members, &mut rng);
        for i in members {
            let full = sizes.iter().filter(|&&s| s > base).count();
            let fold = (0..k)
                .filter(|&f| sizes[f] < base || (sizes[f] == base && full < extra))
                .max_by(|&a, &b| {
                    let deficit = |f: usize| frequency[rarest] as i64 - (k * counts[f][rarest]) as i64;
                    deficit(a)
                        .cmp(&deficit(b))
                        .then_with(|| sizes[b].cmp(&sizes[a]))
                        .then_with(|| b.cmp(&a))
                })
                .expect("some fold always has capacity left");
            sizes[fold] += 1;
            for &c in &classes[i] {
                counts[fold][c] += 1;
            }
            assignment.insert(records[i].image_id.clone(), fold);
        }
    }
    SplitPlan::new(k, seed, assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratificationReport {
    pub class_names: Vec<String>,
    pub fold_sizes: Vec<usize>,
    /// `[fold][class]` number of images containing the class.
    pub counts: Vec<Vec<usize>>,
    /// `[fold][class]` share of the fold's images containing the class.
    pub proportions: Vec<Vec<f64>>,
    /// Share of all images containing each class.
    pub global_proportions: Vec<f64>,
    /// Largest `|proportion - global proportion|` over folds and classes.
    pub max_proportion_deviation: f64,
    /// Largest `|count - n_c / k|` over folds and classes, in images.
    pub max_count_deviation: f64,
    /// Classes whose per-fold count strays from `n_c / k` by more than one image.
    pub flagged: Vec<String>,
}

pub fn verify_stratification(
    plan: &SplitPlan,
    records: &[ImageRecord],
    catalog: &ClassCatalog,
) -> Result<StratificationReport> {
    let by_id: BTreeMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_id.as_str(), i))
        .collect();
    if let Some(id) = plan.assignment.keys().find(|id| !by_id.contains_key(id.as_str())) {
        return Err(Error::invalid(format!("plan references unknown image {id}")));
    }
    if let Some(r) = records.iter().find(|r| plan.fold_of(&r.image_id).is_none()) {
        return Err(Error::invalid(format!(
            "image {} is not assigned to a fold",
            r.image_id
        )));
    }

    let classes = class_sets(records, catalog)?;
    let k = plan.k;
    let nc = catalog.len();
    let mut counts = vec![vec![0usize; nc]; k];
    let mut totals = vec![0usize; nc];
    for (i, rec) in records.iter().enumerate() {
        let f = plan.fold_of(&rec.image_id).expect("checked above");
        for &c in &classes[i] {
            counts[f][c] += 1;
            totals[c] += 1;
        }
    }
    let sizes = plan.fold_sizes();
    let n = records.len();
    let global: Vec<f64> = totals
        .iter()
        .map(|&t| if n == 0 { 0.0 } else { t as f64 / n as f64 })
        .collect();

    let mut proportions = vec![vec![0.0; nc]; k];
    let mut max_prop = 0.0f64;
    let mut max_count = 0.0f64;
    let mut flagged = BTreeSet::new();
    for f in 0..k {
        for c in 0..nc {
            let p = if sizes[f] == 0 {
                0.0
            } else {
                counts[f][c] as f64 / sizes[f] as f64
            };
            proportions[f][c] = p;
            max_prop = max_prop.max((p - global[c]).abs());
            let dev = (counts[f][c] as f64 - totals[c] as f64 / k as f64).abs();
            max_count = max_count.max(dev);
            if dev > 1.0 {
                flagged.insert(c);
            }
        }
    }
    Ok(StratificationReport {
        class_names: catalog.names(),
        fold_sizes: sizes,
        counts,
        proportions,
        global_proportions: global,
        max_proportion_deviation: max_prop,
        max_count_deviation: max_count,
        flagged: flagged.into_iter().map(|c| catalog.entries()[c].name.clone()).collect(),
    })
}

impl StratificationReport {
    /// One row per (fold, class): `fold,class,images,fold_images,proportion,global_proportion,deviation`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,class,images,fold_images,proportion,global_proportion,deviation\n");
        for (f, row) in self.counts.iter().enumerate() {
            for (c, &count) in row.iter().enumerate() {
                let p = self.proportions[f][c];
                let g = self.global_proportions[c];
                out.push_str(&format!(
                    "{f},{},{count},{},{p:.6},{g:.6},{:.6}\n",
                    csv_field(&self.class_names[c]),
                    self.fold_sizes[f],
                    (p - g).abs()
                ));
            }
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSummary {
    pub train_images: usize,
    pub val_images: usize,
    pub label_files: usize,
}

fn file_stem(image_id: &str) -> String {
    image_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn link_or_copy(src: &Path, dest: &Path) -> Result<()> {
    if dest.exists() {
        fs::remove_file(dest).map_err(|e| Error::io(dest, e))?;
    }
    if fs::hard_link(src, dest).is_err() {
        fs::copy(src, dest).map_err(|e| Error::io(dest, e))?;
    }
    Ok(())
}

fn yaml_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// Writes the training layout for one fold into `out_dir`:
///
/// ```text
/// out_dir/
///   dataset.yaml        train/val list paths, nc, names in catalog order
///   train.txt val.txt   images/<id>.<ext>, one per line, sorted by image id
///   images/             media hard-linked (or copied) from `media_root`
///   labels/<id>.txt     one `<class> <cx> <cy> <w> <h>` line per box
/// ```
///
/// Missing media abort the export before anything is written.
pub fn export_split(
    plan: &SplitPlan,
    fold: usize,
    records: &[ImageRecord],
    catalog: &ClassCatalog,
    media_root: &Path,
    out_dir: &Path,
) -> Result<ExportSummary> {
    if fold >= plan.k {
        return Err(Error::invalid(format!("fold {fold} out of range for k={}", plan.k)));
    }
    let mut sorted: Vec<&ImageRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut missing = Vec::new();
    let mut stems = BTreeSet::new();
    let mut jobs: Vec<(&ImageRecord, PathBuf, String)> = Vec::with_capacity(sorted.len());
    for rec in sorted {
        if plan.fold_of(&rec.image_id).is_none() {
            return Err(Error::invalid(format!(
                "image {} is not assigned to a fold",
                rec.image_id
            )));
        }
        let src = Manifest::media_path(media_root, rec);
        if !src.is_file() {
            missing.push(format!("{} ({})", rec.image_id, src.display()));
            continue;
        }
        let stem = file_stem(&rec.image_id);
        if !stems.insert(stem.clone()) {
            return Err(Error::invalid(format!("image ids collide on file name {stem:?}")));
        }
        let ext = src
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| format!(".{e}"))
            .unwrap_or_default();
        jobs.push((rec, src, format!("{stem}{ext}")));
    }
    if !missing.is_empty() {
        return Err(Error::MissingMedia(missing));
    }

    let images_dir = out_dir.join("images");
    let labels_dir = out_dir.join("labels");
    for dir in [&images_dir, &labels_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut train = String::new();
    let mut val = String::new();
    for (rec, src, file_name) in &jobs {
        link_or_copy(src, &images_dir.join(file_name))?;
        let mut labels = String::new();
        for ann in &rec.annotations {
            let line = LabelLine {
                class_index: catalog.require_index(&ann.species_name)?,
                bbox: to_normalized(&ann.bbox, rec.size)?,
            };
            labels.push_str(&line.to_string());
            labels.push('\n');
        }
        let stem = Path::new(file_name)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(file_name);
        let label_path = labels_dir.join(format!("{stem}.txt"));
        fs::write(&label_path, labels).map_err(|e| Error::io(&label_path, e))?;

        let entry = format!("images/{file_name}\n");
        if plan.fold_of(&rec.image_id) == Some(fold) {
            val.push_str(&entry);
        } else {
            train.push_str(&entry);
        }
    }

    let names: Vec<String> = catalog.names().iter().map(|n| yaml_quote(n)).collect();
    let descriptor = format!(
        "path: .\ntrain: {TRAIN_LIST}\nval: {VAL_LIST}\nnc: {}\nnames: [{}]\n",
        catalog.len(),
        names.join(", ")
    );
    for (name, body) in [(TRAIN_LIST, &train), (VAL_LIST, &val), (DESCRIPTOR, &descriptor)] {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(ExportSummary {
        train_images: train.lines().count(),
        val_images: val.lines().count(),
        label_files: jobs.len(),
    })
}
