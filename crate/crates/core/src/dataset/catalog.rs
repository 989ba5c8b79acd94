use std::collections::{BTreeMap, BTreeSet};

use super::ImageRecord;
use crate::error::{Error, Result};

/// Class that absorbs the species listed in `other_names`. It is never
/// dropped by the minimum-count filter.
pub const OTHER_CLASS: &str = "Other";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub name: String,
    /// Ground-truth boxes of this class.
    pub annotations: usize,
    /// Distinct images containing at least one box of this class.
    pub images: usize,
}

/// Ordered class list; a class's index is its position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassCatalog {
    entries: Vec<ClassEntry>,
}

impl ClassCatalog {
    /// Builds a catalog with a fixed name order, counting occurrences in
    /// `records`. Fails on duplicate names or on species outside the list.
    pub fn from_names(names: &[String], records: &[ImageRecord]) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(Error::invalid(format!("duplicate class name {name:?}")));
            }
        }
        let mut entries: Vec<ClassEntry> = names
            .iter()
            .map(|n| ClassEntry {
                name: n.clone(),
                annotations: 0,
                images: 0,
            })
            .collect();
        for rec in records {
            for ann in &rec.annotations {
                let i = *index.get(ann.species_name.as_str()).ok_or_else(|| {
                    Error::invalid(format!(
                        "image {} uses class {:?} which is not in the catalog",
                        rec.image_id, ann.species_name
                    ))
                })?;
                entries[i].annotations += 1;
            }
            for species in rec.species() {
                entries[index[species]].images += 1;
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.entries.get(index).map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Like [`ClassCatalog::index_of`] but reports unknown names as errors.
    pub fn require_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::invalid(format!("unknown class {name:?}")))
    }
}

/// Relabels, filters and indexes species.
///
/// 1. species in `other_names` become [`OTHER_CLASS`];
/// 2. species present in fewer than `min_count` distinct images are dropped
///    together with their boxes ([`OTHER_CLASS`] is exempt);
/// 3. images left without boxes are dropped;
/// 4. indices follow descending box count, ties by name.
///
/// Surviving records keep their input order.
pub fn build_catalog(
    records: &[ImageRecord],
    min_count: usize,
    other_names: &BTreeSet<String>,
) -> (ClassCatalog, Vec<ImageRecord>) {
    let relabeled: Vec<ImageRecord> = records
        .iter()
        .map(|rec| {
            let mut rec = rec.clone();
            for ann in &mut rec.annotations {
                if other_names.contains(&ann.species_name) {
                    ann.species_name = OTHER_CLASS.to_string();
                }
            }
            rec
        })
        .collect();

    let mut image_presence: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in &relabeled {
        for species in rec.species() {
            *image_presence.entry(species).or_default() += 1;
        }
    }
    let retained: BTreeSet<String> = image_presence
        .iter()
        .filter(|(name, &n)| **name == OTHER_CLASS || n >= min_count)
        .map(|(name, _)| name.to_string())
        .collect();

    let filtered: Vec<ImageRecord> = relabeled
        .iter()
        .filter_map(|rec| {
            let annotations: Vec<_> = rec
                .annotations
                .iter()
                .filter(|a| retained.contains(&a.species_name))
                .cloned()
                .collect();
            (!annotations.is_empty()).then(|| ImageRecord {
                annotations,
                ..rec.clone()
            })
        })
        .collect();

    let mut box_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in &filtered {
        for ann in &rec.annotations {
            *box_counts.entry(ann.species_name.as_str()).or_default() += 1;
        }
    }
    let mut order: Vec<(&str, usize)> = box_counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let names: Vec<String> = order.iter().map(|(n, _)| n.to_string()).collect();

    let catalog = ClassCatalog::from_names(&names, &filtered).expect("catalog covers every retained species");
    (catalog, filtered)
}
