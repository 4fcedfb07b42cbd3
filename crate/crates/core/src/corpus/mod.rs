//! Items, feature tables and positive pairs.
//!
//! A [`Corpus`] is validated once on construction and immutable afterwards.
//! Everything downstream addresses items by their index in [`Corpus::items`].

mod io;
mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relations::CategoryGraph;

pub use io::{
    feature_file_name, load_corpus, read_feature_table, write_feature_table, write_items,
    write_pairs, ItemRecord, FEATURE_MAGIC, FEATURE_VERSION, ITEMS_FILE, PAIRS_FILE,
};
pub use split::split_pairs;
pub use synth::{generate_synthetic, SynthConfig, SynthSummary, SYNTH_CONFIG_FILE};

/// Dense per-modality feature matrix, row-major 32-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    modality: String,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureTable {
    pub fn new(modality: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_source(modality, dim, data, Path::new("<memory>"))
    }

    pub(crate) fn with_source(
        modality: impl Into<String>,
        dim: usize,
        data: Vec<f32>,
        source: &Path,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::format(source, "feature dim must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::dims(
                format!("{}: feature rows of dim {dim}", source.display()),
                dim * (data.len() / dim + 1),
                data.len(),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                file: source.to_path_buf(),
                row: pos / dim,
                col: pos % dim,
                value: data[pos],
            });
        }
        Ok(Self {
            modality: modality.into(),
            dim,
            data,
        })
    }

    pub fn modality(&self) -> &str {
        &self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Item {
    pub item_id: String,
    pub category_id: String,
    /// Modality name to row index in that modality's [`FeatureTable`].
    pub feature_rows: BTreeMap<String, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val")]
    Validation,
    #[serde(rename = "test")]
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

/// A positive pair by item index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub head: usize,
    pub tail: usize,
}

impl Pair {
    pub fn unordered(self) -> (usize, usize) {
        (self.head.min(self.tail), self.head.max(self.tail))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub split: Split,
    pub pairs: Vec<Pair>,
}

/// One line of a pairs file before id resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairRecord {
    pub head_id: String,
    pub tail_id: String,
    pub split: Split,
    pub line: usize,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    items: Vec<Item>,
    item_index: HashMap<String, usize>,
    categories: Vec<String>,
    item_category: Vec<usize>,
    category_items: Vec<Vec<usize>>,
    features: BTreeMap<String, FeatureTable>,
    splits: [PairSet; 3],
    positives: HashSet<(usize, usize)>,
    train_positives: HashSet<(usize, usize)>,
    graph: CategoryGraph,
    warnings: Vec<String>,
}

impl Corpus {
    /// Validate and assemble a corpus. `pairs_source` only labels errors.
    pub fn from_records(
        items: Vec<Item>,
        tables: Vec<FeatureTable>,
        pair_records: Vec<PairRecord>,
        pairs_source: &Path,
    ) -> Result<Self> {
        let mut warnings = Vec::new();

        let mut features = BTreeMap::new();
        for t in tables {
            let name = t.modality.clone();
            if features.insert(name.clone(), t).is_some() {
                return Err(Error::Invalid(format!("modality {name:?} declared twice")));
            }
        }
        if features.is_empty() {
            return Err(Error::Invalid("corpus declares no modalities".into()));
        }

        let mut item_index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.item_id.is_empty() || item.category_id.is_empty() {
                return Err(Error::Invalid(format!(
                    "item #{} has an empty id or category",
                    i + 1
                )));
            }
            if item_index.insert(item.item_id.clone(), i).is_some() {
                return Err(Error::Invalid(format!(
                    "duplicate item id {:?}",
                    item.item_id
                )));
            }
            let declared: BTreeSet<&String> = item.feature_rows.keys().collect();
            let expected: BTreeSet<&String> = features.keys().collect();
            if declared != expected {
                return Err(Error::Invalid(format!(
                    "item {:?} references modalities {:?}, corpus has {:?}",
                    item.item_id, declared, expected
                )));
            }
            for (m, &row) in &item.feature_rows {
                let rows = features[m].rows();
                if row >= rows {
                    return Err(Error::Invalid(format!(
                        "item {:?}: {m} row {row} out of bounds ({rows} rows)",
                        item.item_id
                    )));
                }
            }
        }

        let categories: Vec<String> = items
            .iter()
            .map(|i| i.category_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cat_lookup: HashMap<&str, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let item_category: Vec<usize> = items
            .iter()
            .map(|i| cat_lookup[i.category_id.as_str()])
            .collect();
        let mut category_items = vec![Vec::new(); categories.len()];
        for (i, &c) in item_category.iter().enumerate() {
            category_items[c].push(i);
        }

        let mut seen: [HashSet<(usize, usize)>; 3] = Default::default();
        let mut splits = Split::ALL.map(|split| PairSet {
            split,
            pairs: Vec::new(),
        });
        for rec in pair_records {
            let resolve = |id: &str| {
                item_index.get(id).copied().ok_or_else(|| Error::UnknownItem {
                    id: id.to_string(),
                    file: pairs_source.to_path_buf(),
                    line: rec.line,
                })
            };
            let head = resolve(&rec.head_id)?;
            let tail = resolve(&rec.tail_id)?;
            if item_category[head] == item_category[tail] {
                return Err(Error::Invalid(format!(
                    "{}:{}: pair ({}, {}) lies within category {:?}",
                    pairs_source.display(),
                    rec.line,
                    rec.head_id,
                    rec.tail_id,
                    categories[item_category[head]]
                )));
            }
            let pair = Pair { head, tail };
            let key = pair.unordered();
            let slot = rec.split.slot();
            if !seen[slot].insert(key) {
                let msg = format!(
                    "{}:{}: duplicate {} pair ({}, {}) dropped",
                    pairs_source.display(),
                    rec.line,
                    rec.split,
                    rec.head_id,
                    rec.tail_id
                );
                log::warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            if let Some(other) = Split::ALL
                .iter()
                .find(|s| s.slot() != slot && seen[s.slot()].contains(&key))
            {
                return Err(Error::Invalid(format!(
                    "{}:{}: pair ({}, {}) appears in both {} and {}",
                    pairs_source.display(),
                    rec.line,
                    rec.head_id,
                    rec.tail_id,
                    other,
                    rec.split
                )));
            }
            splits[slot].pairs.push(pair);
        }

        let train_positives = seen[Split::Train.slot()].clone();
        let positives: HashSet<(usize, usize)> = seen.iter().flatten().copied().collect();
        let graph = CategoryGraph::new(
            categories.clone(),
            splits[Split::Train.slot()]
                .pairs
                .iter()
                .map(|p| (item_category[p.head], item_category[p.tail])),
        )?;

        Ok(Self {
            items,
            item_index,
            categories,
            item_category,
            category_items,
            features,
            splits,
            positives,
            train_positives,
            graph,
            warnings,
        })
    }

    /// Convenience constructor for in-memory corpora.
    pub fn build(
        items: Vec<Item>,
        tables: Vec<FeatureTable>,
        pairs: &[(&str, &str, Split)],
    ) -> Result<Self> {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, (h, t, s))| PairRecord {
                head_id: h.to_string(),
                tail_id: t.to_string(),
                split: *s,
                line: i + 1,
            })
            .collect();
        Self::from_records(items, tables, records, &PathBuf::from("<memory>"))
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    /// Sorted category registry.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn category_of(&self, item: usize) -> usize {
        self.item_category[item]
    }

    pub fn items_in_category(&self, category: usize) -> &[usize] {
        &self.category_items[category]
    }

    pub fn modalities(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn feature_table(&self, modality: &str) -> Option<&FeatureTable> {
        self.features.get(modality)
    }

    /// Raw features of `item` for `modality`.
    pub fn features(&self, item: usize, modality: &str) -> Option<&[f32]> {
        let table = self.features.get(modality)?;
        let row = *self.items[item].feature_rows.get(modality)?;
        Some(table.row(row))
    }

    pub fn pairs(&self, split: Split) -> &PairSet {
        &self.splits[split.slot()]
    }

    /// Whether `(a, b)` co-occur in any split, in either order.
    pub fn is_positive(&self, a: usize, b: usize) -> bool {
        self.positives.contains(&(a.min(b), a.max(b)))
    }

    /// Whether `(a, b)` co-occur in the training split, in either order.
    pub fn is_train_positive(&self, a: usize, b: usize) -> bool {
        self.train_positives.contains(&(a.min(b), a.max(b)))
    }

    /// Complementary-category graph induced by the training positives.
    pub fn graph(&self) -> &CategoryGraph {
        &self.graph
    }

    /// Non-fatal issues found while loading (e.g. deduplicated pairs).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Items `"{cat}{i}"` with a single "visual" modality of dimension `dim`.
    pub fn tiny_corpus(spec: &[(&str, usize)], dim: usize, pairs: &[(&str, &str, Split)]) -> Corpus {
        let mut items = Vec::new();
        let mut data = Vec::new();
        let mut row = 0usize;
        for (cat, n) in spec {
            for i in 0..*n {
                items.push(Item {
                    item_id: format!("{cat}{i}"),
                    category_id: cat.to_string(),
                    feature_rows: [("visual".to_string(), row)].into_iter().collect(),
                });
                for k in 0..dim {
                    data.push(((row * 7 + k * 3) % 11) as f32 / 11.0 + 0.1);
                }
                row += 1;
            }
        }
        let table = FeatureTable::new("visual", dim, data).unwrap();
        Corpus::build(items, vec![table], pairs).unwrap()
    }
}
