//! Category-pair registry and the relation parameter store.
//!
//! A relation exists for every unordered pair of distinct categories that
//! co-occurs in at least one training positive. Pairs are canonicalized so
//! that the lexicographically smaller category id comes first; looking up the
//! reversed direction yields the same row with a negative sign (tied mode) or
//! the row's independent twin (untied mode).

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;

/// Reference to a canonical category pair plus the direction it was queried in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RelationRef {
    pub pair: usize,
    /// `true` when the lookup order matched the canonical order.
    pub forward: bool,
}

impl RelationRef {
    pub fn sign(self) -> f64 {
        if self.forward {
            1.0
        } else {
            -1.0
        }
    }
}

/// Complementary-category graph: which category pairs form relations.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryGraph {
    categories: Vec<String>,
    pairs: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    neighbors: Vec<Vec<usize>>,
}

impl CategoryGraph {
    /// `categories` must be sorted and unique; `edges` are category index pairs
    /// in either order. Self-pairs are rejected.
    pub fn new(
        categories: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if categories.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "category registry must be sorted and unique".into(),
            ));
        }
        let mut canon: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a >= categories.len() || b >= categories.len() {
                return Err(Error::Invalid(format!(
                    "category index out of range in relation ({a}, {b})"
                )));
            }
            if a == b {
                return Err(Error::Invalid(format!(
                    "relation from category {:?} to itself",
                    categories[a]
                )));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut neighbors = vec![Vec::new(); categories.len()];
        let mut index = HashMap::with_capacity(canon.len());
        for (i, &(a, b)) in canon.iter().enumerate() {
            index.insert((a, b), i);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self {
            categories,
            pairs: canon,
            index,
            neighbors,
        })
    }

    /// Build from category-name pairs, registering names in sorted order.
    pub fn from_named_pairs(
        categories: Vec<String>,
        pairs: &[(String, String)],
    ) -> Result<Self> {
        let lookup: HashMap<&str, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut edges = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let (Some(&ia), Some(&ib)) = (lookup.get(a.as_str()), lookup.get(b.as_str())) else {
                return Err(Error::Invalid(format!(
                    "relation ({a}, {b}) references an unregistered category"
                )));
            };
            edges.push((ia, ib));
        }
        Self::new(categories, edges)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn category_index(&self, id: &str) -> Option<usize> {
        self.categories.binary_search_by(|c| c.as_str().cmp(id)).ok()
    }

    pub fn num_relations(&self) -> usize {
        self.pairs.len()
    }

    /// Canonical pairs, sorted.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn named_pairs(&self) -> Vec<(String, String)> {
        self.pairs
            .iter()
            .map(|&(a, b)| (self.categories[a].clone(), self.categories[b].clone()))
            .collect()
    }

    /// Categories forming a relation with `category`, ascending.
    pub fn complementary(&self, category: usize) -> &[usize] {
        &self.neighbors[category]
    }

    pub fn relation(&self, cx: usize, cy: usize) -> Option<RelationRef> {
        let forward = cx < cy;
        let key = if forward { (cx, cy) } else { (cy, cx) };
        self.index
            .get(&key)
            .map(|&pair| RelationRef { pair, forward })
    }

    pub fn relation_by_name(&self, cx: &str, cy: &str) -> Result<RelationRef> {
        let unknown = || Error::UnknownRelation {
            head: cx.to_string(),
            tail: cy.to_string(),
        };
        let a = self.category_index(cx).ok_or_else(unknown)?;
        let b = self.category_index(cy).ok_or_else(unknown)?;
        self.relation(a, b).ok_or_else(unknown)
    }
}

/// What the per-relation vectors mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    /// Translation vectors; reversed lookups flip the sign in tied mode.
    Translation,
    /// Conditional-similarity gates; direction never changes the vector.
    Mask,
}

/// Relation vectors indexed by a [`CategoryGraph`].
#[derive(Clone, Debug, PartialEq)]
pub struct RelationTable {
    graph: CategoryGraph,
    kind: RelationKind,
    untied: bool,
    dim: usize,
    /// Row-major `num_rows × dim`.
    pub rows: Vec<f64>,
}

impl RelationTable {
    /// Translation table. Rows are drawn from a seeded standard normal and
    /// scaled to unit norm; values are rounded to 32-bit precision so that the
    /// table serializes losslessly.
    pub fn translations(graph: CategoryGraph, dim: usize, untied: bool, seed: u64) -> Self {
        let num_rows = graph.num_relations() * if untied { 2 } else { 1 };
        let mut rng = rng::stream(seed, "relation-init", &[]);
        let mut rows = Vec::with_capacity(num_rows * dim);
        for _ in 0..num_rows {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            rows.extend(v.iter().map(|x| f64::from((x / norm) as f32)));
        }
        Self {
            graph,
            kind: RelationKind::Translation,
            untied,
            dim,
            rows,
        }
    }

    /// Mask table initialized to all ones.
    pub fn masks(graph: CategoryGraph, dim: usize, untied: bool) -> Self {
        let num_rows = graph.num_relations() * if untied { 2 } else { 1 };
        Self {
            graph,
            kind: RelationKind::Mask,
            untied,
            dim,
            rows: vec![1.0; num_rows * dim],
        }
    }

    /// Reassemble from stored parts (checkpoint loading).
    pub fn from_parts(
        graph: CategoryGraph,
        kind: RelationKind,
        untied: bool,
        dim: usize,
        rows: Vec<f64>,
    ) -> Result<Self> {
        let num_rows = graph.num_relations() * if untied { 2 } else { 1 };
        if rows.len() != num_rows * dim {
            return Err(Error::dims("relation rows", num_rows * dim, rows.len()));
        }
        Ok(Self {
            graph,
            kind,
            untied,
            dim,
            rows,
        })
    }

    pub fn graph(&self) -> &CategoryGraph {
        &self.graph
    }

    pub fn kind(&self) -> RelationKind {
        self.kind
    }

    pub fn untied(&self) -> bool {
        self.untied
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len() / self.dim.max(1)
    }

    /// Resolve a pair reference to `(row, sign)`; the sign multiplies the
    /// stored row to give the vector used in scoring.
    pub fn resolve(&self, rel: RelationRef) -> (usize, f64) {
        match (self.untied, self.kind) {
            (true, _) => (2 * rel.pair + usize::from(!rel.forward), 1.0),
            (false, RelationKind::Translation) => (rel.pair, rel.sign()),
            (false, RelationKind::Mask) => (rel.pair, 1.0),
        }
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.rows[row * self.dim..(row + 1) * self.dim]
    }

    /// Signed relation vector for a resolved reference.
    pub fn vector(&self, rel: RelationRef) -> Vec<f64> {
        let (row, sign) = self.resolve(rel);
        self.row(row).iter().map(|v| sign * v).collect()
    }

    /// Look up the relation from category `cx` to `cy` by id. Returns the
    /// signed vector and its row id.
    pub fn lookup(&self, cx: &str, cy: &str) -> Result<(Vec<f64>, usize)> {
        let rel = self.graph.relation_by_name(cx, cy)?;
        let (row, _) = self.resolve(rel);
        Ok((self.vector(rel), row))
    }

    /// `(min, mean, max)` of row norms.
    pub fn norm_summary(&self) -> (f64, f64, f64) {
        let norms: Vec<f64> = (0..self.num_rows())
            .map(|r| self.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        if norms.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        (min, mean, max)
    }
}

/// Translation table with one unit-norm row per category pair that occurs
/// in the corpus's training positives.
pub fn build_relation_table(corpus: &Corpus, dim: usize, untied: bool, seed: u64) -> RelationTable {
    RelationTable::translations(corpus.graph().clone(), dim, untied, seed)
}
