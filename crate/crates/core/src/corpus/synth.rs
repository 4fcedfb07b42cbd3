//! Synthetic corpora with a planted translation structure.
//!
//! Construction:
//! - Categories `cat00..`; relations form a tree rooted at `cat00`, which is
//!   the head of two relations (`cat00→cat01`, `cat00→cat02`) with
//!   non-parallel translations. Further categories hang off `cat{k-2}`.
//! - Items are grouped into "looks" of `group_size` near-duplicates. Root
//!   looks are drawn from a Gaussian over the span of the translations; every
//!   other look picks a random parent look and sits at `parent + translation`.
//! - Every item of a child look is positive with every item of its parent
//!   look, so `g(tail) = g(head) + translation + noise` holds for each pair.
//! - Raw features are a fixed random linear lift of the latent positions,
//!   one independent lift per modality.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::io::{feature_file_name, write_feature_table, write_items, write_pairs, ItemRecord};
use super::split::split_pairs;
use super::{FeatureTable, Split, ITEMS_FILE, PAIRS_FILE};
use crate::error::{Error, Result};
use crate::rng;

pub const SYNTH_CONFIG_FILE: &str = "synth_config.json";

fn default_modalities() -> Vec<String> {
    vec!["visual".into(), "textual".into()]
}
fn default_translation_scale() -> f64 {
    2.0
}
fn default_spread() -> f64 {
    1.5
}
fn default_offset() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_categories: usize,
    pub items_per_category: usize,
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub pairs_per_relation: usize,
    pub seed: u64,
    #[serde(default = "default_modalities")]
    pub modalities: Vec<String>,
    /// Norm of every planted translation.
    #[serde(default = "default_translation_scale")]
    pub translation_scale: f64,
    /// Standard deviation of root looks along each translation direction.
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Norm of a constant latent offset orthogonal to the translations.
    #[serde(default = "default_offset")]
    pub offset: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_categories: 4,
            items_per_category: 200,
            latent_dim: 8,
            feature_dim: 32,
            noise_sigma: 0.05,
            pairs_per_relation: 400,
            seed: 1,
            modalities: default_modalities(),
            translation_scale: default_translation_scale(),
            spread: default_spread(),
            offset: default_offset(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRelation {
    pub head: String,
    pub tail: String,
    pub translation: Vec<f64>,
    pub pairs: usize,
}

/// Echo of the generator config plus the planted ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub config: SynthConfig,
    pub categories: Vec<String>,
    pub relations: Vec<PlantedRelation>,
    /// Category heading the two non-parallel relations.
    pub one_to_many_head: String,
    pub group_size: usize,
    pub num_items: usize,
    pub split_sizes: [usize; 3],
    /// Latent position per item, in item order. Not written to disk.
    #[serde(skip)]
    pub latents: Vec<Vec<f64>>,
    /// Positive pairs as `(head item, tail item, relation index)`.
    #[serde(skip)]
    pub pairs: Vec<(usize, usize, usize)>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        validate(self)
    }
}

fn validate(cfg: &SynthConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::Invalid(format!("synthetic config: {m}")));
    if cfg.num_categories < 3 {
        return bad("num_categories must be at least 3");
    }
    if cfg.items_per_category == 0 || cfg.latent_dim == 0 || cfg.feature_dim == 0 {
        return bad("items_per_category, latent_dim and feature_dim must be positive");
    }
    if cfg.latent_dim > cfg.feature_dim {
        return bad("latent_dim must not exceed feature_dim");
    }
    if cfg.latent_dim < 2 {
        return bad("latent_dim must be at least 2 for non-parallel translations");
    }
    if !cfg.noise_sigma.is_finite() || cfg.noise_sigma < 0.0 {
        return bad("noise_sigma must be finite and non-negative");
    }
    if cfg.pairs_per_relation == 0 {
        return bad("pairs_per_relation must be positive");
    }
    if cfg.modalities.is_empty() {
        return bad("at least one modality is required");
    }
    if !(cfg.translation_scale > 0.0 && cfg.spread > 0.0 && cfg.offset >= 0.0) {
        return bad("translation_scale and spread must be positive, offset non-negative");
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal basis of `span(vectors)`, dropping near-dependent directions.
fn orthonormal_basis(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let p = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&w);
        if n > 1e-8 * norm(v).max(1.0) {
            basis.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Relation tree: `(parent category, child category)`.
fn relation_tree(num_categories: usize) -> Vec<(usize, usize)> {
    let mut rels = vec![(0, 1), (0, 2)];
    rels.extend((3..num_categories).map(|k| (k - 2, k)));
    rels
}

/// Generate a corpus in memory-independent form and write it to `out_dir`.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthSummary> {
    validate(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let k = cfg.num_categories;
    let n = cfg.items_per_category;
    let ld = cfg.latent_dim;
    let categories: Vec<String> = (0..k).map(|c| format!("cat{c:02}")).collect();
    let tree = relation_tree(k);

    // translations
    let mut rng = rng::stream(cfg.seed, "synth-translations", &[]);
    let mut translations: Vec<Vec<f64>> = Vec::with_capacity(tree.len());
    for (j, _) in tree.iter().enumerate() {
        loop {
            let v: Vec<f64> = (0..ld).map(|_| rng.sample(StandardNormal)).collect();
            let nv = norm(&v);
            let v: Vec<f64> = v.iter().map(|x| x * cfg.translation_scale / nv).collect();
            // the two hub relations must not be near-parallel
            if j == 1 {
                let cos = dot(&v, &translations[0]) / (cfg.translation_scale * cfg.translation_scale);
                if cos.abs() > 0.5 {
                    continue;
                }
            }
            translations.push(v);
            break;
        }
    }
    let basis = orthonormal_basis(&translations);

    // constant offset orthogonal to the translation span
    let mut offset = vec![0.0; ld];
    if basis.len() < ld && cfg.offset > 0.0 {
        let mut orng = rng::stream(cfg.seed, "synth-offset", &[]);
        loop {
            let v: Vec<f64> = (0..ld).map(|_| orng.sample(StandardNormal)).collect();
            let mut extended = basis.clone();
            extended.push(v);
            let full = orthonormal_basis(&extended);
            if full.len() == basis.len() + 1 {
                offset = full[basis.len()].iter().map(|x| x * cfg.offset).collect();
                break;
            }
        }
    }

    // looks
    let group_size = ((cfg.pairs_per_relation as f64 / n as f64).round() as usize).clamp(1, n);
    let looks_per_cat = n.div_ceil(group_size);
    let mut look_pos: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
    let mut look_parent: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut lrng = rng::stream(cfg.seed, "synth-looks", &[]);
    look_pos[0] = (0..looks_per_cat)
        .map(|_| {
            let mut g = offset.clone();
            for b in &basis {
                let z: f64 = lrng.sample(StandardNormal);
                g.iter_mut().zip(b).for_each(|(x, e)| *x += cfg.spread * z * e);
            }
            g
        })
        .collect();
    for (j, &(parent, child)) in tree.iter().enumerate() {
        let mut prng = rng::stream(cfg.seed, "synth-parents", &[j as u64]);
        for _ in 0..looks_per_cat {
            let p = prng.random_range(0..looks_per_cat);
            let g: Vec<f64> = look_pos[parent][p]
                .iter()
                .zip(&translations[j])
                .map(|(a, t)| a + t)
                .collect();
            look_pos[child].push(g);
            look_parent[child].push(p);
        }
    }

    // items
    let per_dim_sigma = cfg.noise_sigma / (2.0 * ld as f64).sqrt();
    let noise = Normal::new(0.0, per_dim_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut nrng = rng::stream(cfg.seed, "synth-noise", &[]);
    let mut latents = Vec::with_capacity(k * n);
    let mut item_ids = Vec::with_capacity(k * n);
    let mut item_of = vec![vec![Vec::new(); looks_per_cat]; k];
    for c in 0..k {
        for i in 0..n {
            let look = i / group_size;
            let g: Vec<f64> = look_pos[c][look]
                .iter()
                .map(|x| x + noise.sample(&mut nrng))
                .collect();
            item_of[c][look].push(latents.len());
            latents.push(g);
            item_ids.push(format!("{}_{i:04}", categories[c]));
        }
    }

    // positives
    let mut pairs = Vec::new();
    let mut relations = Vec::with_capacity(tree.len());
    for (j, &(parent, child)) in tree.iter().enumerate() {
        let before = pairs.len();
        for (look, &p) in look_parent[child].iter().enumerate() {
            for &h in &item_of[parent][p] {
                for &t in &item_of[child][look] {
                    pairs.push((h, t, j));
                }
            }
        }
        relations.push(PlantedRelation {
            head: categories[parent].clone(),
            tail: categories[child].clone(),
            translation: translations[j].clone(),
            pairs: pairs.len() - before,
        });
    }
    let [train, val, test] = split_pairs(&pairs, [0.8, 0.1, 0.1], rng::derive_seed(cfg.seed, "synth-split", &[]))?;

    // features
    let mut tables = Vec::with_capacity(cfg.modalities.len());
    for (mi, m) in cfg.modalities.iter().enumerate() {
        let mut frng = rng::stream(cfg.seed, "synth-lift", &[mi as u64]);
        let scale = 1.0 / (ld as f64).sqrt();
        let lift: Vec<f64> = (0..cfg.feature_dim * ld)
            .map(|_| scale * frng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut data = Vec::with_capacity(latents.len() * cfg.feature_dim);
        for g in &latents {
            for r in 0..cfg.feature_dim {
                data.push(dot(&lift[r * ld..(r + 1) * ld], g) as f32);
            }
        }
        tables.push(FeatureTable::new(m.clone(), cfg.feature_dim, data)?);
    }

    // write
    let records: Vec<ItemRecord> = item_ids
        .iter()
        .enumerate()
        .map(|(i, id)| ItemRecord {
            item_id: id.clone(),
            category_id: categories[i / n].clone(),
            features: cfg.modalities.iter().map(|m| (m.clone(), i as u64)).collect(),
        })
        .collect();
    write_items(&out_dir.join(ITEMS_FILE), &records)?;
    let mut rows = Vec::with_capacity(pairs.len());
    for (split, set) in [(Split::Train, &train), (Split::Validation, &val), (Split::Test, &test)] {
        rows.extend(
            set.iter()
                .map(|&(h, t, _)| (item_ids[h].clone(), item_ids[t].clone(), split)),
        );
    }
    write_pairs(&out_dir.join(PAIRS_FILE), &rows)?;
    for t in &tables {
        write_feature_table(&out_dir.join(feature_file_name(t.modality())), t)?;
    }

    let summary = SynthSummary {
        config: cfg.clone(),
        categories: categories.clone(),
        relations,
        one_to_many_head: categories[0].clone(),
        group_size,
        num_items: latents.len(),
        split_sizes: [train.len(), val.len(), test.len()],
        latents,
        pairs,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    let cfg_path = out_dir.join(SYNTH_CONFIG_FILE);
    fs::write(&cfg_path, json + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    Ok(summary)
}
