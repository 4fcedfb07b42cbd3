//! Shared fixtures and independent oracles for the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use transcompat::corpus::{Corpus, FeatureTable, Item, Split};
use transcompat::evaluator::CandidatePlan;
use transcompat::rng;
use transcompat::sampling::FiveTuple;
use transcompat::trainer::{batch_gradient, DropoutKey};
use transcompat::{Model, ModelKind};

/// Items `"{cat}{i}"` with standard-normal features for every modality.
pub fn random_corpus(
    seed: u64,
    categories: &[(&str, usize)],
    modalities: &[(&str, usize)],
    pairs: &[(String, String, Split)],
) -> Corpus {
    let mut r = rng::stream(seed, "test-corpus", &[]);
    let mut items = Vec::new();
    let mut row = 0;
    for (cat, n) in categories {
        for i in 0..*n {
            items.push(Item {
                item_id: format!("{cat}{i}"),
                category_id: cat.to_string(),
                feature_rows: modalities
                    .iter()
                    .map(|(m, _)| (m.to_string(), row))
                    .collect::<BTreeMap<_, _>>(),
            });
            row += 1;
        }
    }
    let tables = modalities
        .iter()
        .map(|(m, dim)| {
            let data = (0..row * dim)
                .map(|_| r.sample::<f64, _>(StandardNormal) as f32)
                .collect();
            FeatureTable::new(*m, *dim, data).unwrap()
        })
        .collect();
    let refs: Vec<(&str, &str, Split)> = pairs
        .iter()
        .map(|(h, t, s)| (h.as_str(), t.as_str(), *s))
        .collect();
    Corpus::build(items, tables, &refs).unwrap()
}

/// Random distinct pairs along each `(head, tail)` category edge. The first
/// `train` pairs of an edge are training pairs, the rest test pairs.
pub fn random_pairs(
    seed: u64,
    categories: &[(&str, usize)],
    edges: &[(usize, usize)],
    per_edge: usize,
    train: usize,
) -> Vec<(String, String, Split)> {
    let mut r = rng::stream(seed, "test-pairs", &[]);
    let mut out = Vec::new();
    for &(a, b) in edges {
        let (ca, na) = categories[a];
        let (cb, nb) = categories[b];
        let mut seen = std::collections::HashSet::new();
        let mut k = 0;
        while k < per_edge.min(na * nb) {
            let (i, j) = (r.random_range(0..na), r.random_range(0..nb));
            if !seen.insert((i, j)) {
                continue;
            }
            let split = if k < train { Split::Train } else { Split::Test };
            out.push((format!("{ca}{i}"), format!("{cb}{j}"), split));
            k += 1;
        }
    }
    out
}

/// Overwrite every model parameter with a standard-normal draw, rounded to
/// 32-bit like trained parameters.
pub fn randomize(model: &mut Model, seed: u64) {
    let mut r = rng::stream(seed, "test-params", &[]);
    for (_, t) in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from(r.sample::<f64, _>(StandardNormal) as f32);
        }
    }
}

pub fn batch_loss(model: &Model, corpus: &Corpus, tuples: &[FiveTuple], key: Option<DropoutKey>) -> f64 {
    batch_gradient(model, corpus, tuples, key).unwrap().loss
}

/// Result of comparing an analytic gradient with central differences.
#[derive(Debug)]
pub struct GradCheck {
    /// Largest per-tensor relative error.
    pub worst: f64,
    pub worst_tensor: String,
    pub checked: usize,
    /// Coordinates excluded because the loss is not smooth within `2h`.
    pub skipped: usize,
}

/// Compare the analytic batch gradient with central differences of step `h`.
/// A coordinate is excluded when the difference quotients at `h` and `2h`
/// disagree, which only happens when a hinge or rectifier kink lies within
/// reach of the step.
pub fn check_gradient(
    model: &Model,
    corpus: &Corpus,
    tuples: &[FiveTuple],
    key: Option<DropoutKey>,
    h: f64,
) -> GradCheck {
    let analytic = batch_gradient(model, corpus, tuples, key).unwrap().grads;
    let analytic: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    let mut probe = model.clone();
    let mut out = GradCheck {
        worst: 0.0,
        worst_tensor: String::new(),
        checked: 0,
        skipped: 0,
    };
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..grad.len() {
            let orig = probe.tensors()[ti].1[j];
            let mut at = |delta: f64| {
                probe.tensors_mut()[ti].1[j] = orig + delta;
                let l = batch_loss(&probe, corpus, tuples, key);
                probe.tensors_mut()[ti].1[j] = orig;
                l
            };
            let q1 = (at(h) - at(-h)) / (2.0 * h);
            let q2 = (at(2.0 * h) - at(-2.0 * h)) / (4.0 * h);
            if (q1 - q2).abs() > 1e-6 * (1.0 + q1.abs()) {
                out.skipped += 1;
                continue;
            }
            out.checked += 1;
            diff2 += (grad[j] - q1).powi(2);
            a2 += grad[j].powi(2);
            n2 += q1.powi(2);
        }
        let rel = diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-8);
        if rel > out.worst {
            out.worst = rel;
            out.worst_tensor = name.clone();
        }
    }
    out
}

/// Naive recomputation of AUC and Hit@K from a candidate plan: explicit
/// loops over every candidate, squared distances summed coordinate by
/// coordinate, ties counted against the gold item.
pub fn brute_force_metrics(
    model: &Model,
    corpus: &Corpus,
    plan: &CandidatePlan,
    ks: &[usize],
) -> (f64, Vec<f64>, usize) {
    let mut auc_sum = 0.0;
    let mut hits = vec![0usize; ks.len()];
    let mut n = 0;
    for set in &plan.sets {
        if set.negatives.is_empty() {
            continue;
        }
        let x = model.embed_item(corpus, set.query).unwrap();
        let mut scores = Vec::new();
        let mut skip = false;
        for &c in [set.gold].iter().chain(&set.negatives) {
            let y = model.embed_item(corpus, c).unwrap();
            let rel = model.relations.as_ref().and_then(|t| {
                t.lookup(
                    &corpus.items()[set.query].category_id,
                    &corpus.items()[c].category_id,
                )
                .ok()
                .map(|(v, _)| v)
            });
            let mut s = 0.0;
            match model.kind() {
                ModelKind::TransNfcm => {
                    let Some(r) = rel else {
                        skip = true;
                        break;
                    };
                    for i in 0..x.len() {
                        s += (x[i] + r[i] - y[i]) * (x[i] + r[i] - y[i]);
                    }
                    s = -s;
                }
                ModelKind::Csn => {
                    let Some(w) = rel else {
                        skip = true;
                        break;
                    };
                    for i in 0..x.len() {
                        s += (x[i] * w[i] - y[i] * w[i]) * (x[i] * w[i] - y[i] * w[i]);
                    }
                    s = -s;
                }
                ModelKind::TriNet | ModelKind::SiaNet => {
                    for i in 0..x.len() {
                        s += (x[i] - y[i]) * (x[i] - y[i]);
                    }
                    s = -s;
                }
                ModelKind::Bpr => {
                    for i in 0..x.len() {
                        s += x[i] * y[i];
                    }
                }
            }
            scores.push(s);
        }
        if skip {
            continue;
        }
        let gold = scores[0];
        let mut below = 0;
        let mut at_or_above = 0;
        for &s in &scores[1..] {
            if s < gold {
                below += 1;
            } else {
                at_or_above += 1;
            }
        }
        auc_sum += below as f64 / (scores.len() - 1) as f64;
        for (h, &k) in hits.iter_mut().zip(ks) {
            if at_or_above < k {
                *h += 1;
            }
        }
        n += 1;
    }
    let nf = n.max(1) as f64;
    (
        if n > 0 { auc_sum / n as f64 } else { 0.0 },
        hits.iter().map(|&h| h as f64 / nf).collect(),
        n,
    )
}
