//! Ranking metrics and the evaluation protocol.
//!
//! Every positive pair of the chosen split is a query: the head item must
//! rank its gold tail above sampled negatives. Ties count against the gold
//! item in both metrics.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::model::{Model, ModelKind};
use crate::sampling::{sample_eval_candidates, CandidateSet, EvalMode};
use crate::scoring::ScorePart;

pub const DEFAULT_KS: [usize; 4] = [5, 10, 20, 40];

/// Fraction of negatives scored strictly below the gold item.
pub fn auc_for_query(gold: f64, negatives: &[f64]) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Invalid("AUC needs at least one negative".into()));
    }
    let below = negatives.iter().filter(|&&s| gold > s).count();
    Ok(below as f64 / negatives.len() as f64)
}

/// Whether the gold item lands in the top `k`, ranked below every negative
/// it ties with.
pub fn hit_at_k(gold: f64, negatives: &[f64], k: usize) -> bool {
    negatives.iter().filter(|&&s| s >= gold).count() < k
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub negatives: usize,
    pub ks: Vec<usize>,
    pub split: Split,
    pub mode: EvalMode,
    pub part: ScorePart,
    pub seed: u64,
    /// Only queries whose head item belongs to this category.
    pub head_category: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            negatives: 100,
            ks: DEFAULT_KS.to_vec(),
            split: Split::Test,
            mode: EvalMode::Open,
            part: ScorePart::All,
            seed: 0,
            head_category: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::Invalid("negatives must be at least 1".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Invalid(format!(
                "cutoffs must be a non-empty list of positive integers, got {:?}",
                self.ks
            )));
        }
        Ok(())
    }

    fn sorted_ks(&self) -> Vec<usize> {
        let mut ks = self.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

/// Frozen candidates for every evaluable query of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePlan {
    pub sets: Vec<CandidateSet>,
    /// Queries whose category pair never occurs in training.
    pub skipped_unknown_relation: usize,
}

/// Draw candidates for every query of `cfg.split`. Depends only on the
/// corpus and the config, never on a model.
pub fn build_candidates(corpus: &Corpus, cfg: &EvalConfig) -> Result<CandidatePlan> {
    cfg.validate()?;
    let filter = match &cfg.head_category {
        Some(c) => Some(
            corpus
                .categories()
                .binary_search(c)
                .map_err(|_| Error::Invalid(format!("unknown head category {c:?}")))?,
        ),
        None => None,
    };
    let queries: Vec<_> = corpus
        .pairs(cfg.split)
        .pairs
        .iter()
        .filter(|p| filter.is_none_or(|c| corpus.category_of(p.head) == c))
        .collect();
    let drawn: Vec<Result<Option<CandidateSet>>> = queries
        .par_iter()
        .map(|p| {
            let known = corpus
                .graph()
                .relation(corpus.category_of(p.head), corpus.category_of(p.tail))
                .is_some();
            if !known {
                return Ok(None);
            }
            sample_eval_candidates(p.head, p.tail, corpus, cfg.negatives, cfg.mode, cfg.seed).map(Some)
        })
        .collect();
    let mut plan = CandidatePlan {
        sets: Vec::with_capacity(drawn.len()),
        skipped_unknown_relation: 0,
    };
    for d in drawn {
        match d? {
            Some(s) => plan.sets.push(s),
            None => plan.skipped_unknown_relation += 1,
        }
    }
    Ok(plan)
}

/// Percentages in the column layout of the usual results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub columns: Vec<String>,
    pub percent: Vec<f64>,
}

impl TableRow {
    pub fn header(&self) -> String {
        format!("| {} |", self.columns.join(" | "))
    }

    pub fn values(&self) -> String {
        let cells: Vec<String> = self.percent.iter().map(|p| format!("{p:.1}")).collect();
        format!("| {} |", cells.join(" | "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    /// Hit rate per cutoff.
    pub hits: BTreeMap<usize, f64>,
    pub n_queries: usize,
    /// Queries excluded from every average.
    pub n_skipped: usize,
    pub skipped_unknown_relation: usize,
    /// Queries for which no eligible negative existed.
    pub skipped_no_negatives: usize,
    /// Queries that received fewer negatives than requested.
    pub shortfall_queries: usize,
    /// Total number of missing negatives over all queries.
    pub shortfall_negatives: usize,
    pub split: Split,
    pub mode: EvalMode,
    pub score_part: ScorePart,
    pub negatives: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub head_category: Option<String>,
    pub model: Option<ModelKind>,
    pub status: String,
    pub table: TableRow,
}

struct QueryOutcome {
    auc: f64,
    hits: Vec<bool>,
}

/// Aggregate a plan using `score`, which maps `(query, candidates)` to one
/// score per candidate (gold first), or `None` to skip the query.
pub fn evaluate_with<F>(plan: &CandidatePlan, cfg: &EvalConfig, score: F) -> Result<EvalReport>
where
    F: Fn(usize, &[usize]) -> Result<Option<Vec<f64>>> + Sync,
{
    cfg.validate()?;
    let ks = cfg.sorted_ks();
    let outcomes: Vec<Result<Option<QueryOutcome>>> = plan
        .sets
        .par_iter()
        .map(|set| {
            if set.negatives.is_empty() {
                return Ok(None);
            }
            let cands = set.candidates();
            let Some(scores) = score(set.query, &cands)? else {
                return Ok(None);
            };
            if scores.len() != cands.len() {
                return Err(Error::dims("candidate scores", cands.len(), scores.len()));
            }
            if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: format!("candidate score {s}"),
                });
            }
            let (gold, negs) = (scores[0], &scores[1..]);
            Ok(Some(QueryOutcome {
                auc: auc_for_query(gold, negs)?,
                hits: ks.iter().map(|&k| hit_at_k(gold, negs, k)).collect(),
            }))
        })
        .collect();

    let mut auc_sum = 0.0;
    let mut hit_sums = vec![0usize; ks.len()];
    let mut n = 0usize;
    let mut skipped_unknown = plan.skipped_unknown_relation;
    let mut skipped_empty = 0usize;
    for (set, o) in plan.sets.iter().zip(outcomes) {
        match o? {
            Some(q) => {
                n += 1;
                auc_sum += q.auc;
                for (s, h) in hit_sums.iter_mut().zip(q.hits) {
                    *s += usize::from(h);
                }
            }
            None if set.negatives.is_empty() => skipped_empty += 1,
            None => skipped_unknown += 1,
        }
    }
    let mean = |s: f64| if n > 0 { s / n as f64 } else { 0.0 };
    let auc = mean(auc_sum);
    let hits: BTreeMap<usize, f64> = ks
        .iter()
        .zip(&hit_sums)
        .map(|(&k, &s)| (k, mean(s as f64)))
        .collect();
    let status = if n == 0 {
        log::warn!("evaluation found no evaluable queries");
        "warning: no evaluable queries".to_string()
    } else {
        "ok".to_string()
    };
    let mut columns = vec!["AUC".to_string()];
    let mut percent = vec![100.0 * auc];
    for (k, h) in &hits {
        columns.push(format!("Hit@{k}"));
        percent.push(100.0 * h);
    }
    Ok(EvalReport {
        auc,
        hits,
        n_queries: n,
        n_skipped: skipped_unknown + skipped_empty,
        skipped_unknown_relation: skipped_unknown,
        skipped_no_negatives: skipped_empty,
        shortfall_queries: plan.sets.iter().filter(|s| s.shortfall > 0).count(),
        shortfall_negatives: plan.sets.iter().map(|s| s.shortfall).sum(),
        split: cfg.split,
        mode: cfg.mode,
        score_part: cfg.part,
        negatives: cfg.negatives,
        ks,
        seed: cfg.seed,
        head_category: cfg.head_category.clone(),
        model: None,
        status,
        table: TableRow { columns, percent },
    })
}

/// Score a frozen plan with a model.
pub fn evaluate_plan(
    model: &Model,
    corpus: &Corpus,
    plan: &CandidatePlan,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    model.check_corpus(corpus)?;
    if cfg.part != ScorePart::All && model.kind() != ModelKind::TransNfcm {
        return Err(Error::Invalid(format!(
            "score part {:?} only applies to transnfcm models",
            cfg.part.as_str()
        )));
    }
    let mut needed: Vec<usize> = plan
        .sets
        .iter()
        .flat_map(|s| s.candidates().into_iter().chain([s.query]))
        .collect();
    needed.sort_unstable();
    needed.dedup();
    let embedded = model.embed_items(corpus, &needed)?;
    let emb: HashMap<usize, Vec<f64>> = needed.into_iter().zip(embedded).collect();
    let cmap = model.category_map(corpus);
    let relational = model.kind().uses_relations();

    let mut report = evaluate_with(plan, cfg, |q, cands| {
        let cq = cmap[corpus.category_of(q)];
        let mut scores = Vec::with_capacity(cands.len());
        for &c in cands {
            let rel = model.relation(cq, cmap[corpus.category_of(c)]);
            if relational && rel.is_none() {
                return Ok(None);
            }
            match model.score(&emb[&q], &emb[&c], rel, cfg.part)? {
                Some(s) => scores.push(s),
                None => return Ok(None),
            }
        }
        Ok(Some(scores))
    })?;
    report.model = Some(model.kind());
    Ok(report)
}

/// Full protocol: draw candidates for `cfg.split`, then score them.
pub fn evaluate(model: &Model, corpus: &Corpus, cfg: &EvalConfig) -> Result<EvalReport> {
    let plan = build_candidates(corpus, cfg)?;
    evaluate_plan(model, corpus, &plan, cfg)
}
