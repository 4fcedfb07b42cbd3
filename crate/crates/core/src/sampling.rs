//! Corrupted training tuples and frozen evaluation candidates.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Pair};
use crate::error::{Error, Result};
use crate::relations::RelationRef;
use crate::rng;

/// Rejection attempts per negative slot before the slot is given up.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptSide {
    Tail,
    Head,
}

/// A positive pair, its relation and one corrupted counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FiveTuple {
    pub head: usize,
    pub tail: usize,
    pub relation: RelationRef,
    pub corrupted: usize,
    pub corrupted_relation: RelationRef,
    pub side: CorruptSide,
}

impl FiveTuple {
    /// The negative pair in head → tail order.
    pub fn negative_pair(&self) -> (usize, usize) {
        match self.side {
            CorruptSide::Tail => (self.head, self.corrupted),
            CorruptSide::Head => (self.corrupted, self.tail),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TupleSample {
    pub tuples: Vec<FiveTuple>,
    /// Slots for which no valid corrupted item was found.
    pub skipped: usize,
}

/// Items of every category complementary to each category, ascending.
fn complementary_pools(corpus: &Corpus) -> Vec<Vec<usize>> {
    let graph = corpus.graph();
    (0..corpus.categories().len())
        .map(|c| {
            let mut pool: Vec<usize> = graph
                .complementary(c)
                .iter()
                .flat_map(|&o| corpus.items_in_category(o).iter().copied())
                .collect();
            pool.sort_unstable();
            pool
        })
        .collect()
}

fn draw(
    pool: &[usize],
    rng: &mut impl Rng,
    reject: impl Fn(usize) -> bool,
) -> Option<usize> {
    if pool.is_empty() {
        return None;
    }
    for _ in 0..MAX_ATTEMPTS {
        let c = pool[rng.random_range(0..pool.len())];
        if !reject(c) {
            return Some(c);
        }
    }
    None
}

/// Corrupt every positive `negatives_per_side` times on each side.
///
/// Corrupted items are drawn uniformly from all categories complementary to
/// the kept item and must not be a training positive of it. Each positive
/// owns a stream derived from `(seed, epoch, index)`, so the result does not
/// depend on scheduling.
pub fn sample_five_tuples(
    positives: &[Pair],
    corpus: &Corpus,
    negatives_per_side: usize,
    seed: u64,
    epoch: usize,
) -> Result<TupleSample> {
    if negatives_per_side == 0 {
        return Err(Error::Invalid("negatives_per_side must be at least 1".into()));
    }
    let graph = corpus.graph();
    let pools = complementary_pools(corpus);
    let per_pair: Vec<Result<(Vec<FiveTuple>, usize)>> = positives
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (x, y) = (p.head, p.tail);
            let (cx, cy) = (corpus.category_of(x), corpus.category_of(y));
            let relation = graph.relation(cx, cy).ok_or_else(|| Error::UnknownRelation {
                head: corpus.categories()[cx].clone(),
                tail: corpus.categories()[cy].clone(),
            })?;
            let mut rng = rng::stream(seed, "five-tuples", &[epoch as u64, i as u64]);
            let mut out = Vec::with_capacity(2 * negatives_per_side);
            let mut skipped = 0;
            for _ in 0..negatives_per_side {
                match draw(&pools[cx], &mut rng, |c| c == y || corpus.is_train_positive(x, c)) {
                    Some(c) => out.push(FiveTuple {
                        head: x,
                        tail: y,
                        relation,
                        corrupted: c,
                        corrupted_relation: graph
                            .relation(cx, corpus.category_of(c))
                            .expect("pool holds complementary categories"),
                        side: CorruptSide::Tail,
                    }),
                    None => skipped += 1,
                }
                match draw(&pools[cy], &mut rng, |c| c == x || corpus.is_train_positive(c, y)) {
                    Some(c) => out.push(FiveTuple {
                        head: x,
                        tail: y,
                        relation,
                        corrupted: c,
                        corrupted_relation: graph
                            .relation(corpus.category_of(c), cy)
                            .expect("pool holds complementary categories"),
                        side: CorruptSide::Head,
                    }),
                    None => skipped += 1,
                }
            }
            Ok((out, skipped))
        })
        .collect();

    let mut sample = TupleSample::default();
    for r in per_pair {
        let (t, s) = r?;
        sample.tuples.extend(t);
        sample.skipped += s;
    }
    Ok(sample)
}

/// Where evaluation negatives come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Any category complementary to the query's.
    #[default]
    Open,
    /// Only the gold item's category.
    KnownTarget,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Open => "open",
            EvalMode::KnownTarget => "known-target",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(EvalMode::Open),
            "known-target" => Ok(EvalMode::KnownTarget),
            other => Err(Error::Invalid(format!(
                "unknown evaluation mode {other:?} (expected open or known-target)"
            ))),
        }
    }
}

/// Candidates for one query: the gold tail plus sampled negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub query: usize,
    pub gold: usize,
    pub negatives: Vec<usize>,
    /// Requested minus available negatives, when the pool ran dry.
    pub shortfall: usize,
}

impl CandidateSet {
    /// `[gold] + negatives`
    pub fn candidates(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.negatives.len() + 1);
        v.push(self.gold);
        v.extend_from_slice(&self.negatives);
        v
    }
}

/// Draw `n` distinct negatives for `(query, gold)`.
///
/// Negatives never co-occur with the query in any split and never equal the
/// gold item. The stream is keyed by the query and gold ids so every model
/// evaluated with the same seed sees the same candidates.
pub fn sample_eval_candidates(
    query: usize,
    gold: usize,
    corpus: &Corpus,
    n: usize,
    mode: EvalMode,
    seed: u64,
) -> Result<CandidateSet> {
    if n == 0 {
        return Err(Error::Invalid("number of negatives must be at least 1".into()));
    }
    let cq = corpus.category_of(query);
    let categories: Vec<usize> = match mode {
        EvalMode::Open => corpus.graph().complementary(cq).to_vec(),
        EvalMode::KnownTarget => vec![corpus.category_of(gold)],
    };
    let mut eligible: Vec<usize> = categories
        .iter()
        .flat_map(|&c| corpus.items_in_category(c).iter().copied())
        .filter(|&c| c != gold && c != query && !corpus.is_positive(query, c))
        .collect();
    eligible.sort_unstable();

    let items = corpus.items();
    let key = [
        rng::fnv1a(items[query].item_id.as_bytes()),
        rng::fnv1a(items[gold].item_id.as_bytes()),
    ];
    let mut r = rng::stream(seed, "eval-candidates", &key);
    let (negatives, shortfall) = if eligible.len() <= n {
        let short = n - eligible.len();
        (eligible, short)
    } else {
        let mut picked: Vec<usize> = index::sample(&mut r, eligible.len(), n)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        picked.sort_unstable();
        (picked, 0)
    };
    Ok(CandidateSet {
        query,
        gold,
        negatives,
        shortfall,
    })
}

#[derive(Serialize, Deserialize)]
struct CandidateRecord {
    query_id: String,
    gold_id: String,
    negative_ids: Vec<String>,
}

/// Write frozen candidate sets as JSON lines.
pub fn write_candidates(path: &Path, corpus: &Corpus, sets: &[CandidateSet]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let id = |i: usize| corpus.items()[i].item_id.clone();
    for s in sets {
        let rec = CandidateRecord {
            query_id: id(s.query),
            gold_id: id(s.gold),
            negative_ids: s.negatives.iter().map(|&n| id(n)).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read candidate sets written by [`write_candidates`], resolving ids against
/// `corpus`. Shortfall is not stored and reads back as zero.
pub fn read_candidates(path: &Path, corpus: &Corpus) -> Result<Vec<CandidateSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        let resolve = |id: &str| {
            corpus.item_index(id).ok_or_else(|| Error::UnknownItem {
                id: id.to_string(),
                file: path.to_path_buf(),
                line: i + 1,
            })
        };
        let mut seen = HashSet::new();
        let mut negatives = Vec::with_capacity(rec.negative_ids.len());
        for n in &rec.negative_ids {
            let idx = resolve(n)?;
            if !seen.insert(idx) {
                return Err(Error::format(path, format!("line {}: duplicate negative {n:?}", i + 1)));
            }
            negatives.push(idx);
        }
        out.push(CandidateSet {
            query: resolve(&rec.query_id)?,
            gold: resolve(&rec.gold_id)?,
            negatives,
            shortfall: 0,
        });
    }
    Ok(out)
}
