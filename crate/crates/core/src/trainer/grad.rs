//! Batch loss and its analytic gradient.

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::encoder::{DropoutMask, EncoderParams};
use crate::error::Result;
use crate::model::{ItemTrace, Model, ModelKind};
use crate::relations::RelationRef;
use crate::rng;
use crate::sampling::{CorruptSide, FiveTuple};

use super::loss::{bpr_loss, contrastive_loss, hinge_term};

/// Tuples per parallel work unit. Partial sums are reduced in chunk order so
/// the result does not depend on the number of threads.
const CHUNK: usize = 8;

/// Gradient buffers shaped like a [`Model`]'s tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoders: EncoderParams,
    pub relations: Vec<f64>,
}

impl Gradients {
    pub fn zeros(model: &Model) -> Self {
        Self {
            encoders: model.encoders.zeros_like(),
            relations: vec![0.0; model.relations.as_ref().map_or(0, |r| r.rows.len())],
        }
    }

    /// Same order and names as [`Model::tensors`].
    pub fn tensors(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for e in &self.encoders.encoders {
            for (name, t) in e.tensors() {
                out.push((format!("encoder.{}.{name}", e.modality), t));
            }
        }
        if !self.relations.is_empty() {
            out.push(("relations".to_string(), &self.relations));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for e in &mut self.encoders.encoders {
            out.extend(e.tensors_mut().into_iter().map(|(_, t)| t));
        }
        if !self.relations.is_empty() {
            out.push(&mut self.relations);
        }
        out
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b.1).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, f: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= f);
        }
    }
}

/// Identifies the dropout masks of a batch: tuple `i` of the batch uses the
/// stream `(seed, epoch, offset + i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub epoch: usize,
    pub offset: usize,
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    /// Mean tuple loss plus any parameter penalty.
    pub loss: f64,
    /// Tuples with a non-zero loss.
    pub active: usize,
    pub grads: Gradients,
}

/// Value of one pair term: distance for distance-based kinds, score for BPR.
fn pair_value(model: &Model, x: &[f64], y: &[f64], rel: &[f64]) -> f64 {
    match model.kind() {
        ModelKind::TransNfcm => x
            .iter()
            .zip(y)
            .zip(rel)
            .map(|((a, b), r)| (a + r - b).powi(2))
            .sum(),
        ModelKind::Csn => x
            .iter()
            .zip(y)
            .zip(rel)
            .map(|((a, b), w)| (w * (a - b)).powi(2))
            .sum(),
        ModelKind::TriNet | ModelKind::SiaNet => {
            x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
        }
        ModelKind::Bpr => x.iter().zip(y).map(|(a, b)| a * b).sum(),
    }
}

/// Accumulate `coeff · ∂value/∂(x, y, rel)`.
#[allow(clippy::too_many_arguments)]
fn pair_backward(
    model: &Model,
    x: &[f64],
    y: &[f64],
    rel: &[f64],
    coeff: f64,
    gx: &mut [f64],
    gy: &mut [f64],
    grel: &mut [f64],
) {
    match model.kind() {
        ModelKind::TransNfcm => {
            for i in 0..x.len() {
                let d = coeff * 2.0 * (x[i] + rel[i] - y[i]);
                gx[i] += d;
                gy[i] -= d;
                grel[i] += d;
            }
        }
        ModelKind::Csn => {
            for i in 0..x.len() {
                let diff = x[i] - y[i];
                let d = coeff * 2.0 * rel[i] * rel[i] * diff;
                gx[i] += d;
                gy[i] -= d;
                grel[i] += coeff * 2.0 * rel[i] * diff * diff;
            }
        }
        ModelKind::TriNet | ModelKind::SiaNet => {
            for i in 0..x.len() {
                let d = coeff * 2.0 * (x[i] - y[i]);
                gx[i] += d;
                gy[i] -= d;
            }
        }
        ModelKind::Bpr => {
            for i in 0..x.len() {
                gx[i] += coeff * y[i];
                gy[i] += coeff * x[i];
            }
        }
    }
}

fn tuple_masks(model: &Model, key: DropoutKey, index: usize) -> Vec<Vec<DropoutMask>> {
    let mut r = rng::stream(key.seed, "dropout", &[key.epoch as u64, index as u64]);
    (0..3)
        .map(|_| {
            model
                .encoders
                .encoders
                .iter()
                .map(|e| DropoutMask::sample(e.input_dim(), model.config.dropout_rate, &mut r))
                .collect()
        })
        .collect()
}

/// Loss of one tuple, accumulating gradients into `grads`. Returns the loss.
fn tuple_step(
    model: &Model,
    corpus: &Corpus,
    t: &FiveTuple,
    masks: Option<&[Vec<DropoutMask>]>,
    grads: &mut Gradients,
) -> Result<f64> {
    // slots: 0 = head, 1 = tail, 2 = corrupted
    let items = [t.head, t.tail, t.corrupted];
    let traces: Vec<ItemTrace> = items
        .iter()
        .enumerate()
        .map(|(s, &i)| model.forward_item(corpus, i, masks.map(|m| m[s].as_slice())))
        .collect::<Result<_>>()?;
    let (nh, nt) = match t.side {
        CorruptSide::Tail => (0, 2),
        CorruptSide::Head => (2, 1),
    };
    let dim = model.embed_dim();
    let zeros = vec![0.0; dim];
    let relation = |rel: RelationRef| -> (Vec<f64>, Option<(usize, f64)>) {
        match &model.relations {
            Some(table) => (table.vector(rel), Some(table.resolve(rel))),
            None => (zeros.clone(), None),
        }
    };
    let (r_pos, row_pos) = relation(t.relation);
    let (r_neg, row_neg) = relation(t.corrupted_relation);
    let emb = |s: usize| traces[s].embedding.as_slice();
    let v_pos = pair_value(model, emb(0), emb(1), &r_pos);
    let v_neg = pair_value(model, emb(nh), emb(nt), &r_neg);

    let cfg = &model.config;
    let (loss, c_pos, c_neg) = match model.kind() {
        ModelKind::TransNfcm | ModelKind::TriNet | ModelKind::Csn => {
            let l = hinge_term(v_pos, v_neg, cfg.margin);
            if v_pos - v_neg + cfg.margin > 0.0 {
                (l, 1.0, -1.0)
            } else {
                (l, 0.0, 0.0)
            }
        }
        ModelKind::SiaNet => {
            let (lp, gp) = contrastive_loss(v_pos, true, cfg.contrastive_margin);
            let (ln, gn) = contrastive_loss(v_neg, false, cfg.contrastive_margin);
            (lp + ln, gp, gn)
        }
        ModelKind::Bpr => {
            let (l, g) = bpr_loss(v_pos, v_neg);
            (l, g, -g)
        }
    };
    if c_pos == 0.0 && c_neg == 0.0 {
        return Ok(loss);
    }

    let mut g_emb = vec![vec![0.0; dim]; 3];
    let mut g_rpos = vec![0.0; dim];
    let mut g_rneg = vec![0.0; dim];
    {
        let [g0, g1, g2] = &mut g_emb[..] else { unreachable!() };
        pair_backward(model, emb(0), emb(1), &r_pos, c_pos, g0, g1, &mut g_rpos);
        let (gh, gt) = match t.side {
            CorruptSide::Tail => (g0, g2),
            CorruptSide::Head => (g2, g1),
        };
        pair_backward(model, emb(nh), emb(nt), &r_neg, c_neg, gh, gt, &mut g_rneg);
    }

    for (row, g) in [(row_pos, &g_rpos), (row_neg, &g_rneg)] {
        if let Some((row, sign)) = row {
            let dst = &mut grads.relations[row * dim..(row + 1) * dim];
            dst.iter_mut().zip(g).for_each(|(d, v)| *d += sign * v);
        }
    }
    let d = model.encoders.embed_dim();
    for (s, trace) in traces.iter().enumerate() {
        for (m, (enc, part)) in model.encoders.encoders.iter().zip(&trace.parts).enumerate() {
            let upstream = &g_emb[s][m * d..(m + 1) * d];
            if upstream.iter().all(|&v| v == 0.0) {
                continue;
            }
            enc.backward(part, upstream, &mut grads.encoders.encoders[m]);
        }
    }
    Ok(loss)
}

/// Mean loss and gradient over `tuples`. Without a dropout key the encoders
/// run without masks.
pub fn batch_gradient(
    model: &Model,
    corpus: &Corpus,
    tuples: &[FiveTuple],
    dropout: Option<DropoutKey>,
) -> Result<BatchResult> {
    let partials: Vec<Result<(f64, usize, Gradients)>> = tuples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut g = Gradients::zeros(model);
            let mut loss = 0.0;
            let mut active = 0;
            for (j, t) in chunk.iter().enumerate() {
                let masks = dropout.map(|k| tuple_masks(model, k, k.offset + c * CHUNK + j));
                let l = tuple_step(model, corpus, t, masks.as_deref(), &mut g)?;
                loss += l;
                active += usize::from(l > 0.0);
            }
            Ok((loss, active, g))
        })
        .collect();

    let mut grads = Gradients::zeros(model);
    let mut loss = 0.0;
    let mut active = 0;
    for p in partials {
        let (l, a, g) = p?;
        loss += l;
        active += a;
        grads.add_assign(&g);
    }
    if !tuples.is_empty() {
        let n = tuples.len() as f64;
        loss /= n;
        grads.scale(1.0 / n);
    }
    if model.kind() == ModelKind::Csn && model.config.csn_l1 > 0.0 {
        let lambda = model.config.csn_l1;
        let rows = &model.relations.as_ref().expect("csn has masks").rows;
        loss += lambda * rows.iter().map(|w| w.abs()).sum::<f64>();
        for (g, w) in grads.relations.iter_mut().zip(rows) {
            if *w != 0.0 {
                *g += lambda * w.signum();
            }
        }
    }
    Ok(BatchResult { loss, active, grads })
}
