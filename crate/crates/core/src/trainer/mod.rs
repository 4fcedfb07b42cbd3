//! Epoch loop, losses, optimizer and checkpoints.

mod checkpoint;
mod config;
mod grad;
pub mod loss;
mod optim;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::evaluator::{build_candidates, evaluate_plan, CandidatePlan, EvalConfig};
use crate::model::Model;
use crate::rng;
use crate::sampling::{sample_five_tuples, EvalMode};
use crate::scoring::ScorePart;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::TrainConfig;
pub use grad::{batch_gradient, BatchResult, DropoutKey, Gradients};
pub use optim::{lr_at, sgd_momentum_step, Momentum};

/// `(min, mean, max)` of relation-vector norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    /// Fraction of tuples with a non-zero loss.
    pub active_fraction: f64,
    pub tuples: usize,
    pub skipped_slots: usize,
    pub relation_norms: Option<NormSummary>,
    pub val_auc: Option<f64>,
}

/// Run one epoch: fresh tuples, deterministic shuffle, one optimizer step
/// per minibatch.
pub fn train_epoch(
    model: &mut Model,
    corpus: &Corpus,
    optimizer: &mut Momentum,
    epoch: usize,
) -> Result<EpochStats> {
    let cfg = model.config.clone();
    let sample = sample_five_tuples(
        &corpus.pairs(Split::Train).pairs,
        corpus,
        cfg.negatives_per_side,
        cfg.seed,
        epoch,
    )?;
    let mut tuples = sample.tuples;
    tuples.shuffle(&mut rng::stream(cfg.seed, "tuple-shuffle", &[epoch as u64]));

    let lr = lr_at(epoch, &cfg);
    let mut loss_sum = 0.0;
    let mut active = 0;
    for (b, batch) in tuples.chunks(cfg.batch_size).enumerate() {
        let key = DropoutKey {
            seed: cfg.seed,
            epoch,
            offset: b * cfg.batch_size,
        };
        let res = batch_gradient(model, corpus, batch, Some(key))?;
        if !res.loss.is_finite() {
            return Err(Error::NonFinite {
                tensor: format!("loss of batch {b} in epoch {epoch}"),
            });
        }
        optimizer.step(model, &res.grads, lr)?;
        loss_sum += res.loss * batch.len() as f64;
        active += res.active;
    }
    model.check_finite()?;
    model.epoch = epoch + 1;

    let n = tuples.len();
    Ok(EpochStats {
        epoch,
        lr,
        mean_loss: if n > 0 { loss_sum / n as f64 } else { 0.0 },
        active_fraction: if n > 0 { active as f64 / n as f64 } else { 0.0 },
        tuples: n,
        skipped_slots: sample.skipped,
        relation_norms: model.relations.as_ref().map(|r| {
            let (min, mean, max) = r.norm_summary();
            NormSummary { min, mean, max }
        }),
        val_auc: None,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Model after the last epoch.
    pub model: Model,
    /// Model after the epoch with the highest validation AUC, if any
    /// validation queries exist.
    pub best: Option<Model>,
}

/// Owns a model and its optimizer state for a training run.
pub struct Trainer<'c> {
    corpus: &'c Corpus,
    model: Model,
    optimizer: Momentum,
    validation: Option<CandidatePlan>,
    val_config: EvalConfig,
    best: Option<(f64, Model)>,
}

impl<'c> Trainer<'c> {
    pub fn new(corpus: &'c Corpus, config: &TrainConfig) -> Result<Self> {
        let model = Model::new(corpus, config)?;
        let val_config = EvalConfig {
            negatives: config.val_negatives,
            split: Split::Validation,
            mode: EvalMode::Open,
            part: ScorePart::All,
            seed: rng::derive_seed(config.seed, "validation", &[]),
            ..EvalConfig::default()
        };
        let validation = if corpus.pairs(Split::Validation).pairs.is_empty() {
            None
        } else {
            Some(build_candidates(corpus, &val_config)?)
        };
        Ok(Self {
            corpus,
            optimizer: Momentum::new(&model),
            model,
            validation,
            val_config,
            best: None,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Train one more epoch and score the validation split.
    pub fn step_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.model.epoch;
        let mut stats = train_epoch(&mut self.model, self.corpus, &mut self.optimizer, epoch)?;
        if let Some(plan) = &self.validation {
            let report = evaluate_plan(&self.model, self.corpus, plan, &self.val_config)?;
            if report.n_queries > 0 {
                stats.val_auc = Some(report.auc);
            }
        }
        self.model.history.push(stats.clone());
        if let Some(auc) = stats.val_auc {
            if self.best.as_ref().is_none_or(|(b, _)| auc > *b) {
                self.best = Some((auc, self.model.clone()));
            }
        }
        Ok(stats)
    }

    /// Train for the configured number of epochs, reporting each epoch.
    pub fn run(mut self, mut on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
        while self.model.epoch < self.model.config.epochs {
            let stats = self.step_epoch()?;
            log::info!(
                "epoch {} lr {:.1e} loss {:.5} active {:.3} val_auc {}",
                stats.epoch,
                stats.lr,
                stats.mean_loss,
                stats.active_fraction,
                stats.val_auc.map_or("-".to_string(), |a| format!("{a:.4}"))
            );
            on_epoch(&stats);
        }
        Ok(TrainOutcome {
            model: self.model,
            best: self.best.map(|(_, m)| m),
        })
    }
}

/// Train a fresh model on `corpus`.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(corpus, config)?.run(|_| {})
}

/// Write epoch records as JSON lines.
pub fn write_training_log(path: &Path, history: &[EpochStats]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in history {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
