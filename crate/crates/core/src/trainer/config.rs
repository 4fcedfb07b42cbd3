use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub base_lr: f64,
    pub momentum: f64,
    /// Divide the learning rate by `lr_drop_factor` every this many epochs.
    pub lr_drop_every: usize,
    pub lr_drop_factor: f64,
    /// Multiplier on the learning rate of encoder tensors.
    pub encoder_lr_scale: f64,
    pub margin: f64,
    /// Tuples per minibatch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Embedding width per modality.
    pub embed_dim: usize,
    /// Empty means every modality of the corpus.
    pub modalities: Vec<String>,
    pub dropout_rate: f64,
    pub seed: u64,
    pub negatives_per_side: usize,
    /// Width of an optional rectified hidden layer in each encoder.
    pub hidden_dim: Option<usize>,
    /// Two independent vectors per category pair instead of one signed vector.
    pub untied_directions: bool,
    /// L1 weight on conditional-similarity masks.
    pub csn_l1: f64,
    /// Margin of the contrastive loss on negatives.
    pub contrastive_margin: f64,
    /// Negatives per query for the per-epoch validation score.
    pub val_negatives: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::TransNfcm,
            base_lr: 1e-3,
            momentum: 0.9,
            lr_drop_every: 10,
            lr_drop_factor: 10.0,
            encoder_lr_scale: 1.0,
            margin: 1.0,
            batch_size: 128,
            epochs: 30,
            embed_dim: 128,
            modalities: Vec::new(),
            dropout_rate: 0.5,
            seed: 0,
            negatives_per_side: 1,
            hidden_dim: None,
            untied_directions: false,
            csn_l1: 5e-4,
            contrastive_margin: 1.0,
            val_negatives: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.base_lr) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.lr_drop_every == 0 {
            return bad("lr_drop_every must be at least 1".into());
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor >= 1.0) {
            return bad(format!("lr_drop_factor must be at least 1, got {}", self.lr_drop_factor));
        }
        if !(self.encoder_lr_scale.is_finite() && self.encoder_lr_scale >= 0.0) {
            return bad(format!("encoder_lr_scale must be non-negative, got {}", self.encoder_lr_scale));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return bad(format!("margin must be non-negative, got {}", self.margin));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.negatives_per_side == 0 {
            return bad("negatives_per_side must be at least 1".into());
        }
        if self.hidden_dim == Some(0) {
            return bad("hidden_dim must be at least 1 when set".into());
        }
        if !(self.csn_l1.is_finite() && self.csn_l1 >= 0.0) {
            return bad(format!("csn_l1 must be non-negative, got {}", self.csn_l1));
        }
        if !finite_pos(self.contrastive_margin) {
            return bad(format!(
                "contrastive_margin must be positive, got {}",
                self.contrastive_margin
            ));
        }
        if self.val_negatives == 0 {
            return bad("val_negatives must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            TrainConfig { embed_dim: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { dropout_rate: 1.0, ..Default::default() },
            TrainConfig { base_lr: f64::NAN, ..Default::default() },
            TrainConfig { hidden_dim: Some(0), ..Default::default() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"model": "trinet", "epochs": 3}"#).unwrap();
        assert_eq!(c.model, ModelKind::TriNet);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 128);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochz": 3}"#).is_err());
    }
}
