//! Model parameters and the per-kind compatibility function.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoder::{fuse, DropoutMask, EncodeTrace, EncoderParams, ItemEmbedding, EmbeddingKind, ModalityEncoder};
use crate::error::{Error, Result};
use crate::relations::{RelationRef, RelationTable};
use crate::rng;
use crate::scoring::{dist_csn, dist_euclid, dist_transnfcm, score_inner, ScorePart};
use crate::trainer::{EpochStats, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Relation vectors translate head embeddings onto tail embeddings.
    #[default]
    TransNfcm,
    /// Squared euclidean distance, margin ranking.
    TriNet,
    /// Squared euclidean distance, contrastive loss.
    SiaNet,
    /// Inner product, soft-margin pairwise loss.
    Bpr,
    /// Per-relation masked euclidean distance, margin ranking.
    Csn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::TransNfcm,
        ModelKind::TriNet,
        ModelKind::SiaNet,
        ModelKind::Bpr,
        ModelKind::Csn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TransNfcm => "transnfcm",
            ModelKind::TriNet => "trinet",
            ModelKind::SiaNet => "sianet",
            ModelKind::Bpr => "bpr",
            ModelKind::Csn => "csn",
        }
    }

    /// Whether scoring needs a per-category-pair parameter.
    pub fn uses_relations(self) -> bool {
        matches!(self, ModelKind::TransNfcm | ModelKind::Csn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transnfcm" => Ok(ModelKind::TransNfcm),
            "trinet" => Ok(ModelKind::TriNet),
            "sianet" => Ok(ModelKind::SiaNet),
            "bpr" => Ok(ModelKind::Bpr),
            "csn" => Ok(ModelKind::Csn),
            "monomer" => Err(Error::Invalid(
                "model \"monomer\" is not supported: the mixture-of-local-distances model is out of \
                 scope because its mixture weights are not specified"
                    .into(),
            )),
            other => Err(Error::Invalid(format!(
                "unknown model {other:?} (expected transnfcm, trinet, sianet, bpr or csn)"
            ))),
        }
    }
}

/// Fusion order: visual first, then textual, then any other modality by name.
pub fn order_modalities<S: AsRef<str>>(names: &[S]) -> Vec<String> {
    let rank = |m: &str| match m {
        "visual" => 0,
        "textual" => 1,
        _ => 2,
    };
    let mut v: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
    v.sort_by(|a, b| rank(a).cmp(&rank(b)).then_with(|| a.cmp(b)));
    v.dedup();
    v
}

/// Forward intermediates of one item.
#[derive(Clone, Debug)]
pub struct ItemTrace {
    pub parts: Vec<EncodeTrace>,
    pub embedding: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    /// Training configuration with modalities resolved.
    pub config: TrainConfig,
    pub encoders: EncoderParams,
    /// Translations (transnfcm) or masks (csn); absent for the other kinds.
    pub relations: Option<RelationTable>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochStats>,
}

impl Model {
    /// Freshly initialized model for `corpus`.
    pub fn new(corpus: &Corpus, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let available: Vec<&str> = corpus.modalities().collect();
        let modalities = if config.modalities.is_empty() {
            order_modalities(&available)
        } else {
            for m in &config.modalities {
                if !available.contains(&m.as_str()) {
                    return Err(Error::Invalid(format!(
                        "modality {m:?} not present in corpus (has {available:?})"
                    )));
                }
            }
            order_modalities(&config.modalities)
        };
        let mut config = config.clone();
        config.modalities = modalities.clone();

        let encoders = modalities
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let input_dim = corpus.feature_table(m).expect("checked above").dim();
                let mut r = rng::stream(config.seed, "encoder-init", &[i as u64]);
                ModalityEncoder::new(m.clone(), input_dim, config.embed_dim, config.hidden_dim, &mut r)
            })
            .collect();
        let encoders = EncoderParams {
            encoders,
            dropout_rate: config.dropout_rate,
        };
        let dim = encoders.fused_dim();
        let graph = corpus.graph().clone();
        let relations = match config.model {
            ModelKind::TransNfcm => Some(RelationTable::translations(
                graph,
                dim,
                config.untied_directions,
                rng::derive_seed(config.seed, "relations", &[]),
            )),
            ModelKind::Csn => Some(RelationTable::masks(graph, dim, config.untied_directions)),
            _ => None,
        };
        Ok(Self {
            config,
            encoders,
            relations,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.model
    }

    pub fn embed_dim(&self) -> usize {
        self.encoders.fused_dim()
    }

    /// Every parameter tensor with a stable name, in serialization order.
    pub fn tensors(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for e in &self.encoders.encoders {
            for (name, t) in e.tensors() {
                out.push((format!("encoder.{}.{name}", e.modality), t));
            }
        }
        if let Some(r) = &self.relations {
            out.push(("relations".to_string(), &r.rows));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for e in &mut self.encoders.encoders {
            let m = e.modality.clone();
            for (name, t) in e.tensors_mut() {
                out.push((format!("encoder.{m}.{name}"), t));
            }
        }
        if let Some(r) = &mut self.relations {
            out.push(("relations".to_string(), &mut r.rows));
        }
        out
    }

    /// Fail with the name of the first tensor holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { tensor: name });
            }
        }
        Ok(())
    }

    /// Modality feature widths must match the corpus.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        for e in &self.encoders.encoders {
            let table = corpus.feature_table(&e.modality).ok_or_else(|| {
                Error::Invalid(format!("corpus lacks modality {:?} used by the model", e.modality))
            })?;
            if table.dim() != e.input_dim() {
                return Err(Error::dims(
                    format!("{} features (checkpoint vs corpus)", e.modality),
                    e.input_dim(),
                    table.dim(),
                ));
            }
        }
        Ok(())
    }

    /// Encode one item, keeping intermediates for back-propagation.
    pub fn forward_item(
        &self,
        corpus: &Corpus,
        item: usize,
        masks: Option<&[DropoutMask]>,
    ) -> Result<ItemTrace> {
        let mut parts = Vec::with_capacity(self.encoders.encoders.len());
        let mut single = Vec::with_capacity(self.encoders.encoders.len());
        for (i, e) in self.encoders.encoders.iter().enumerate() {
            let raw = corpus.features(item, &e.modality).ok_or_else(|| {
                Error::Invalid(format!(
                    "item {:?} has no {} features",
                    corpus.items()[item].item_id, e.modality
                ))
            })?;
            let trace = e.forward(raw, masks.map(|m| &m[i]))?;
            single.push(ItemEmbedding {
                values: trace.output.clone(),
                kind: EmbeddingKind::Single(e.modality.clone()),
            });
            parts.push(trace);
        }
        let embedding = fuse(&single)?.values;
        Ok(ItemTrace { parts, embedding })
    }

    /// Inference-time embedding of one item.
    pub fn embed_item(&self, corpus: &Corpus, item: usize) -> Result<Vec<f64>> {
        Ok(self.forward_item(corpus, item, None)?.embedding)
    }

    /// Embeddings of the given items, computed in parallel.
    pub fn embed_items(&self, corpus: &Corpus, items: &[usize]) -> Result<Vec<Vec<f64>>> {
        items
            .par_iter()
            .map(|&i| self.embed_item(corpus, i))
            .collect()
    }

    /// Map each corpus category to the model's category registry.
    pub fn category_map(&self, corpus: &Corpus) -> Vec<Option<usize>> {
        match &self.relations {
            Some(r) => corpus
                .categories()
                .iter()
                .map(|c| r.graph().category_index(c))
                .collect(),
            None => vec![None; corpus.categories().len()],
        }
    }

    /// Relation between two categories of the model's registry.
    pub fn relation(&self, cx: Option<usize>, cy: Option<usize>) -> Option<RelationRef> {
        let table = self.relations.as_ref()?;
        table.graph().relation(cx?, cy?)
    }

    /// Ranking score of `y` as a tail for head `x`; higher is more compatible.
    /// `Ok(None)` when the model needs a relation that does not exist.
    pub fn score(
        &self,
        x: &[f64],
        y: &[f64],
        relation: Option<RelationRef>,
        part: ScorePart,
    ) -> Result<Option<f64>> {
        if part != ScorePart::All && self.kind() != ModelKind::TransNfcm {
            return Err(Error::Invalid(format!(
                "score part {:?} only applies to transnfcm models",
                part.as_str()
            )));
        }
        let rel_vec = |rel: RelationRef| {
            self.relations
                .as_ref()
                .expect("relational model has a table")
                .vector(rel)
        };
        Ok(match self.kind() {
            ModelKind::TransNfcm => match relation {
                Some(rel) => Some(dist_transnfcm(x, y, &rel_vec(rel))?.score(part)),
                None => None,
            },
            ModelKind::Csn => match relation {
                Some(rel) => Some(-dist_csn(x, y, &rel_vec(rel))?),
                None => None,
            },
            ModelKind::TriNet | ModelKind::SiaNet => Some(-dist_euclid(x, y)?),
            ModelKind::Bpr => Some(score_inner(x, y)?),
        })
    }
}
