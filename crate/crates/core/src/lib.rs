//! Translation-based compatibility modeling.
//!
//! Items from labeled categories are embedded by per-modality encoders. Each
//! pair of complementary categories owns a relation vector `r`, and a head
//! item `x` is compatible with a tail item `y` when `x + r ≈ y`. Training
//! minimizes a margin ranking loss over corrupted tuples; evaluation ranks a
//! gold tail against sampled negatives (AUC, Hit@K).
//!
//! Category-unaware baselines (triplet, siamese, BPR) and a masked
//! conditional-similarity baseline share the sampler, optimizer and
//! evaluator, so only their score and loss differ.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod relations;
pub mod rng;
pub mod sampling;
pub mod scoring;
pub mod trainer;

pub use corpus::{load_corpus, Corpus, Split};
pub use error::{Error, Result};
pub use evaluator::{evaluate, EvalConfig, EvalReport};
pub use model::{Model, ModelKind};
pub use relations::{build_relation_table, RelationTable};
pub use sampling::EvalMode;
pub use scoring::ScorePart;
pub use trainer::{load_checkpoint, save_checkpoint, train, TrainConfig};
