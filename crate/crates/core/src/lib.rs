//! Online clustering of multilingual news streams into stories.
//!
//! Documents arrive as dense embeddings of their title and paragraphs. Each
//! one is ranked against the live clusters by a linear rank model, accepted
//! into the best cluster or used to open a new one by an acceptance model,
//! and the receiving cluster is then offered to a merge model that can fold
//! other clusters into it.
//!
//! ```
//! use storyline_core::{
//!     DayTimestamp, DenseVec, DocRepr, Engine, EngineConfig, LinearModel, ModelKind, ModelSet,
//! };
//!
//! let one_hot = |i: usize| {
//!     let mut w = vec![0.0; 8];
//!     w[i] = 1.0;
//!     w
//! };
//! let models = ModelSet {
//!     rank: LinearModel::new(ModelKind::Rank, one_hot(0), 0.0)?,
//!     accept: LinearModel::new(ModelKind::Accept, one_hot(0), -0.5)?,
//!     merge: None,
//! };
//! let mut engine = Engine::new(EngineConfig::default(), models)?;
//! let v = DenseVec::new(vec![1.0, 1.0])?;
//! let d = |id: &str| DocRepr::new(id, v.clone(), v.clone(), v.clone(), DayTimestamp(0));
//! assert!(engine.process_document(&d("a")?)?.created);
//! assert!(!engine.process_document(&d("b")?)?.created);
//! # Ok::<(), storyline_core::Error>(())
//! ```

pub mod corpus;
pub mod domain;
pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod pool;
pub mod trainer;

pub use domain::{
    centroid_update, Cluster, ClusterId, DayTimestamp, DenseVec, DocRepr, DocumentInput, FeatureVec, LinearModel,
    ModelKind, DEFAULT_EMBEDDING_DIM,
};
pub use engine::{resolve_assignments, AssignmentRecord, Engine, EngineConfig, ModelSet};
pub use error::{Error, Result};
pub use eval::{bcubed, evaluate, standard_f1, EvalReport, GoldStandard, Prf, StoryRelation};
pub use features::{FeatureSet, SizeLimits, TemporalParams};
pub use models::{LabeledExample, RankPair, TrainConfig};
pub use pool::{ClusterRecord, MergeEvent, Pool, PoolConfig};
pub use trainer::{train_all, FeatureConfig, TrainReport, Trained, TrainerConfig};
