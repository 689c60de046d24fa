//! Gaussian-mixture VAE: model, objective, EM-alternating training, and
//! file formats.

mod elbo;
mod eval;
mod export;
mod gmm;
mod model;
mod train;

pub use elbo::{elbo, ElboTerms, Objective};
pub use eval::{best_mapping, cluster_assign, ClusterReport};
pub use export::{
    digest, write_embeddings, write_history, Checkpoint, EmbeddingRow, EmbeddingTable, CHECKPOINT_FORMAT,
};
pub use gmm::{EmInputs, GmmParams, Responsibilities, EMPTY_CLUSTER_MASS};
pub use model::{standard_normal, GmVae, LatentBatch, ModelConfig};
pub use train::{init_model, train, train_with, EpochRecord, History, TrainConfig};
