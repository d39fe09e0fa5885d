//! The network: multi-stream video encoder, text encoder, similarity
//! scoring, and the open-ended variants.

mod checkpoint;
mod config;
mod encoder;
mod init;
mod scoring;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, ATMC_MAGIC, ATMC_VERSION};
pub use config::ModelConfig;
pub use encoder::ModelForward;
pub use init::init_params;
pub use scoring::{argmax_scores, score_record, ScoredAnswers};
pub use vocab::Vocab;
