//! Checkpoints, datasets, episodes and evaluation.

mod checkpoint;
mod dataset;
mod episode;
mod eval;
mod fixtures;
mod state;

pub use checkpoint::{
    config_digest, Checkpoint, CheckpointHeader, DType, TensorData, TensorEntry, KIND_ENGINE_STATE,
    KIND_MODEL, MAGIC, VERSION,
};
pub use dataset::{
    load_image, load_omniglot, synthetic, Dataset, ImageSet, OmniglotSplit, SyntheticSpec,
};
pub use episode::{sample_episode, Episode, EpisodeToken};
pub use eval::{
    argmax, derive_seed, episode_seed, evaluate, run_episode, wilson_interval, Engine,
    EpisodeOutcome, EvalMode, EvalReport, Predictor,
};
pub use fixtures::{random_tokens, retrieval_model};
pub use state::{float_engine_state, int_engine_state};
