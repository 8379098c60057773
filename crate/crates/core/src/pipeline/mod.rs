//! The dual-stream online engine and its two-stage training.

pub mod engine;
pub mod model;
pub mod train;

pub use engine::{PhasePrediction, StreamState};
pub use model::{CacheModel, DacatModel, DacatParams};
pub use train::{
    evaluate_accuracy, run_inference, train_cache_encoder, train_dacat, train_dacat_with_holdout,
    EpochLog, InferenceLog, TrainOptions, TrainReport,
};
