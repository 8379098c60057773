//! Online phase recognition with a dual-stream adaptive clip-aware model.
//!
//! A frame-wise branch encodes the current observation and runs it through
//! an LSTM whose state is carried for the whole video. A second branch keeps
//! a cache of pooled features for every past frame, reads out the cache
//! suffix most correlated with the current frame (max clip-response
//! read-out, see [`maxr`]) and mixes that clip into the current feature with
//! cross-attention before its own LSTM. The two branches' logits are fused
//! into the final per-frame prediction.

pub mod cache;
pub mod data;
pub mod error;
pub mod eval;
pub mod maxr;
pub mod neural;
pub mod pipeline;
pub mod types;

pub use cache::{Clip, FeatureCache};
pub use error::{DacatError, Result};
pub use maxr::ClipSelection;
pub use pipeline::{DacatModel, PhasePrediction, StreamState};
pub use types::{
    Branches, FeatureVector, FusionMode, Interaction, ModelConfig, PhaseTimeline, Readout, Real,
};
