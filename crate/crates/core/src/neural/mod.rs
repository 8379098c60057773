//! Small neural operators with hand-written backward passes.
//!
//! Every differentiable operator returns whatever it needs for its backward
//! pass alongside its output; backward functions accumulate parameter
//! gradients into a gradient buffer of the same type as the parameters.

pub mod adamw;
pub mod attention;
pub mod checkpoint;
pub mod linear;
pub mod lstm;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use attention::{softmax, AttentionTrace, CrossAttention};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use linear::{Encoder, Linear};
pub use lstm::{Lstm, LstmState, LstmTrace};
pub use ops::{argmax, cross_entropy, mean_pool_backward, mean_pool_temporal};
pub use params::{ParamSet, Parameters};
pub use tensor::Tensor;
