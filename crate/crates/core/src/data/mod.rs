//! Synthetic phase streams and ingestion of precomputed embeddings.

pub mod io;
pub mod synth;

pub use io::{
    format_annotations, load_annotations, load_embeddings, parse_annotations, read_embeddings,
    save_annotations, save_embeddings, write_embeddings, EmbeddingMatrix,
};
pub use synth::{cluster_means, gen_dataset, gen_stream, SyntheticConfig, Video};
