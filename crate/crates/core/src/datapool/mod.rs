//! Pools of frozen embeddings with class similarities, their on-disk format,
//! and the synthetic benchmark generator.

mod io;
mod pool;
mod synth;

pub use io::{load_pool, read_manifest, save_pool, sha256_hex, PoolFiles, PoolManifest, DTYPE_TAG, FORMAT_VERSION, MANIFEST_FILE};
pub use pool::{compute_similarities, prototype_from_descriptions, EmbeddingPool, SIMILARITY_SLACK, UNIT_NORM_TOL};
pub use synth::{generate_synthetic_pool, SynthConfig, SyntheticPools};
