//! Ingestion, the shared trunk, synthetic corpora, configuration and the CLI.

pub mod cli;
pub mod config;
pub mod features;
pub mod manifest;
pub mod reference;
pub mod synthetic;
pub mod trunk;

pub use config::{parse_key_values, parse_override, KeyValue};
pub use features::{
    decode_features, encode_features, load_features, write_features, FEATURE_MAGIC,
};
pub use manifest::{segment_frames, CorpusManifest, EvalVideo, ManifestEntry, Split};
pub use reference::{evaluate_model, evaluate_prior_baseline, synthetic_reference_config};
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticSpec, SyntheticVideo};
pub use trunk::{trunk_backward, trunk_forward, trunk_forward_frame, TrunkForward, TrunkParams};
