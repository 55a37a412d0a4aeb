//! Weakly supervised online action detection on pre-extracted frame
//! features.
//!
//! A temporal proposal generator learns frame-level class scores from
//! video-level labels and mines pseudo segment labels from them; an online
//! recognizer (LSTM, windowed max pooling, action and start heads) is trained
//! on those labels, or on ground-truth segments where available, and runs
//! causally at inference to emit per-frame probabilities and action-start
//! events.

pub mod error;
pub mod evaluation;
pub mod gradients;
pub mod harness;
pub mod labels;
pub mod model;
pub mod numerics;
pub mod oar;
pub mod streaming;
pub mod tpg;
pub mod training;

pub use error::{Error, Result};
pub use evaluation::{
    evaluate, frame_ap, mean_ap, point_ap, ApMode, EvaluationReport, GtSegment, VideoGroundTruth,
};
pub use labels::{LabelTrack, Provenance, BACKGROUND};
pub use model::{ModelDims, WoadModel};
pub use streaming::{run_stream, DetectionLog, StartEvent, StreamConfig, StreamSession};
pub use training::{
    train, Checkpoint, TrainConfig, TrainOutcome, Trainer, TrainingSet, TrainingVideo,
};
