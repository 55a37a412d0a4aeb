//! Feeds one held-out video frame by frame through a streaming session and
//! prints every action-start event as it is emitted.

use woad::harness::reference::synthetic_reference_config;
use woad::harness::{generate_synthetic, Split, SyntheticSpec};
use woad::{train, StreamConfig, StreamSession, TrainConfig};

fn main() -> woad::Result<()> {
    let spec = SyntheticSpec::default();
    let corpus = generate_synthetic(&spec)?;
    let cfg = TrainConfig {
        epochs: 150,
        strong_fraction: 1.0,
        ..synthetic_reference_config()
    };
    let model = train(&corpus.training_set(), &cfg, None)?.model;

    let video = corpus
        .videos
        .iter()
        .find(|v| v.split == Split::Test)
        .expect("a test video");
    let truth: Vec<String> = video
        .segments(spec.fps)
        .iter()
        .map(|s| format!("class {} at {:.2}s", s.class, s.start_s))
        .collect();
    println!(
        "{}: {} frames, true starts: {}",
        video.video_id,
        video.num_frames(),
        truth.join(", ")
    );

    let mut session = StreamSession::new(&model, spec.fps, StreamConfig::from(&cfg))?;
    let mut switches = 0;
    for t in 0..video.num_frames() {
        let previous = session.previous_class();
        let step = session.step(&model, video.features.row(t))?;
        switches += usize::from(step.predicted != previous);
        if let Some(e) = step.event {
            println!(
                "  frame {:>3} ({:>5.2}s): start of class {} with confidence {:.3}",
                e.frame, e.time_s, e.class, e.confidence
            );
        }
    }
    println!(
        "{} frames processed, {switches} predicted-class changes",
        session.frame()
    );
    Ok(())
}
