//! Trains on video-level labels only and compares the held-out scores
//! with the constant-prior baseline.

use std::time::Instant;

use woad::harness::reference::{
    evaluate_model, evaluate_prior_baseline, synthetic_reference_config,
};
use woad::harness::{generate_synthetic, SyntheticSpec};
use woad::{train, StreamConfig, TrainConfig};

fn main() -> woad::Result<()> {
    env_logger::init();
    let corpus = generate_synthetic(&SyntheticSpec::default())?;
    let set = corpus.training_set();
    let eval = corpus.eval_set();
    let cfg = TrainConfig {
        epochs: 120,
        ..synthetic_reference_config()
    };

    let started = Instant::now();
    let outcome = train(&set, &cfg, None)?;
    let first = &outcome.metrics[0];
    let last = outcome.metrics.last().expect("at least one iteration");
    println!(
        "{} iterations in {:.1}s, {} pseudo-label refreshes",
        outcome.metrics.len(),
        started.elapsed().as_secs_f64(),
        outcome.refresh_log.len()
    );
    println!(
        "loss  first {:.4} (mil {:.4})  last {:.4} (mil {:.4})",
        first.loss.total, first.loss.mil, last.loss.total, last.loss.mil
    );

    let report = evaluate_model(&outcome.model, &eval, StreamConfig::from(&cfg))?;
    let baseline = evaluate_prior_baseline(&set, &eval)?;
    for (name, r) in [("weak", &report), ("prior", &baseline)] {
        println!(
            "{name:>5}: F-AP {:.4}  P-AP@1s {:.4}  P-AP@5s {:.4}",
            r.mean_frame_ap,
            r.mean_point_ap(1.0).unwrap_or(f64::NAN),
            r.mean_point_ap(5.0).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
