//! Retrains with components switched off and compares against the full
//! model on the same corpus and seed.

use woad::harness::reference::{evaluate_model, synthetic_reference_config};
use woad::harness::{generate_synthetic, SyntheticSpec};
use woad::training::Ablations;
use woad::{train, StreamConfig, TrainConfig};

fn main() -> woad::Result<()> {
    let corpus = generate_synthetic(&SyntheticSpec::default())?;
    let set = corpus.training_set();
    let eval = corpus.eval_set();
    let variants = [
        ("full", Ablations::default()),
        (
            "no TPG loss",
            Ablations {
                no_tpg_loss: true,
                ..Ablations::default()
            },
        ),
        (
            "no RNN",
            Ablations {
                no_rnn: true,
                ..Ablations::default()
            },
        ),
        (
            "no pooling",
            Ablations {
                no_temporal_pool: true,
                ..Ablations::default()
            },
        ),
        (
            "no start head",
            Ablations {
                no_start_head: true,
                ..Ablations::default()
            },
        ),
    ];
    println!("{:<14} F-AP    P-AP@1s", "variant");
    for (name, ablations) in variants {
        let cfg = TrainConfig {
            epochs: 100,
            strong_fraction: 0.5,
            ablations,
            ..synthetic_reference_config()
        };
        let model = train(&set, &cfg, None)?.model;
        let report = evaluate_model(&model, &eval, StreamConfig::from(&cfg))?;
        println!(
            "{name:<14} {:.4}  {:.4}",
            report.mean_frame_ap,
            report.mean_point_ap(1.0).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
