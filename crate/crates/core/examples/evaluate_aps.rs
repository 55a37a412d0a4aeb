//! Frame-level and point-level AP on a small scripted ranking, then the
//! full report for a briefly trained model.

use woad::evaluation::average_precision;
use woad::harness::reference::{evaluate_model, synthetic_reference_config};
use woad::harness::{generate_synthetic, SyntheticSpec};
use woad::{train, ApMode, StreamConfig, TrainConfig};

fn main() -> woad::Result<()> {
    // Two hits among five ranked items, one tie at 0.5, three relevant in total.
    let ranked = [
        (0.9, true),
        (0.7, false),
        (0.5, true),
        (0.5, false),
        (0.2, false),
    ];
    for mode in [ApMode::Uninterpolated, ApMode::ElevenPoint] {
        println!(
            "{mode:?}: AP {:.4}",
            average_precision(&ranked, 3, mode).expect("positives exist")
        );
    }

    let corpus = generate_synthetic(&SyntheticSpec::default())?;
    let cfg = TrainConfig {
        epochs: 100,
        strong_fraction: 1.0,
        ..synthetic_reference_config()
    };
    let model = train(&corpus.training_set(), &cfg, None)?.model;
    let report = evaluate_model(&model, &corpus.eval_set(), StreamConfig::from(&cfg))?;
    print!("{}", report.to_table());
    Ok(())
}
