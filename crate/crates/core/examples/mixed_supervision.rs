//! Sweeps the fraction of training videos with segment annotations, from
//! weak labels only to fully annotated.

use woad::harness::reference::{evaluate_model, synthetic_reference_config};
use woad::harness::{generate_synthetic, SyntheticSpec};
use woad::{train, StreamConfig, TrainConfig};

fn main() -> woad::Result<()> {
    let corpus = generate_synthetic(&SyntheticSpec::default())?;
    let set = corpus.training_set();
    let eval = corpus.eval_set();
    println!("strong   F-AP    P-AP@1s");
    for strong_fraction in [0.0, 0.25, 0.5, 1.0] {
        let cfg = TrainConfig {
            epochs: 100,
            strong_fraction,
            ..synthetic_reference_config()
        };
        let model = train(&set, &cfg, None)?.model;
        let report = evaluate_model(&model, &eval, StreamConfig::from(&cfg))?;
        println!(
            "{:>5.0}%  {:.4}  {:.4}",
            100.0 * strong_fraction,
            report.mean_frame_ap,
            report.mean_point_ap(1.0).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
