//! Interrupts training after one epoch, round-trips the checkpoint through
//! bytes and shows the resumed run ends bit-identical to an uninterrupted one.

use woad::harness::{generate_synthetic, SyntheticSpec};
use woad::{train, Checkpoint, TrainConfig, Trainer};

fn main() -> woad::Result<()> {
    let spec = SyntheticSpec {
        train_per_class: 3,
        test_per_class: 1,
        ..SyntheticSpec::default()
    };
    let set = generate_synthetic(&spec)?.training_set();
    let cfg = TrainConfig {
        epochs: 3,
        hidden_dim: 8,
        ..TrainConfig::default()
    };
    let full = train(&set, &cfg, None)?;

    let mut trainer = Trainer::new(&set, &cfg)?;
    trainer.run_epoch()?;
    let bytes = trainer.checkpoint().encode();
    println!(
        "checkpoint after epoch {}: {} bytes",
        trainer.epoch(),
        bytes.len()
    );

    let mut resumed = Trainer::resume(&set, Checkpoint::decode(&bytes, "in-memory")?)?;
    while resumed.epoch() < cfg.epochs as u64 {
        resumed.run_epoch()?;
    }
    let a = hex::encode(full.final_checkpoint.hash());
    let b = hex::encode(resumed.checkpoint().hash());
    println!(
        "uninterrupted {a}\nresumed       {b}\nidentical: {}",
        a == b
    );
    Ok(())
}
