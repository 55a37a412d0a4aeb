//! Checks every analytic gradient against finite differences on random
//! small instances.

use woad::gradients::gradient_suite;

fn main() -> woad::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(10);
    for r in gradient_suite(trials, 0)? {
        let worst = r
            .worst
            .as_ref()
            .map(|(name, k, trial)| format!("{name}[{k}] in trial {trial}"))
            .unwrap_or_default();
        println!(
            "{:<12} {:>7} coords  max rel error {:.2e}  {}  {worst}",
            r.loss,
            r.coordinates,
            r.max_rel_error,
            if r.passes() { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
