//! Central finite-difference verification of hand-derived gradients.

use crate::error::{Error, Result};
use crate::numerics::param::ParameterSet;

/// Largest step tried; the ladder halves from here.
pub const DEFAULT_FD_STEP: f64 = 1e-3;
const LADDER: usize = 11;
/// Agreement required between neighbouring steps, relative to the estimate.
const AGREEMENT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Relative error used for every gradient comparison.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Five-point central difference of `f` around offset 0.
fn five_point<F: FnMut(f64) -> f64>(f: &mut F, h: f64) -> f64 {
    // Paired differences cancel exactly when the function is flat.
    let near = f(h) - f(-h);
    let far = f(2.0 * h) - f(-2.0 * h);
    (8.0 * near - far) / (12.0 * h)
}

/// Derivative of `f` at offset 0 from a halving ladder of five-point central
/// differences starting at `step`. Returns the estimate at the largest step
/// whose two smaller neighbours agree with it, so smooth coordinates use a
/// step large enough to keep round-off in `f` negligible while a nearby kink
/// (ReLU, max-pool or top-k switch) pushes the choice down past it.
/// Falls back to the smallest step when no run of three agrees.
pub fn stable_derivative<F: FnMut(f64) -> f64>(mut f: F, step: f64) -> f64 {
    let centre = f(0.0).abs();
    let mut h = step;
    let mut ladder = vec![five_point(&mut f, h)];
    let agree = |a: f64, b: f64, h: f64| {
        (a - b).abs() <= AGREEMENT * (a.abs() + b.abs()) + 64.0 * f64::EPSILON * centre / h
    };
    for _ in 1..LADDER {
        h /= 2.0;
        ladder.push(five_point(&mut f, h));
        if let [.., a, b, c] = ladder[..] {
            if agree(a, b, 2.0 * h) && agree(b, c, h) {
                return a;
            }
        }
    }
    ladder[ladder.len() - 1]
}

/// Compares the gradients already stored in `params` against extrapolated
/// central differences of `loss` (see [`stable_derivative`]). Every
/// parameter value is restored afterwards.
pub fn grad_check<P, F>(params: &mut P, mut loss: F, step: f64) -> Result<GradCheckReport>
where
    P: ParameterSet + ?Sized,
    F: FnMut(&P) -> f64,
{
    let first = loss(params);
    let second = loss(params);
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let analytic: Vec<(String, Vec<f64>)> = params
        .parameters()
        .iter()
        .map(|p| (p.name.clone(), p.grad.as_slice().to_vec()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (k, &g) in grads.iter().enumerate() {
            let original = params.parameters()[pi].value.as_slice()[k];
            let numeric = stable_derivative(
                |offset| {
                    params.parameters_mut()[pi].value.as_mut_slice()[k] = original + offset;
                    loss(params)
                },
                step,
            );
            params.parameters_mut()[pi].value.as_mut_slice()[k] = original;
            let err = relative_error(g, numeric);
            if !err.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("finite difference for `{name}`[{k}]"),
                });
            }
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), k));
            }
        }
    }
    Ok(report)
}
