//! Elementwise and vector kernels with their hand-derived backward passes.

use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, norm};

/// Lower clamp applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Numerically stabilized softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::domain("softmax of an empty vector"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Softmax over `values`, overwriting them. Callers guarantee nonempty input.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// Softmax along the time axis of one class column; the resulting vector is
/// a temporal attention over frames.
pub fn temporal_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::domain("temporal softmax over zero frames"));
    }
    softmax(scores)
}

/// Given `p = softmax(z)` and `dL/dp`, returns `dL/dz`.
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let inner = dot(probs, grad_probs);
    probs
        .iter()
        .zip(grad_probs)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either input has zero norm; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<Cosine> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "cosine similarity of vectors with lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Ok(Cosine {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Cosine {
        value: (dot(x, y) / (nx * ny)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Accumulates `upstream * ∂d(x,y)/∂x` and `upstream * ∂d(x,y)/∂y`.
/// Degenerate (zero-norm) pairs contribute nothing.
pub fn cosine_similarity_backward(
    x: &[f64],
    y: &[f64],
    upstream: f64,
    grad_x: &mut [f64],
    grad_y: &mut [f64],
) {
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 || upstream == 0.0 {
        return;
    }
    let d = dot(x, y) / (nx * ny);
    let inv = 1.0 / (nx * ny);
    let (ax, ay) = (d / (nx * nx), d / (ny * ny));
    for i in 0..x.len() {
        grad_x[i] += upstream * (y[i] * inv - ax * x[i]);
        grad_y[i] += upstream * (x[i] * inv - ay * y[i]);
    }
}

/// `−Σ_c target_c · ln(max(predicted_c, ε))`.
pub fn cross_entropy(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::domain(format!(
            "cross entropy between lengths {} and {}",
            target.len(),
            predicted.len()
        )));
    }
    Ok(target
        .iter()
        .zip(predicted)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| -t * p.max(PROB_EPS).ln())
        .sum())
}

/// Gradient of `cross_entropy(target, softmax(z))` with respect to `z`.
pub fn softmax_cross_entropy_backward(target: &[f64], probs: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    probs
        .iter()
        .zip(target)
        .map(|(p, t)| p * mass - t)
        .collect()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Subgradient of the rectifier; 0 at the kink.
#[inline]
pub fn relu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        0.0
    }
}
