//! The shared rectified FC layer feeding both the proposal generator and the
//! online recognizer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;
use crate::numerics::ops::relu_grad;
use crate::numerics::param::Parameter;

#[derive(Clone, Debug, PartialEq)]
pub struct TrunkParams {
    /// `D_in×D`
    pub weight: Parameter,
    /// `1×D`
    pub bias: Parameter,
}

impl TrunkParams {
    pub fn zeros(input_dim: usize, feature_dim: usize) -> Self {
        Self {
            weight: Parameter::zeros("trunk.weight", input_dim, feature_dim),
            bias: Parameter::zeros("trunk.bias", 1, feature_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, feature_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, feature_dim);
        let bound = 1.0 / (input_dim as f64).sqrt();
        for v in p.weight.value.as_mut_slice() {
            *v = rng.random_range(-bound..bound);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.value.cols()
    }
}

/// Trunk activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct TrunkForward {
    pub pre_activation: DenseMatrix,
    pub features: DenseMatrix,
}

/// `F = max(0, X·W + b)`.
pub fn trunk_forward(raw: &DenseMatrix, trunk: &TrunkParams) -> Result<TrunkForward> {
    if raw.cols() != trunk.input_dim() {
        return Err(Error::domain(format!(
            "trunk expects {}-dim features, got {}",
            trunk.input_dim(),
            raw.cols()
        )));
    }
    let mut pre = raw.matmul(&trunk.weight.value)?;
    let bias = trunk.bias.value.as_slice();
    for r in 0..pre.rows() {
        for (v, b) in pre.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
    let features = DenseMatrix::from_fn(pre.rows(), pre.cols(), |r, c| pre[(r, c)].max(0.0));
    Ok(TrunkForward {
        pre_activation: pre,
        features,
    })
}

/// Single-frame trunk used by streaming inference.
pub fn trunk_forward_frame(raw: &[f64], trunk: &TrunkParams) -> Result<Vec<f64>> {
    if raw.len() != trunk.input_dim() {
        return Err(Error::domain(format!(
            "trunk expects {}-dim features, got {}",
            trunk.input_dim(),
            raw.len()
        )));
    }
    let mut out = trunk.bias.value.as_slice().to_vec();
    crate::numerics::matrix::vec_mat_acc(raw, &trunk.weight.value, &mut out);
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(out)
}

pub fn trunk_backward(
    raw: &DenseMatrix,
    fwd: &TrunkForward,
    grad_features: &DenseMatrix,
    trunk: &mut TrunkParams,
) -> Result<()> {
    let mut grad_pre = grad_features.clone();
    for (g, z) in grad_pre
        .as_mut_slice()
        .iter_mut()
        .zip(fwd.pre_activation.as_slice())
    {
        *g *= relu_grad(*z);
    }
    raw.add_transpose_matmul_into(&grad_pre, &mut trunk.weight.grad)?;
    let bias = trunk.bias.grad.as_mut_slice();
    for r in 0..grad_pre.rows() {
        for (b, g) in bias.iter_mut().zip(grad_pre.row(r)) {
            *b += g;
        }
    }
    Ok(())
}
