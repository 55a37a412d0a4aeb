//! Online Action Recognizer: a causal recurrent cell with windowed max
//! pooling, an action head and a class-agnostic start head.

pub mod cell;
pub mod heads;
pub mod loss;

use rand::Rng;

pub use cell::{
    cell_backward, cell_forward, lstm_step, FeedForwardParams, LstmParams, OarState, RecurrentCell,
    StepCache,
};
pub use heads::{heads, temporal_pool, FrameOutput, Pooled};
pub use loss::{
    frame_loss, oar_loss, select_start_frames, start_loss, LossWithGrad, StartNormalization,
};

use crate::error::{Error, Result};
use crate::numerics::matrix::{mat_vec_acc, outer_acc, DenseMatrix};
use crate::numerics::param::Parameter;

#[derive(Clone, Debug, PartialEq)]
pub struct OarParams {
    pub cell: RecurrentCell,
    /// `H×(C+1)`
    pub w_action: Parameter,
    /// `H×2`
    pub w_start: Parameter,
}

impl OarParams {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        recurrent: bool,
        rng: &mut R,
    ) -> Self {
        let cell = if recurrent {
            RecurrentCell::Lstm(LstmParams::init(input_dim, hidden_dim, rng))
        } else {
            RecurrentCell::FeedForward(FeedForwardParams::init(input_dim, hidden_dim, rng))
        };
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut w_action = Parameter::zeros("oar.w_action", hidden_dim, num_classes + 1);
        let mut w_start = Parameter::zeros("oar.w_start", hidden_dim, 2);
        for w in [&mut w_action, &mut w_start] {
            for v in w.value.as_mut_slice() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Self {
            cell,
            w_action,
            w_start,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.cell.hidden_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.w_action.value.cols() - 1
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.cell.parameters();
        v.push(&self.w_action);
        v.push(&self.w_start);
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.cell.parameters_mut();
        v.push(&mut self.w_action);
        v.push(&mut self.w_start);
        v
    }
}

/// Forward activations of one training sequence, started from a zero state.
#[derive(Clone, Debug)]
pub struct SequenceForward {
    pub caches: Vec<StepCache>,
    pub hiddens: Vec<Vec<f64>>,
    pub pooled: Vec<Vec<f64>>,
    /// `pool_source[t][j]`: absolute frame whose hidden unit `j` won the pool at `t`.
    pub pool_source: Vec<Vec<usize>>,
    pub action_probs: DenseMatrix,
    pub start_probs: DenseMatrix,
}

/// Runs the recognizer frame by frame over `inputs` (one row per frame),
/// using the same step, pooling and head code as streaming inference.
pub fn forward_sequence(
    params: &OarParams,
    window: usize,
    inputs: &DenseMatrix,
) -> Result<SequenceForward> {
    let t_len = inputs.rows();
    let mut state = OarState::new(params.hidden_dim(), window);
    let mut out = SequenceForward {
        caches: Vec::with_capacity(t_len),
        hiddens: Vec::with_capacity(t_len),
        pooled: Vec::with_capacity(t_len),
        pool_source: Vec::with_capacity(t_len),
        action_probs: DenseMatrix::zeros(t_len, params.num_classes() + 1),
        start_probs: DenseMatrix::zeros(t_len, 2),
    };
    for t in 0..t_len {
        let cache = lstm_step(&mut state, inputs.row(t), &params.cell)?;
        let pooled = temporal_pool(&state.hidden_ring)?;
        let frame = heads(&state.h, &pooled.value, &params.w_action, &params.w_start)?;
        let oldest = t + 1 - state.hidden_ring.len();
        out.caches.push(cache);
        out.hiddens.push(state.h.clone());
        out.pool_source
            .push(pooled.argmax.iter().map(|&p| oldest + p).collect());
        out.pooled.push(pooled.value);
        out.action_probs.row_mut(t).copy_from_slice(&frame.action);
        out.start_probs.row_mut(t).copy_from_slice(&frame.start);
    }
    Ok(out)
}

/// Backpropagates head-logit gradients through the heads, the max pool
/// (argmax routing) and time. Returns `∂L/∂inputs`.
pub fn backward_sequence(
    params: &mut OarParams,
    fwd: &SequenceForward,
    grad_action_logits: &DenseMatrix,
    grad_start_logits: &DenseMatrix,
) -> Result<DenseMatrix> {
    let t_len = fwd.hiddens.len();
    if grad_action_logits.rows() != t_len || grad_start_logits.rows() != t_len {
        return Err(Error::domain(
            "logit gradients do not match the sequence length",
        ));
    }
    let h_dim = params.hidden_dim();
    let mut grad_hidden = DenseMatrix::zeros(t_len, h_dim);
    for t in 0..t_len {
        let ga = grad_action_logits.row(t);
        outer_acc(&fwd.hiddens[t], ga, &mut params.w_action.grad);
        mat_vec_acc(&params.w_action.value, ga, grad_hidden.row_mut(t));

        let gs = grad_start_logits.row(t);
        if gs.iter().any(|&g| g != 0.0) {
            outer_acc(&fwd.pooled[t], gs, &mut params.w_start.grad);
            let mut grad_pooled = vec![0.0; h_dim];
            mat_vec_acc(&params.w_start.value, gs, &mut grad_pooled);
            for (j, &g) in grad_pooled.iter().enumerate() {
                grad_hidden[(fwd.pool_source[t][j], j)] += g;
            }
        }
    }

    let input_dim = params.cell.input_dim();
    let mut grad_inputs = DenseMatrix::zeros(t_len, input_dim);
    let mut grad_h_next = vec![0.0; h_dim];
    let mut grad_c_next = vec![0.0; h_dim];
    for t in (0..t_len).rev() {
        let mut gh = grad_hidden.row(t).to_vec();
        for (g, n) in gh.iter_mut().zip(&grad_h_next) {
            *g += n;
        }
        let (gx, gh_prev, gc_prev) =
            cell_backward(&mut params.cell, &fwd.caches[t], &gh, &grad_c_next);
        grad_inputs.row_mut(t).copy_from_slice(&gx);
        grad_h_next = gh_prev;
        grad_c_next = gc_prev;
    }
    Ok(grad_inputs)
}
