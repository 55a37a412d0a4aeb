//! Recurrent cell of the online recognizer and its feed-forward replacement.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::matrix::{mat_vec_acc, outer_acc, vec_mat_acc};
use crate::numerics::ops::{relu, relu_grad, sigmoid};
use crate::numerics::param::Parameter;

/// Single-layer LSTM. Gate blocks along the `4H` axis are ordered
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_input: Parameter,
    pub w_hidden: Parameter,
    pub bias: Parameter,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_input: Parameter::zeros("oar.lstm.w_input", input_dim, 4 * hidden_dim),
            w_hidden: Parameter::zeros("oar.lstm.w_hidden", hidden_dim, 4 * hidden_dim),
            bias: Parameter::zeros("oar.lstm.bias", 1, 4 * hidden_dim),
        }
    }

    /// Weights uniform in `±1/√H`, zero biases except the forget gate at +1.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        for w in [&mut p.w_input, &mut p.w_hidden] {
            for v in w.value.as_mut_slice() {
                *v = rng.random_range(-bound..bound);
            }
        }
        for v in &mut p.bias.value.as_mut_slice()[hidden_dim..2 * hidden_dim] {
            *v = 1.0;
        }
        p
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.value.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.value.rows()
    }
}

/// Two rectified fully connected layers used in place of the LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardParams {
    pub w1: Parameter,
    pub b1: Parameter,
    pub w2: Parameter,
    pub b2: Parameter,
}

impl FeedForwardParams {
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut w1 = Parameter::zeros("oar.ff.w1", input_dim, hidden_dim);
        let mut w2 = Parameter::zeros("oar.ff.w2", hidden_dim, hidden_dim);
        for (w, fan_in) in [(&mut w1, input_dim), (&mut w2, hidden_dim)] {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in w.value.as_mut_slice() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Self {
            w1,
            b1: Parameter::zeros("oar.ff.b1", 1, hidden_dim),
            w2,
            b2: Parameter::zeros("oar.ff.b2", 1, hidden_dim),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RecurrentCell {
    Lstm(LstmParams),
    FeedForward(FeedForwardParams),
}

impl RecurrentCell {
    pub fn hidden_dim(&self) -> usize {
        match self {
            RecurrentCell::Lstm(p) => p.hidden_dim(),
            RecurrentCell::FeedForward(p) => p.w2.value.cols(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RecurrentCell::Lstm(p) => p.input_dim(),
            RecurrentCell::FeedForward(p) => p.w1.value.rows(),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        match self {
            RecurrentCell::Lstm(p) => vec![&p.w_input, &p.w_hidden, &p.bias],
            RecurrentCell::FeedForward(p) => vec![&p.w1, &p.b1, &p.w2, &p.b2],
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            RecurrentCell::Lstm(p) => vec![&mut p.w_input, &mut p.w_hidden, &mut p.bias],
            RecurrentCell::FeedForward(p) => vec![&mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2],
        }
    }
}

/// Everything the backward pass of one step needs.
#[derive(Clone, Debug)]
pub enum StepCache {
    Lstm {
        input: Vec<f64>,
        h_prev: Vec<f64>,
        c_prev: Vec<f64>,
        /// Post-activation gates `[i | f | g | o]`.
        gates: Vec<f64>,
        c: Vec<f64>,
    },
    FeedForward {
        input: Vec<f64>,
        pre1: Vec<f64>,
        pre2: Vec<f64>,
    },
}

/// One cell update. Returns the new hidden and cell vectors.
pub fn cell_forward(
    cell: &RecurrentCell,
    input: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, StepCache)> {
    if input.len() != cell.input_dim() {
        return Err(Error::domain(format!(
            "cell expects {}-dim input, got {}",
            cell.input_dim(),
            input.len()
        )));
    }
    let h_dim = cell.hidden_dim();
    match cell {
        RecurrentCell::Lstm(p) => {
            let mut gates = p.bias.value.as_slice().to_vec();
            vec_mat_acc(input, &p.w_input.value, &mut gates);
            vec_mat_acc(h_prev, &p.w_hidden.value, &mut gates);
            for (k, z) in gates.iter_mut().enumerate() {
                *z = if (2 * h_dim..3 * h_dim).contains(&k) {
                    z.tanh()
                } else {
                    sigmoid(*z)
                };
            }
            let mut c = vec![0.0; h_dim];
            let mut h = vec![0.0; h_dim];
            for j in 0..h_dim {
                let (i, f, g, o) = (
                    gates[j],
                    gates[h_dim + j],
                    gates[2 * h_dim + j],
                    gates[3 * h_dim + j],
                );
                c[j] = f * c_prev[j] + i * g;
                h[j] = o * c[j].tanh();
            }
            if !h.iter().chain(&c).all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "LSTM state".into(),
                });
            }
            let cache = StepCache::Lstm {
                input: input.to_vec(),
                h_prev: h_prev.to_vec(),
                c_prev: c_prev.to_vec(),
                gates,
                c: c.clone(),
            };
            Ok((h, c, cache))
        }
        RecurrentCell::FeedForward(p) => {
            let mut pre1 = p.b1.value.as_slice().to_vec();
            vec_mat_acc(input, &p.w1.value, &mut pre1);
            let h1: Vec<f64> = pre1.iter().map(|&v| relu(v)).collect();
            let mut pre2 = p.b2.value.as_slice().to_vec();
            vec_mat_acc(&h1, &p.w2.value, &mut pre2);
            let h: Vec<f64> = pre2.iter().map(|&v| relu(v)).collect();
            if !h.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "feed-forward hidden".into(),
                });
            }
            let cache = StepCache::FeedForward {
                input: input.to_vec(),
                pre1,
                pre2,
            };
            Ok((h, vec![0.0; h_dim], cache))
        }
    }
}

/// Backward of [`cell_forward`]. Accumulates parameter gradients and returns
/// `(∂L/∂input, ∂L/∂h_prev, ∂L/∂c_prev)`.
pub fn cell_backward(
    cell: &mut RecurrentCell,
    cache: &StepCache,
    grad_h: &[f64],
    grad_c: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h_dim = cell.hidden_dim();
    match (cell, cache) {
        (
            RecurrentCell::Lstm(p),
            StepCache::Lstm {
                input,
                h_prev,
                c_prev,
                gates,
                c,
            },
        ) => {
            let mut grad_pre = vec![0.0; 4 * h_dim];
            let mut grad_c_prev = vec![0.0; h_dim];
            for j in 0..h_dim {
                let (i, f, g, o) = (
                    gates[j],
                    gates[h_dim + j],
                    gates[2 * h_dim + j],
                    gates[3 * h_dim + j],
                );
                let tc = c[j].tanh();
                let dc = grad_c[j] + grad_h[j] * o * (1.0 - tc * tc);
                let (di, df, dg, d_o) = (dc * g, dc * c_prev[j], dc * i, grad_h[j] * tc);
                grad_c_prev[j] = dc * f;
                grad_pre[j] = di * i * (1.0 - i);
                grad_pre[h_dim + j] = df * f * (1.0 - f);
                grad_pre[2 * h_dim + j] = dg * (1.0 - g * g);
                grad_pre[3 * h_dim + j] = d_o * o * (1.0 - o);
            }
            outer_acc(input, &grad_pre, &mut p.w_input.grad);
            outer_acc(h_prev, &grad_pre, &mut p.w_hidden.grad);
            for (b, g) in p.bias.grad.as_mut_slice().iter_mut().zip(&grad_pre) {
                *b += g;
            }
            let mut grad_input = vec![0.0; input.len()];
            mat_vec_acc(&p.w_input.value, &grad_pre, &mut grad_input);
            let mut grad_h_prev = vec![0.0; h_dim];
            mat_vec_acc(&p.w_hidden.value, &grad_pre, &mut grad_h_prev);
            (grad_input, grad_h_prev, grad_c_prev)
        }
        (RecurrentCell::FeedForward(p), StepCache::FeedForward { input, pre1, pre2 }) => {
            let d2: Vec<f64> = grad_h
                .iter()
                .zip(pre2)
                .map(|(g, z)| g * relu_grad(*z))
                .collect();
            let h1: Vec<f64> = pre1.iter().map(|&v| relu(v)).collect();
            outer_acc(&h1, &d2, &mut p.w2.grad);
            for (b, g) in p.b2.grad.as_mut_slice().iter_mut().zip(&d2) {
                *b += g;
            }
            let mut dh1 = vec![0.0; h_dim];
            mat_vec_acc(&p.w2.value, &d2, &mut dh1);
            let d1: Vec<f64> = dh1
                .iter()
                .zip(pre1)
                .map(|(g, z)| g * relu_grad(*z))
                .collect();
            outer_acc(input, &d1, &mut p.w1.grad);
            for (b, g) in p.b1.grad.as_mut_slice().iter_mut().zip(&d1) {
                *b += g;
            }
            let mut grad_input = vec![0.0; input.len()];
            mat_vec_acc(&p.w1.value, &d1, &mut grad_input);
            (grad_input, vec![0.0; h_dim], vec![0.0; h_dim])
        }
        _ => unreachable!("step cache does not match the cell variant"),
    }
}

/// Recurrent state of one stream plus the most recent hiddens for pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct OarState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Oldest first; holds at most `window + 1` hiddens.
    pub hidden_ring: VecDeque<Vec<f64>>,
    window: usize,
}

impl OarState {
    pub fn new(hidden_dim: usize, window: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
            hidden_ring: VecDeque::with_capacity(window + 1),
            window,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Pushes `h`, evicting the oldest hidden beyond `window + 1`. The evicted
    /// buffer is reused so steady-state streaming does not allocate.
    fn push_hidden(&mut self, h: &[f64]) {
        let slot = if self.hidden_ring.len() == self.window + 1 {
            let mut old = self.hidden_ring.pop_front().expect("ring is full");
            old.copy_from_slice(h);
            old
        } else {
            h.to_vec()
        };
        self.hidden_ring.push_back(slot);
    }
}

/// Advances the state by one frame.
pub fn lstm_step(state: &mut OarState, input: &[f64], cell: &RecurrentCell) -> Result<StepCache> {
    let (h, c, cache) = cell_forward(cell, input, &state.h, &state.c)?;
    state.push_hidden(&h);
    state.h = h;
    state.c = c;
    Ok(cache)
}
