use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;
use crate::numerics::param::ParameterSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// `false`: L2 term added to the gradient (coupled). `true`: AdamW-style
    /// shrinkage applied to the parameter directly.
    pub decoupled_weight_decay: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 5e-4,
            decoupled_weight_decay: false,
        }
    }
}

/// First/second moment estimates, one pair per parameter in set order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<DenseMatrix>,
    pub second_moment: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new<P: ParameterSet + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<_> = params
            .parameters()
            .iter()
            .map(|p| p.value.shape())
            .collect();
        Self {
            config,
            step: 0,
            first_moment: shapes
                .iter()
                .map(|&(r, c)| DenseMatrix::zeros(r, c))
                .collect(),
            second_moment: shapes
                .iter()
                .map(|&(r, c)| DenseMatrix::zeros(r, c))
                .collect(),
        }
    }
}

/// One bias-corrected Adam update. Gradients are read, never cleared.
///
/// Every gradient is validated before any parameter moves, so a non-finite
/// gradient leaves both the parameters and the optimizer state untouched.
pub fn adam_step<P: ParameterSet + ?Sized>(params: &mut P, state: &mut AdamState) -> Result<()> {
    let mut params = params.parameters_mut();
    if params.len() != state.first_moment.len() {
        return Err(Error::domain(format!(
            "optimizer tracks {} parameters, got {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.first_moment) {
        if p.value.shape() != m.shape() {
            return Err(Error::domain(format!(
                "parameter `{}` changed shape",
                p.name
            )));
        }
        if !p.grad.is_finite() {
            return Err(Error::NonFiniteGradient {
                name: p.name.clone(),
            });
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let value = p.value.as_mut_slice();
        let grad = p.grad.as_slice();
        let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
        for i in 0..value.len() {
            let mut g = grad[i];
            if !cfg.decoupled_weight_decay {
                g += cfg.weight_decay * value[i];
            }
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            if cfg.decoupled_weight_decay {
                value[i] -= cfg.learning_rate * cfg.weight_decay * value[i];
            }
            value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::param::Parameter;

    fn scalar(v: f64, g: f64) -> Parameter {
        let mut p = Parameter::new("theta", DenseMatrix::from_vec(1, 1, vec![v]).unwrap());
        p.grad.as_mut_slice()[0] = g;
        p
    }

    fn no_decay(lr: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            weight_decay: 0.0,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut params = vec![
            Parameter::new(
                "a",
                DenseMatrix::from_fn(2, 3, |i, j| i as f64 - j as f64 * 0.3),
            ),
            Parameter::new("b", DenseMatrix::from_fn(1, 4, |_, j| j as f64)),
        ];
        let before = params.clone();
        let mut state = AdamState::new(no_decay(1e-2), &params);
        for _ in 0..5 {
            adam_step(&mut params, &mut state).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0, 0.3);
        let mut state = AdamState::new(no_decay(1e-4), &p);
        adam_step(&mut p, &mut state).unwrap();
        let theta = p.value.as_slice()[0];
        assert!((theta + 1e-4).abs() < 1e-11, "theta = {theta}");
    }

    #[test]
    fn repeated_gradient_does_not_grow_step() {
        let mut p = scalar(0.5, -0.7);
        let mut state = AdamState::new(no_decay(1e-3), &p);
        adam_step(&mut p, &mut state).unwrap();
        let after1 = p.value.as_slice()[0];
        adam_step(&mut p, &mut state).unwrap();
        let after2 = p.value.as_slice()[0];
        let (d1, d2) = ((after1 - 0.5).abs(), (after2 - after1).abs());
        assert!(d2 <= d1 + 1e-9, "{d1} {d2}");
    }

    #[test]
    fn coupled_and_decoupled_decay_differ() {
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut coupled = scalar(2.0, 0.0);
        let mut state = AdamState::new(cfg, &coupled);
        adam_step(&mut coupled, &mut state).unwrap();
        // coupled: effective gradient 0.2, normalized step = lr
        assert!((coupled.value.as_slice()[0] - (2.0 - 1e-2)).abs() < 1e-9);

        let mut decoupled = scalar(2.0, 0.0);
        let mut state = AdamState::new(
            AdamConfig {
                decoupled_weight_decay: true,
                ..cfg
            },
            &decoupled,
        );
        adam_step(&mut decoupled, &mut state).unwrap();
        assert!((decoupled.value.as_slice()[0] - (2.0 - 1e-2 * 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_aborts_without_mutation() {
        let mut params = vec![scalar(1.0, 0.1), scalar(2.0, f64::NAN)];
        params[1].name = "bad".into();
        let mut state = AdamState::new(no_decay(1e-2), &params);
        let before = params[0].value.clone();
        match adam_step(&mut params, &mut state) {
            Err(Error::NonFiniteGradient { name }) => assert_eq!(name, "bad"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(params[0].value, before);
        assert_eq!(state.step, 0);
    }
}
