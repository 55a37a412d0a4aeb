use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::matrix::vec_mat_acc;
use crate::numerics::ops::softmax_in_place;
use crate::numerics::param::Parameter;

/// Per-frame recognizer output.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    /// `C+1` class probabilities, index 0 is background.
    pub action: Vec<f64>,
    /// `[non-start, start]`.
    pub start: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    pub value: Vec<f64>,
    /// For every hidden unit, the ring position (oldest = 0) that won.
    pub argmax: Vec<usize>,
}

/// Entrywise max over the hiddens in the ring; the earliest maximal element
/// wins ties.
pub fn temporal_pool(ring: &VecDeque<Vec<f64>>) -> Result<Pooled> {
    let first = ring
        .front()
        .ok_or_else(|| Error::domain("temporal pooling over an empty window"))?;
    let mut value = first.clone();
    let mut argmax = vec![0; value.len()];
    for (pos, h) in ring.iter().enumerate().skip(1) {
        for (j, &v) in h.iter().enumerate() {
            if v > value[j] {
                value[j] = v;
                argmax[j] = pos;
            }
        }
    }
    Ok(Pooled { value, argmax })
}

/// Linear classifiers on the current hidden (actions) and the pooled hidden
/// (start).
pub fn heads(
    hidden: &[f64],
    pooled: &[f64],
    w_action: &Parameter,
    w_start: &Parameter,
) -> Result<FrameOutput> {
    if w_action.value.rows() != hidden.len() || w_start.value.rows() != pooled.len() {
        return Err(Error::domain(format!(
            "head weights {:?}/{:?} do not match hidden size {}",
            w_action.value.shape(),
            w_start.value.shape(),
            hidden.len()
        )));
    }
    let mut action = vec![0.0; w_action.value.cols()];
    vec_mat_acc(hidden, &w_action.value, &mut action);
    softmax_in_place(&mut action);
    let mut start = vec![0.0; w_start.value.cols()];
    vec_mat_acc(pooled, &w_start.value, &mut start);
    softmax_in_place(&mut start);
    Ok(FrameOutput { action, start })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;
    use proptest::prelude::*;

    fn ring(rows: &[Vec<f64>]) -> VecDeque<Vec<f64>> {
        rows.iter().cloned().collect()
    }

    #[test]
    fn pool_examples() {
        let one = temporal_pool(&ring(&[vec![0.3, -0.2]])).unwrap();
        assert_eq!(one.value, vec![0.3, -0.2]);

        let r = ring(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 2.0]]);
        let p = temporal_pool(&r).unwrap();
        assert_eq!(p.value, vec![1.0, 2.0]);
        assert_eq!(p.argmax, vec![0, 2]);

        let same = temporal_pool(&ring(&[vec![0.5, 0.5], vec![0.5, 0.5]])).unwrap();
        assert_eq!(same.value, vec![0.5, 0.5]);
        assert_eq!(same.argmax, vec![0, 0]);

        assert!(temporal_pool(&VecDeque::new()).is_err());
    }

    #[test]
    fn head_examples() {
        let h = [0.4, -1.3];
        let wa = Parameter::zeros("wa", 2, 3);
        let ws = Parameter::zeros("ws", 2, 2);
        let out = heads(&h, &h, &wa, &ws).unwrap();
        for &p in &out.action {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(out.start, vec![0.5, 0.5]);

        let ws = Parameter::new(
            "ws",
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
        );
        let out = heads(&h, &[1.0, 0.0], &wa, &ws).unwrap();
        // logits [1, 2] -> [1/(1+e), e/(1+e)]
        let e = 1f64.exp();
        assert!((out.start[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((out.start[1] - e / (1.0 + e)).abs() < 1e-15);

        assert!(heads(&[1.0], &[1.0], &wa, &ws).is_err());
    }

    proptest! {
        #[test]
        fn pool_dominates_current(rows in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 3), 1..5)) {
            let p = temporal_pool(&ring(&rows)).unwrap();
            let current = rows.last().unwrap();
            for (v, c) in p.value.iter().zip(current) {
                prop_assert!(v >= c);
            }
        }

        #[test]
        fn heads_are_distributions(
            h in prop::collection::vec(-50.0f64..50.0, 4),
            w in prop::collection::vec(-3.0f64..3.0, 20),
        ) {
            let wa = Parameter::new("wa", DenseMatrix::from_vec(4, 3, w[..12].to_vec()).unwrap());
            let ws = Parameter::new("ws", DenseMatrix::from_vec(4, 2, w[12..].to_vec()).unwrap());
            let out = heads(&h, &h, &wa, &ws).unwrap();
            prop_assert!((out.action.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((out.start.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
