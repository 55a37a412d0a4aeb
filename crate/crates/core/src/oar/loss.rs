//! Frame classification loss and the focal start loss with negative sampling.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;
use crate::numerics::ops::PROB_EPS;

#[derive(Clone, Debug, PartialEq)]
pub struct LossWithGrad {
    pub loss: f64,
    /// Gradient with respect to the pre-softmax logits, one row per frame.
    pub grad_logits: DenseMatrix,
}

/// Mean over frames of `−ln a[label]`.
pub fn frame_loss(action_probs: &DenseMatrix, labels: &[usize]) -> Result<LossWithGrad> {
    let (n, k) = action_probs.shape();
    if labels.len() != n {
        return Err(Error::domain(format!(
            "{} labels for {n} frames",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::domain("frame loss over zero frames"));
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = action_probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::domain(format!(
                "frame label {label} with {k} classes"
            )));
        }
        loss -= action_probs[(r, label)].max(PROB_EPS).ln();
        grad[(r, label)] -= 1.0;
    }
    grad.scale(scale);
    Ok(LossWithGrad {
        loss: loss * scale,
        grad_logits: grad,
    })
}

/// What the start loss sum is divided by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StartNormalization {
    /// Number of selected (positive + sampled negative) frames.
    #[default]
    Selected,
    /// Total number of frames in the batch.
    AllFrames,
}

/// All start frames plus `min(neg_ratio × positives, available)` negatives
/// drawn uniformly without replacement. With no positives a single negative
/// is drawn. Returned indices are sorted.
pub fn select_start_frames<R: Rng + ?Sized>(
    start_bits: &[bool],
    neg_ratio: usize,
    rng: &mut R,
) -> Vec<usize> {
    let positives: Vec<usize> = (0..start_bits.len()).filter(|&t| start_bits[t]).collect();
    let negatives: Vec<usize> = (0..start_bits.len()).filter(|&t| !start_bits[t]).collect();
    let wanted = if positives.is_empty() {
        1
    } else {
        neg_ratio * positives.len()
    };
    let take = wanted.min(negatives.len());
    let mut selected = positives;
    selected.extend(
        sample(rng, negatives.len(), take)
            .into_iter()
            .map(|i| negatives[i]),
    );
    selected.sort_unstable();
    selected
}

/// Focal loss `−(1 − p)^γ ln p` on the true start/non-start probability of
/// each selected frame.
pub fn start_loss(
    start_probs: &DenseMatrix,
    start_bits: &[bool],
    selected: &[usize],
    gamma: f64,
    normalization: StartNormalization,
) -> Result<LossWithGrad> {
    let n = start_probs.rows();
    if start_bits.len() != n || start_probs.cols() != 2 {
        return Err(Error::domain(format!(
            "start loss over {n}x{} probabilities with {} labels",
            start_probs.cols(),
            start_bits.len()
        )));
    }
    let mut grad = DenseMatrix::zeros(n, 2);
    if selected.is_empty() {
        return Ok(LossWithGrad {
            loss: 0.0,
            grad_logits: grad,
        });
    }
    let denom = match normalization {
        StartNormalization::Selected => selected.len(),
        StartNormalization::AllFrames => n,
    } as f64;
    let mut loss = 0.0;
    for &j in selected {
        if j >= n {
            return Err(Error::domain(format!("selected frame {j} out of {n}")));
        }
        let m = usize::from(start_bits[j]);
        let p = start_probs[(j, m)];
        let pc = p.max(PROB_EPS);
        let w = (1.0 - pc).powf(gamma);
        loss -= w * pc.ln();
        let dl_dp = if !(PROB_EPS..1.0).contains(&p) {
            0.0
        } else if gamma == 0.0 {
            -1.0 / p
        } else {
            gamma * (1.0 - p).powf(gamma - 1.0) * p.ln() - w / p
        };
        for k in 0..2 {
            let delta = if k == m { 1.0 } else { 0.0 };
            grad[(j, k)] += dl_dp * p * (delta - start_probs[(j, k)]) / denom;
        }
    }
    Ok(LossWithGrad {
        loss: loss / denom,
        grad_logits: grad,
    })
}

pub fn oar_loss(frame: f64, start: f64) -> f64 {
    frame + start
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(r: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(r).unwrap()
    }

    #[test]
    fn frame_loss_examples() {
        let perfect = frame_loss(&rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]), &[1, 0]).unwrap();
        assert_eq!(perfect.loss, 0.0);

        let third = 1.0 / 3.0;
        let uniform = frame_loss(&rows(&[vec![third; 3]]), &[2]).unwrap();
        assert!((uniform.loss - 3f64.ln()).abs() < 1e-12);

        let a = frame_loss(&rows(&[vec![0.2, 0.8]]), &[1]).unwrap().loss;
        let b = frame_loss(&rows(&[vec![0.6, 0.4]]), &[0]).unwrap().loss;
        let both = frame_loss(&rows(&[vec![0.2, 0.8], vec![0.6, 0.4]]), &[1, 0])
            .unwrap()
            .loss;
        assert!((both - (a + b) / 2.0).abs() < 1e-15);

        assert!(frame_loss(&rows(&[vec![0.5, 0.5]]), &[0, 1]).is_err());
    }

    #[test]
    fn start_loss_examples() {
        let probs = rows(&[vec![0.0, 1.0]]);
        let certain = start_loss(&probs, &[true], &[0], 2.0, StartNormalization::Selected).unwrap();
        assert_eq!(certain.loss, 0.0);

        let half = rows(&[vec![0.5, 0.5]]);
        let l = start_loss(&half, &[true], &[0], 2.0, StartNormalization::Selected).unwrap();
        assert!((l.loss - 0.25 * 2f64.ln()).abs() < 1e-12);
        assert!((l.loss - 0.17329).abs() < 1e-5);
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let probs = rows(&[
            vec![0.7, 0.3],
            vec![0.2, 0.8],
            vec![0.9, 0.1],
            vec![0.55, 0.45],
        ]);
        let bits = [false, true, false, false];
        let selected = [0, 1, 3];
        let focal =
            start_loss(&probs, &bits, &selected, 0.0, StartNormalization::Selected).unwrap();
        let ce: f64 = -(0.7f64.ln() + 0.8f64.ln() + 0.55f64.ln()) / 3.0;
        assert!((focal.loss - ce).abs() <= 1e-12);
    }

    #[test]
    fn all_frames_normalization() {
        let probs = rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let sel = start_loss(
            &probs,
            &[true, false],
            &[0],
            0.0,
            StartNormalization::Selected,
        )
        .unwrap();
        let all = start_loss(
            &probs,
            &[true, false],
            &[0],
            0.0,
            StartNormalization::AllFrames,
        )
        .unwrap();
        assert!((sel.loss - 2.0 * all.loss).abs() < 1e-15);
    }

    #[test]
    fn selection_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bits = vec![false; 40];
        bits[5] = true;
        bits[17] = true;
        let s = select_start_frames(&bits, 3, &mut rng);
        assert_eq!(s.len(), 2 + 6);
        assert!(s.contains(&5) && s.contains(&17));

        let few = select_start_frames(&[true, true, false], 3, &mut rng);
        assert_eq!(few, vec![0, 1, 2]);

        let none = select_start_frames(&[false; 10], 3, &mut rng);
        assert_eq!(none.len(), 1);

        assert!(select_start_frames(&[], 3, &mut rng).is_empty());
    }

    #[test]
    fn oar_loss_adds() {
        assert_eq!(oar_loss(0.0, 0.0), 0.0);
        assert_eq!(oar_loss(3f64.ln(), 0.0), 3f64.ln());
        assert_eq!(oar_loss(0.5, 0.25), 0.75);
    }
}
