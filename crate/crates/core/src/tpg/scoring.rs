use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;
use crate::numerics::ops::{cross_entropy, softmax, softmax_cross_entropy_backward};

/// Default divisor for the number of frames pooled into a video score.
pub const DEFAULT_KAPPA: usize = 8;

/// Per-frame class logits for one video, `T×C` (background excluded).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameScores {
    pub video_id: String,
    pub scores: DenseMatrix,
}

impl FrameScores {
    pub fn num_frames(&self) -> usize {
        self.scores.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.scores.cols()
    }
}

/// Video-level class set. Classes are 1-based; column `c - 1` of the frame
/// scores belongs to class `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoLabel {
    pub video_id: String,
    pub classes: BTreeSet<usize>,
}

impl VideoLabel {
    pub fn new(video_id: impl Into<String>, classes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            video_id: video_id.into(),
            classes: classes.into_iter().collect(),
        }
    }

    pub fn contains(&self, class: usize) -> bool {
        self.classes.contains(&class)
    }

    /// Multi-hot label normalized to sum 1.
    pub fn target_distribution(&self, num_classes: usize) -> Result<Vec<f64>> {
        if self.classes.is_empty() {
            return Err(Error::domain(format!(
                "video `{}` has no class label",
                self.video_id
            )));
        }
        let mut target = vec![0.0; num_classes];
        for &c in &self.classes {
            if c == 0 || c > num_classes {
                return Err(Error::domain(format!(
                    "video `{}` labeled with class {c}, valid range is 1..={num_classes}",
                    self.video_id
                )));
            }
            target[c - 1] = 1.0;
        }
        let n = self.classes.len() as f64;
        target.iter_mut().for_each(|v| *v /= n);
        Ok(target)
    }
}

/// `S = F · W`, no bias and no activation.
pub fn frame_scores(
    video_id: &str,
    features: &DenseMatrix,
    weight: &DenseMatrix,
) -> Result<FrameScores> {
    Ok(FrameScores {
        video_id: video_id.to_string(),
        scores: features.matmul(weight)?,
    })
}

/// Number of frames averaged into a video score, never below one.
pub fn top_k_count(num_frames: usize, kappa: usize) -> usize {
    (num_frames / kappa.max(1)).max(1)
}

/// Top-K pooled class scores and the frames that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoScores {
    pub values: Vec<f64>,
    pub k: usize,
    /// Selected frame indices per class column.
    pub selected: Vec<Vec<usize>>,
}

/// Mean of the `K` largest frame scores per class. Equal scores are taken
/// in frame order.
pub fn video_class_scores(scores: &FrameScores, kappa: usize) -> VideoScores {
    let (t, c) = scores.scores.shape();
    let k = top_k_count(t, kappa);
    let mut values = Vec::with_capacity(c);
    let mut selected = Vec::with_capacity(c);
    let mut order: Vec<usize> = Vec::with_capacity(t);
    for col in 0..c {
        order.clear();
        order.extend(0..t);
        order.sort_by(|&a, &b| scores.scores[(b, col)].total_cmp(&scores.scores[(a, col)]));
        let top = order[..k.min(t)].to_vec();
        let mean = top.iter().map(|&r| scores.scores[(r, col)]).sum::<f64>() / top.len() as f64;
        values.push(mean);
        selected.push(top);
    }
    VideoScores {
        values,
        k,
        selected,
    }
}

/// Routes `∂L/∂ŝ` back to the selected frames of `∂L/∂S`.
pub fn video_class_scores_backward(
    video: &VideoScores,
    grad: &[f64],
    grad_scores: &mut DenseMatrix,
) {
    for (col, frames) in video.selected.iter().enumerate() {
        let g = grad[col] / frames.len() as f64;
        for &r in frames {
            grad_scores[(r, col)] += g;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilLoss {
    pub loss: f64,
    pub probs: Vec<f64>,
    /// `∂loss/∂ŝ`
    pub grad: Vec<f64>,
}

/// Cross-entropy between the normalized video label and the class softmax of
/// the pooled video scores.
pub fn mil_loss(video_scores: &[f64], label: &VideoLabel) -> Result<MilLoss> {
    let target = label.target_distribution(video_scores.len())?;
    let probs = softmax(video_scores)?;
    let loss = cross_entropy(&target, &probs)?;
    let grad = softmax_cross_entropy_backward(&target, &probs);
    Ok(MilLoss { loss, probs, grad })
}
