//! `L_total = L_OAR + λ (L_MIL + L_CAS)` over one batch, with gradients into
//! every parameter of the model.

use crate::error::{Error, Result};
use crate::harness::trunk::{trunk_backward, trunk_forward, TrunkForward};
use crate::labels::LabelTrack;
use crate::model::WoadModel;
use crate::numerics::matrix::DenseMatrix;
use crate::oar::{
    backward_sequence, forward_sequence, frame_loss, oar_loss, start_loss, SequenceForward,
};
use crate::tpg::cas::{
    cas_loss, region_representations, region_representations_backward, CasLoss, RegionRepr,
};
use crate::tpg::scoring::{
    frame_scores, mil_loss, video_class_scores, video_class_scores_backward, MilLoss, VideoLabel,
    VideoScores,
};
use crate::training::config::TrainConfig;

/// One video of a training batch with the label track chosen for it.
#[derive(Clone, Copy, Debug)]
pub struct BatchVideo<'a> {
    pub video_id: &'a str,
    /// Pre-extracted features, `T×D_in`.
    pub raw: &'a DenseMatrix,
    pub label: &'a VideoLabel,
    pub track: &'a LabelTrack,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub frame: f64,
    pub start: f64,
    pub oar: f64,
    pub mil: f64,
    pub cas: f64,
    pub tpg: f64,
    /// `L_OAR + λ·L_TPG`, or the term-weighted sum when terms are masked.
    pub total: f64,
    pub frames: usize,
    pub cas_pairs: usize,
}

/// Per-term weights applied on top of the objective, for checking or
/// inspecting one term at a time. [`LossTerms::ALL`] is the training loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub frame: f64,
    pub start: f64,
    pub mil: f64,
    pub cas: f64,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms {
        frame: 1.0,
        start: 1.0,
        mil: 1.0,
        cas: 1.0,
    };
    pub const FRAME: LossTerms = LossTerms {
        frame: 1.0,
        start: 0.0,
        mil: 0.0,
        cas: 0.0,
    };
    pub const START: LossTerms = LossTerms {
        frame: 0.0,
        start: 1.0,
        mil: 0.0,
        cas: 0.0,
    };
    pub const MIL: LossTerms = LossTerms {
        frame: 0.0,
        start: 0.0,
        mil: 1.0,
        cas: 0.0,
    };
    pub const CAS: LossTerms = LossTerms {
        frame: 0.0,
        start: 0.0,
        mil: 0.0,
        cas: 1.0,
    };
}

impl Default for LossTerms {
    fn default() -> Self {
        Self::ALL
    }
}

/// Start bits of the whole batch in the frame order used by `selection`
/// arguments: videos in batch order, frames in time order.
pub fn batch_start_bits(batch: &[BatchVideo<'_>]) -> Vec<bool> {
    batch
        .iter()
        .flat_map(|v| v.track.start_bits.iter().copied())
        .collect()
}

struct VideoCache {
    trunk: TrunkForward,
    video_scores: VideoScores,
    mil: MilLoss,
    /// Index range of this video's regions in the batch region list.
    regions: std::ops::Range<usize>,
    chunks: Vec<(usize, SequenceForward)>,
}

struct BatchCache {
    videos: Vec<VideoCache>,
    regions: Vec<RegionRepr>,
    cas: CasLoss,
    frame_grad: DenseMatrix,
    start_grad: DenseMatrix,
    mil_weight: f64,
    cas_weight: f64,
}

fn forward(
    model: &WoadModel,
    batch: &[BatchVideo<'_>],
    cfg: &TrainConfig,
    selection: &[usize],
    terms: LossTerms,
) -> Result<(LossBreakdown, BatchCache)> {
    if batch.is_empty() {
        return Err(Error::domain("empty training batch"));
    }
    let num_classes = model.dims().num_classes;
    let window = cfg.effective_window();
    let mut videos = Vec::with_capacity(batch.len());
    let mut regions = Vec::new();
    let mut labels = Vec::new();
    let mut total_frames = 0;
    for v in batch {
        let t_len = v.raw.rows();
        if t_len == 0 {
            return Err(Error::domain(format!(
                "video `{}` has no frames",
                v.video_id
            )));
        }
        if v.track.len() != t_len {
            return Err(Error::domain(format!(
                "video `{}` has {t_len} frames but a {}-frame label track",
                v.video_id,
                v.track.len()
            )));
        }
        let trunk = trunk_forward(v.raw, &model.trunk)?;
        let scores = frame_scores(v.video_id, &trunk.features, &model.tpg_weight.value)?;
        let video_scores = video_class_scores(&scores, cfg.kappa);
        let mil = mil_loss(&video_scores.values, v.label)?;
        let first_region = regions.len();
        if t_len >= 2 {
            for &class in &v.label.classes {
                regions.push(region_representations(&trunk.features, &scores, class)?);
            }
        }
        let mut chunks = Vec::new();
        let mut start = 0;
        while start < t_len {
            let end = (start + cfg.seq_len).min(t_len);
            let inputs = trunk.features.slice_rows(start, end);
            chunks.push((start, forward_sequence(&model.oar, window, &inputs)?));
            start = end;
        }
        labels.extend_from_slice(&v.track.frame_labels);
        total_frames += t_len;
        videos.push(VideoCache {
            trunk,
            video_scores,
            mil,
            regions: first_region..regions.len(),
            chunks,
        });
    }

    let mut action_probs = DenseMatrix::zeros(total_frames, num_classes + 1);
    let mut start_probs = DenseMatrix::zeros(total_frames, 2);
    let mut row = 0;
    for vc in &videos {
        for (_, fwd) in &vc.chunks {
            for t in 0..fwd.hiddens.len() {
                action_probs
                    .row_mut(row)
                    .copy_from_slice(fwd.action_probs.row(t));
                start_probs
                    .row_mut(row)
                    .copy_from_slice(fwd.start_probs.row(t));
                row += 1;
            }
        }
    }
    let mut frame = frame_loss(&action_probs, &labels)?;
    let mut start = start_loss(
        &start_probs,
        &batch_start_bits(batch),
        selection,
        cfg.gamma,
        cfg.start_normalization,
    )?;

    let mil = videos.iter().map(|v| v.mil.loss).sum::<f64>() / videos.len() as f64;
    let cas = cas_loss(&regions, cfg.cas_margin, cfg.cas_form)?;
    let tpg_weight = if cfg.ablations.no_tpg_loss {
        0.0
    } else {
        cfg.lambda
    };
    let oar = oar_loss(frame.loss, start.loss);
    let tpg = mil + cas.loss;
    frame.grad_logits.scale(terms.frame);
    start.grad_logits.scale(terms.start);
    let mil_weight = tpg_weight * terms.mil;
    let cas_weight = tpg_weight * terms.cas;
    let total = if terms == LossTerms::ALL {
        oar + tpg_weight * tpg
    } else {
        terms.frame * frame.loss
            + terms.start * start.loss
            + mil_weight * mil
            + cas_weight * cas.loss
    };
    let breakdown = LossBreakdown {
        frame: frame.loss,
        start: start.loss,
        oar,
        mil,
        cas: cas.loss,
        tpg,
        total,
        frames: total_frames,
        cas_pairs: cas.num_pairs,
    };
    if !breakdown.total.is_finite() {
        let ids: Vec<&str> = batch.iter().map(|v| v.video_id).collect();
        return Err(Error::NonFinite {
            context: format!("total loss {breakdown:?} on batch {ids:?}"),
        });
    }
    Ok((
        breakdown,
        BatchCache {
            videos,
            regions,
            cas,
            frame_grad: frame.grad_logits,
            start_grad: start.grad_logits,
            mil_weight,
            cas_weight,
        },
    ))
}

fn backward(model: &mut WoadModel, batch: &[BatchVideo<'_>], cache: BatchCache) -> Result<()> {
    let n_videos = batch.len() as f64;
    let mut row = 0;
    for (v, vc) in batch.iter().zip(&cache.videos) {
        let features = &vc.trunk.features;
        let mut grad_features = DenseMatrix::zeros(features.rows(), features.cols());

        for (offset, fwd) in &vc.chunks {
            let len = fwd.hiddens.len();
            let ga = cache.frame_grad.slice_rows(row, row + len);
            let gs = cache.start_grad.slice_rows(row, row + len);
            let gx = backward_sequence(&mut model.oar, fwd, &ga, &gs)?;
            for t in 0..len {
                for (g, x) in grad_features.row_mut(offset + t).iter_mut().zip(gx.row(t)) {
                    *g += x;
                }
            }
            row += len;
        }

        if cache.mil_weight != 0.0 || cache.cas_weight != 0.0 {
            let mut grad_scores =
                DenseMatrix::zeros(features.rows(), model.tpg_weight.value.cols());
            let grad_video: Vec<f64> = vc
                .mil
                .grad
                .iter()
                .map(|g| g * cache.mil_weight / n_videos)
                .collect();
            video_class_scores_backward(&vc.video_scores, &grad_video, &mut grad_scores);
            let w = cache.cas_weight;
            for idx in vc.regions.clone() {
                let g = &cache.cas.grads[idx];
                let psi: Vec<f64> = g.psi.iter().map(|x| x * w).collect();
                let phi: Vec<f64> = g.phi.iter().map(|x| x * w).collect();
                region_representations_backward(
                    features,
                    &cache.regions[idx],
                    &psi,
                    &phi,
                    &mut grad_features,
                    &mut grad_scores,
                );
            }
            features.add_transpose_matmul_into(&grad_scores, &mut model.tpg_weight.grad)?;
            let through = grad_scores.matmul_transpose(&model.tpg_weight.value)?;
            grad_features.add_assign(&through)?;
        }

        trunk_backward(v.raw, &vc.trunk, &grad_features, &mut model.trunk)?;
    }
    Ok(())
}

/// Evaluates the batch objective and accumulates its gradient into `model`.
/// `selection` indexes [`batch_start_bits`]; callers zero gradients first.
pub fn total_loss(
    model: &mut WoadModel,
    batch: &[BatchVideo<'_>],
    cfg: &TrainConfig,
    selection: &[usize],
) -> Result<LossBreakdown> {
    weighted_loss(model, batch, cfg, selection, LossTerms::ALL)
}

/// [`total_loss`] with individual terms reweighted; `breakdown.total` and the
/// accumulated gradient both follow `terms`.
pub fn weighted_loss(
    model: &mut WoadModel,
    batch: &[BatchVideo<'_>],
    cfg: &TrainConfig,
    selection: &[usize],
    terms: LossTerms,
) -> Result<LossBreakdown> {
    let (loss, cache) = forward(model, batch, cfg, selection, terms)?;
    backward(model, batch, cache)?;
    Ok(loss)
}

/// Forward-only version of [`weighted_loss`].
pub fn evaluate_loss(
    model: &WoadModel,
    batch: &[BatchVideo<'_>],
    cfg: &TrainConfig,
    selection: &[usize],
    terms: LossTerms,
) -> Result<LossBreakdown> {
    forward(model, batch, cfg, selection, terms).map(|(loss, _)| loss)
}
