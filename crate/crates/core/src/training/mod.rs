//! Joint optimization of the proposal generator and the online recognizer
//! with periodically refreshed pseudo labels.

pub mod checkpoint;
pub mod config;
pub mod objective;
pub mod supervision;

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use checkpoint::{Checkpoint, RngSnapshot};
pub use config::{Ablations, TrainConfig};
pub use objective::{
    batch_start_bits, evaluate_loss, total_loss, weighted_loss, BatchVideo, LossBreakdown,
    LossTerms,
};
pub use supervision::{
    assign_supervision, choose_strong_videos, largest_remainder_split, SupervisionTag,
};

use crate::error::{Error, Result};
use crate::harness::trunk::trunk_forward;
use crate::labels::{LabelTrack, Provenance};
use crate::model::{ModelDims, WoadModel};
use crate::numerics::adam::{adam_step, AdamState};
use crate::numerics::matrix::DenseMatrix;
use crate::numerics::param::ParameterSet;
use crate::oar::select_start_frames;
use crate::tpg::{
    frame_scores, generate_proposals, proposals_to_labels, video_class_scores, ProposalSet,
    VideoLabel,
};

/// Loss above which training is considered divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingVideo {
    pub video_id: String,
    /// `T×D_in` pre-extracted features.
    pub features: DenseMatrix,
    pub label: VideoLabel,
    /// Frame labels from segment annotations, when the video has them.
    pub ground_truth: Option<LabelTrack>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub num_classes: usize,
    pub videos: Vec<TrainingVideo>,
}

impl TrainingSet {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .videos
            .first()
            .ok_or_else(|| Error::domain("training set has no videos"))?;
        let dim = first.features.cols();
        for v in &self.videos {
            if v.features.rows() == 0 || v.features.cols() != dim {
                return Err(Error::domain(format!(
                    "video `{}` has {}x{} features, expected Tx{dim} with T >= 1",
                    v.video_id,
                    v.features.rows(),
                    v.features.cols()
                )));
            }
            if v.label.classes.is_empty()
                || v.label
                    .classes
                    .iter()
                    .any(|&c| c == 0 || c > self.num_classes)
            {
                return Err(Error::domain(format!(
                    "video `{}` has labels {:?} outside 1..={}",
                    v.video_id, v.label.classes, self.num_classes
                )));
            }
            if let Some(gt) = &v.ground_truth {
                if gt.len() != v.features.rows() {
                    return Err(Error::domain(format!(
                        "video `{}` ground truth length mismatch",
                        v.video_id
                    )));
                }
                gt.validate(self.num_classes)?;
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.videos.first().map_or(0, |v| v.features.cols())
    }
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub loss: LossBreakdown,
}

pub const METRICS_HEADER: &str = "# iteration\tL_OAR\tL_MIL\tL_CAS\tL_total";

impl fmt::Display for MetricsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}",
            self.iteration, self.loss.oar, self.loss.mil, self.loss.cas, self.loss.total
        )
    }
}

/// Runs the proposal generator over a whole video (offline) and rasterizes
/// the mined proposals into a pseudo label track.
pub fn mine_pseudo_labels(
    model: &WoadModel,
    video: &TrainingVideo,
    cfg: &TrainConfig,
) -> Result<(ProposalSet, LabelTrack)> {
    let trunk = trunk_forward(&video.features, &model.trunk)?;
    let scores = frame_scores(&video.video_id, &trunk.features, &model.tpg_weight.value)?;
    let video_scores = video_class_scores(&scores, cfg.kappa);
    let set = generate_proposals(
        &scores,
        &video_scores.values,
        &video.label,
        &cfg.proposal_params(),
    )?;
    let track = proposals_to_labels(&set, video.features.rows())?;
    Ok((set, track))
}

/// Step-wise trainer. Owns the model, optimizer, rng and the label tracks in
/// force; borrows the training videos.
pub struct Trainer<'a> {
    set: &'a TrainingSet,
    cfg: TrainConfig,
    model: WoadModel,
    adam: AdamState,
    rng: ChaCha8Rng,
    strong: Vec<bool>,
    tags: Vec<SupervisionTag>,
    tracks: Vec<LabelTrack>,
    epoch: u64,
    iteration: u64,
    metrics: Vec<MetricsRecord>,
    refresh_log: Vec<u64>,
}

impl<'a> Trainer<'a> {
    pub fn new(set: &'a TrainingSet, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        set.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let input_dim = set.input_dim();
        let dims = ModelDims {
            input_dim,
            feature_dim: if cfg.feature_dim == 0 {
                input_dim
            } else {
                cfg.feature_dim
            },
            hidden_dim: cfg.hidden_dim,
            num_classes: set.num_classes,
        };
        let model = WoadModel::init(dims, !cfg.ablations.no_rnn, &mut rng);
        let adam = AdamState::new(cfg.adam(), &model);
        let annotated: Vec<bool> = set
            .videos
            .iter()
            .map(|v| v.ground_truth.is_some())
            .collect();
        let strong = choose_strong_videos(&annotated, cfg.strong_fraction, &mut rng);
        let tags = strong
            .iter()
            .map(|&s| {
                if s {
                    SupervisionTag::Strong {
                        use_ground_truth: false,
                    }
                } else {
                    SupervisionTag::WeakOnly
                }
            })
            .collect();
        let tracks = set
            .videos
            .iter()
            .map(|v| LabelTrack::background(v.features.rows(), Provenance::Pseudo))
            .collect();
        Ok(Self {
            set,
            cfg: cfg.clone(),
            model,
            adam,
            rng,
            strong,
            tags,
            tracks,
            epoch: 0,
            iteration: 0,
            metrics: Vec::new(),
            refresh_log: Vec::new(),
        })
    }

    /// Continues from a checkpoint taken on the same training set.
    pub fn resume(set: &'a TrainingSet, checkpoint: Checkpoint) -> Result<Self> {
        set.validate()?;
        if checkpoint.tracks.len() != set.videos.len() {
            return Err(Error::domain(format!(
                "checkpoint covers {} videos, training set has {}",
                checkpoint.tracks.len(),
                set.videos.len()
            )));
        }
        let strong = checkpoint
            .tags
            .iter()
            .map(|t| *t != SupervisionTag::WeakOnly)
            .collect();
        Ok(Self {
            set,
            cfg: checkpoint.config,
            model: checkpoint.model,
            adam: checkpoint.adam,
            rng: checkpoint.rng.restore(),
            strong,
            tags: checkpoint.tags,
            tracks: checkpoint.tracks,
            epoch: checkpoint.epoch,
            iteration: checkpoint.iteration,
            metrics: Vec::new(),
            refresh_log: Vec::new(),
        })
    }

    pub fn model(&self) -> &WoadModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.metrics
    }

    /// Iterations at which proposals were refreshed.
    pub fn refresh_log(&self) -> &[u64] {
        &self.refresh_log
    }

    pub fn tags(&self) -> &[SupervisionTag] {
        &self.tags
    }

    pub fn tracks(&self) -> &[LabelTrack] {
        &self.tracks
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            epoch: self.epoch,
            iteration: self.iteration,
            rng: RngSnapshot::capture(&self.rng),
            model: self.model.clone(),
            adam: self.adam.clone(),
            tags: self.tags.clone(),
            tracks: self.tracks.clone(),
        }
    }

    /// Redraws the ground-truth / pseudo split and re-mines pseudo labels for
    /// every video not using ground truth.
    pub fn refresh(&mut self) -> Result<()> {
        self.tags = assign_supervision(&self.strong, self.cfg.gt_ratio, &mut self.rng);
        for (i, video) in self.set.videos.iter().enumerate() {
            self.tracks[i] = match (&video.ground_truth, self.tags[i].uses_ground_truth()) {
                (Some(gt), true) => gt.clone(),
                _ => mine_pseudo_labels(&self.model, video, &self.cfg)?.1,
            };
        }
        self.refresh_log.push(self.iteration);
        log::debug!("refreshed proposals at iteration {}", self.iteration);
        Ok(())
    }

    /// One optimizer step on the given videos.
    pub fn step(&mut self, videos: &[usize]) -> Result<LossBreakdown> {
        if self.iteration.is_multiple_of(self.cfg.refresh_interval) {
            self.refresh()?;
        }
        let batch: Vec<BatchVideo<'_>> = videos
            .iter()
            .map(|&i| {
                let v = &self.set.videos[i];
                BatchVideo {
                    video_id: &v.video_id,
                    raw: &v.features,
                    label: &v.label,
                    track: &self.tracks[i],
                }
            })
            .collect();
        let selection =
            select_start_frames(&batch_start_bits(&batch), self.cfg.neg_ratio, &mut self.rng);
        self.model.zero_grads();
        let last_good_epoch = (self.epoch > 0).then_some(self.epoch as usize);
        let diverged = |loss: f64| Error::Diverged {
            iteration: self.iteration,
            loss,
            last_good_epoch,
        };
        let loss = match total_loss(&mut self.model, &batch, &self.cfg, &selection) {
            Ok(l) => l,
            Err(Error::NonFinite { context }) => {
                log::error!("non-finite loss: {context}");
                return Err(diverged(f64::NAN));
            }
            Err(e) => return Err(e),
        };
        if loss.total > DIVERGENCE_LOSS {
            return Err(diverged(loss.total));
        }
        match adam_step(&mut self.model, &mut self.adam) {
            Ok(()) => {}
            Err(Error::NonFiniteGradient { name }) => {
                log::error!("non-finite gradient in `{name}`");
                return Err(diverged(loss.total));
            }
            Err(e) => return Err(e),
        }
        let record = MetricsRecord {
            iteration: self.iteration,
            epoch: self.epoch,
            loss,
        };
        log::trace!("{record}");
        self.metrics.push(record);
        self.iteration += 1;
        Ok(loss)
    }

    /// Shuffles the videos and steps over them in batches of `batch_videos`.
    pub fn run_epoch(&mut self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.set.videos.len()).collect();
        order.shuffle(&mut self.rng);
        for batch in order.chunks(self.cfg.batch_videos) {
            self.step(batch)?;
        }
        self.epoch += 1;
        if let Some(last) = self.metrics.last() {
            log::info!(
                "epoch {} iteration {} L_total {:.6} L_OAR {:.6} L_MIL {:.6} L_CAS {:.6}",
                self.epoch,
                self.iteration,
                last.loss.total,
                last.loss.oar,
                last.loss.mil,
                last.loss.cas
            );
        }
        Ok(())
    }

    pub fn into_model(self) -> WoadModel {
        self.model
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: WoadModel,
    pub metrics: Vec<MetricsRecord>,
    pub refresh_log: Vec<u64>,
    /// SHA-256 of the checkpoint taken after each epoch.
    pub epoch_hashes: Vec<[u8; 32]>,
    pub final_checkpoint: Checkpoint,
}

/// Trains for `cfg.epochs` epochs. With `checkpoint_dir`, every epoch's
/// checkpoint is written there as `epoch-NNNN.ckpt`.
pub fn train(
    set: &TrainingSet,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(set, cfg)?;
    let mut epoch_hashes = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
        let ck = trainer.checkpoint();
        let bytes = ck.encode();
        epoch_hashes.push(Sha256::digest(&bytes).into());
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(format!("epoch-{:04}.ckpt", ck.epoch));
            std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        }
    }
    let final_checkpoint = trainer.checkpoint();
    Ok(TrainOutcome {
        metrics: trainer.metrics.clone(),
        refresh_log: trainer.refresh_log.clone(),
        epoch_hashes,
        final_checkpoint,
        model: trainer.into_model(),
    })
}
