//! Randomized finite-difference checks of every training loss through the
//! whole network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::labels::{LabelTrack, Provenance};
use crate::model::{ModelDims, WoadModel};
use crate::numerics::gradcheck::{grad_check, DEFAULT_FD_STEP};
use crate::numerics::matrix::DenseMatrix;
use crate::numerics::param::ParameterSet;
use crate::oar::select_start_frames;
use crate::tpg::VideoLabel;
use crate::training::{
    batch_start_bits, evaluate_loss, weighted_loss, BatchVideo, LossTerms, TrainConfig,
};

pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientResult {
    pub loss: &'static str,
    pub max_rel_error: f64,
    /// `(parameter, flat index, trial)` of the worst coordinate.
    pub worst: Option<(String, usize, usize)>,
    pub coordinates: usize,
    pub tolerance: f64,
}

impl GradientResult {
    pub fn passes(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// A small random two-video batch with its model and configuration.
#[derive(Clone, Debug)]
pub struct GradientInstance {
    pub model: WoadModel,
    pub cfg: TrainConfig,
    pub ids: Vec<String>,
    pub features: Vec<DenseMatrix>,
    pub labels: Vec<VideoLabel>,
    pub tracks: Vec<LabelTrack>,
    pub selection: Vec<usize>,
}

impl GradientInstance {
    /// `T ≤ 16`, `H ≤ 8`, `C ≤ 4`; both videos share a class so the CAS term
    /// has a pair.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let num_classes = rng.random_range(2..=4);
        let input_dim = rng.random_range(3..=5);
        let dims = ModelDims {
            input_dim,
            feature_dim: rng.random_range(3..=5),
            hidden_dim: rng.random_range(2..=8),
            num_classes,
        };
        let recurrent = rng.random_bool(0.75);
        let mut cfg = TrainConfig {
            seq_len: rng.random_range(4..=16),
            window: rng.random_range(0..=3),
            kappa: rng.random_range(2..=8),
            gamma: [0.0, 1.0, 2.0][rng.random_range(0..3)],
            lambda: rng.random_range(0.2..1.0),
            ..TrainConfig::default()
        };
        cfg.ablations.no_rnn = !recurrent;
        let mut model = WoadModel::init(dims, recurrent, rng);
        // Zero biases put an all-inactive ReLU layer exactly on its kink.
        for p in model.parameters_mut() {
            if p.value.rows() == 1 {
                for v in p.value.as_mut_slice() {
                    *v += rng.random_range(-0.5..0.5);
                }
            }
        }
        let shared = rng.random_range(1..=num_classes);
        let mut ids = Vec::new();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut tracks = Vec::new();
        for v in 0..2 {
            let t = rng.random_range(4..=16);
            let id = format!("g{v}");
            features.push(DenseMatrix::from_fn(t, input_dim, |_, _| {
                rng.random_range(-1.5..1.5)
            }));
            let mut classes = vec![shared];
            if rng.random_bool(0.3) {
                classes.push(rng.random_range(1..=num_classes));
            }
            let start = rng.random_range(0..t - 1);
            let end = rng.random_range(start..t);
            let frames: Vec<usize> = (0..t)
                .map(|f| {
                    if (start..=end).contains(&f) {
                        shared
                    } else {
                        0
                    }
                })
                .collect();
            tracks.push(LabelTrack::from_frame_labels(frames, Provenance::Pseudo));
            labels.push(VideoLabel::new(id.clone(), classes));
            ids.push(id);
        }
        let bits: Vec<bool> = tracks
            .iter()
            .flat_map(|t| t.start_bits.iter().copied())
            .collect();
        let selection = select_start_frames(&bits, cfg.neg_ratio, rng);
        Self {
            model,
            cfg,
            ids,
            features,
            labels,
            tracks,
            selection,
        }
    }

    pub fn batch(&self) -> Vec<BatchVideo<'_>> {
        (0..self.ids.len())
            .map(|i| BatchVideo {
                video_id: &self.ids[i],
                raw: &self.features[i],
                label: &self.labels[i],
                track: &self.tracks[i],
            })
            .collect()
    }

    /// Max relative error between the analytic gradient of `terms` and
    /// central differences, over every model parameter.
    pub fn check(
        &mut self,
        terms: LossTerms,
    ) -> Result<crate::numerics::gradcheck::GradCheckReport> {
        let mut model = self.model.clone();
        let batch = self.batch();
        debug_assert_eq!(
            batch_start_bits(&batch).len(),
            self.features.iter().map(|f| f.rows()).sum::<usize>()
        );
        model.zero_grads();
        weighted_loss(&mut model, &batch, &self.cfg, &self.selection, terms)?;
        let cfg = &self.cfg;
        let selection = &self.selection;
        grad_check(
            &mut model,
            |m: &WoadModel| {
                evaluate_loss(m, &batch, cfg, selection, terms)
                    .map(|l| l.total)
                    .unwrap_or(f64::NAN)
            },
            DEFAULT_FD_STEP,
        )
    }
}

pub const SUITE_TERMS: [(&str, LossTerms); 5] = [
    ("L_MIL", LossTerms::MIL),
    ("L_CAS", LossTerms::CAS),
    ("frame loss", LossTerms::FRAME),
    ("start loss", LossTerms::START),
    ("L_total", LossTerms::ALL),
];

/// Checks each loss on `trials` random instances drawn from `seed`.
pub fn gradient_suite(trials: usize, seed: u64) -> Result<Vec<GradientResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results: Vec<GradientResult> = SUITE_TERMS
        .iter()
        .map(|&(loss, _)| GradientResult {
            loss,
            max_rel_error: 0.0,
            worst: None,
            coordinates: 0,
            tolerance: GRADIENT_TOLERANCE,
        })
        .collect();
    for trial in 0..trials {
        let mut instance = GradientInstance::random(&mut rng);
        for (result, &(_, terms)) in results.iter_mut().zip(&SUITE_TERMS) {
            let report = instance.check(terms)?;
            result.coordinates += report.coordinates;
            if report.max_rel_error > result.max_rel_error || result.worst.is_none() {
                result.max_rel_error = report.max_rel_error;
                result.worst = report.worst.map(|(name, k)| (name, k, trial));
            }
        }
    }
    Ok(results)
}
