use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::config::{parse_finite, parse_key_values, parse_value, unknown_key, KeyValue};
use crate::numerics::adam::AdamConfig;
use crate::oar::StartNormalization;
use crate::tpg::{CasForm, ProposalParams, ScoreSpace};

/// Component switches for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablations {
    /// Drop `λ·L_TPG` from the objective.
    pub no_tpg_loss: bool,
    /// Replace the LSTM with two rectified FC layers.
    pub no_rnn: bool,
    /// Pool over the current hidden only.
    pub no_temporal_pool: bool,
    /// Ignore the start head at inference.
    pub no_start_head: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub refresh_interval: u64,
    pub batch_videos: usize,
    pub seq_len: usize,
    pub epochs: usize,
    pub seed: u64,

    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decoupled_weight_decay: bool,

    pub hidden_dim: usize,
    /// Trunk output width; 0 keeps the input width.
    pub feature_dim: usize,
    pub window: usize,

    pub gamma: f64,
    pub neg_ratio: usize,
    pub start_normalization: StartNormalization,

    pub kappa: usize,
    pub class_threshold: f64,
    pub score_threshold: f64,
    pub score_space: ScoreSpace,
    pub proposal_gap: usize,
    pub proposal_min_len: usize,
    pub cas_margin: f64,
    pub cas_form: CasForm,

    /// Fraction of training videos whose segment annotations may be used.
    pub strong_fraction: f64,
    /// Among strong videos, the fraction supervised by ground truth at each refresh.
    pub gt_ratio: f64,

    pub ablations: Ablations,
    /// Strict lower bound on the combined start score for an emitted start.
    pub start_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            refresh_interval: 100,
            batch_videos: 10,
            seq_len: 64,
            epochs: 50,
            seed: 0,
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decoupled_weight_decay: false,
            hidden_dim: 64,
            feature_dim: 0,
            window: 3,
            gamma: 2.0,
            neg_ratio: 3,
            start_normalization: StartNormalization::Selected,
            kappa: 8,
            class_threshold: 0.1,
            score_threshold: 0.0,
            score_space: ScoreSpace::Logit,
            proposal_gap: 0,
            proposal_min_len: 1,
            cas_margin: 0.5,
            cas_form: CasForm::Intent,
            strong_fraction: 0.0,
            gt_ratio: 0.9,
            ablations: Ablations::default(),
            start_threshold: 0.0,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "lambda",
    "refresh_interval",
    "batch_videos",
    "seq_len",
    "epochs",
    "seed",
    "learning_rate",
    "weight_decay",
    "beta1",
    "beta2",
    "epsilon",
    "decoupled_weight_decay",
    "hidden_dim",
    "feature_dim",
    "window",
    "gamma",
    "neg_ratio",
    "start_normalization",
    "kappa",
    "class_threshold",
    "score_threshold",
    "score_space",
    "proposal_gap",
    "proposal_min_len",
    "cas_margin",
    "cas_form",
    "strong_fraction",
    "gt_ratio",
    "no_tpg_loss",
    "no_rnn",
    "no_temporal_pool",
    "no_start_head",
    "start_threshold",
];

fn enum_value<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::InvalidValue {
            key: key.to_string(),
            message: format!(
                "`{value}`, expected one of {}",
                options
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        })
}

const NORMALIZATIONS: &[(&str, StartNormalization)] = &[
    ("selected", StartNormalization::Selected),
    ("all_frames", StartNormalization::AllFrames),
];
const SCORE_SPACES: &[(&str, ScoreSpace)] = &[
    ("logit", ScoreSpace::Logit),
    ("softmax", ScoreSpace::Softmax),
];
const CAS_FORMS: &[(&str, CasForm)] =
    &[("intent", CasForm::Intent), ("verbatim", CasForm::Verbatim)];

fn enum_name<T: PartialEq>(value: T, options: &[(&'static str, T)]) -> &'static str {
    options
        .iter()
        .find(|(_, v)| *v == value)
        .map(|(n, _)| *n)
        .expect("every variant is listed")
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&parse_key_values(text, "config")?)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, entries: &[KeyValue]) -> Result<()> {
        for kv in entries {
            self.set(&kv.key, &kv.value)?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda" => self.lambda = parse_finite(key, value)?,
            "refresh_interval" => self.refresh_interval = parse_value(key, value)?,
            "batch_videos" => self.batch_videos = parse_value(key, value)?,
            "seq_len" => self.seq_len = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_finite(key, value)?,
            "weight_decay" => self.weight_decay = parse_finite(key, value)?,
            "beta1" => self.beta1 = parse_finite(key, value)?,
            "beta2" => self.beta2 = parse_finite(key, value)?,
            "epsilon" => self.epsilon = parse_finite(key, value)?,
            "decoupled_weight_decay" => self.decoupled_weight_decay = parse_value(key, value)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "feature_dim" => self.feature_dim = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "gamma" => self.gamma = parse_finite(key, value)?,
            "neg_ratio" => self.neg_ratio = parse_value(key, value)?,
            "start_normalization" => {
                self.start_normalization = enum_value(key, value, NORMALIZATIONS)?
            }
            "kappa" => self.kappa = parse_value(key, value)?,
            "class_threshold" => self.class_threshold = parse_finite(key, value)?,
            "score_threshold" => self.score_threshold = parse_finite(key, value)?,
            "score_space" => self.score_space = enum_value(key, value, SCORE_SPACES)?,
            "proposal_gap" => self.proposal_gap = parse_value(key, value)?,
            "proposal_min_len" => self.proposal_min_len = parse_value(key, value)?,
            "cas_margin" => self.cas_margin = parse_finite(key, value)?,
            "cas_form" => self.cas_form = enum_value(key, value, CAS_FORMS)?,
            "strong_fraction" => self.strong_fraction = parse_finite(key, value)?,
            "gt_ratio" => self.gt_ratio = parse_finite(key, value)?,
            "no_tpg_loss" => self.ablations.no_tpg_loss = parse_value(key, value)?,
            "no_rnn" => self.ablations.no_rnn = parse_value(key, value)?,
            "no_temporal_pool" => self.ablations.no_temporal_pool = parse_value(key, value)?,
            "no_start_head" => self.ablations.no_start_head = parse_value(key, value)?,
            "start_threshold" => self.start_threshold = parse_finite(key, value)?,
            _ => return Err(unknown_key(key, TRAIN_KEYS)),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::InvalidValue {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        if self.lambda < 0.0 {
            return bad("lambda", "must be >= 0");
        }
        if self.refresh_interval == 0 {
            return bad("refresh_interval", "must be >= 1");
        }
        if self.batch_videos == 0 {
            return bad("batch_videos", "must be >= 1");
        }
        if self.seq_len == 0 {
            return bad("seq_len", "must be >= 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim", "must be >= 1");
        }
        if self.kappa == 0 {
            return bad("kappa", "must be >= 1");
        }
        if self.proposal_min_len == 0 {
            return bad("proposal_min_len", "must be >= 1");
        }
        if self.gamma < 0.0 {
            return bad("gamma", "must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.strong_fraction) {
            return bad("strong_fraction", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gt_ratio) {
            return bad("gt_ratio", "must lie in [0, 1]");
        }
        if self.learning_rate <= 0.0 {
            return bad("learning_rate", "must be > 0");
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let a = &self.ablations;
        let entries: Vec<(&str, String)> = vec![
            ("lambda", self.lambda.to_string()),
            ("refresh_interval", self.refresh_interval.to_string()),
            ("batch_videos", self.batch_videos.to_string()),
            ("seq_len", self.seq_len.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("epsilon", self.epsilon.to_string()),
            (
                "decoupled_weight_decay",
                self.decoupled_weight_decay.to_string(),
            ),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("window", self.window.to_string()),
            ("gamma", self.gamma.to_string()),
            ("neg_ratio", self.neg_ratio.to_string()),
            (
                "start_normalization",
                enum_name(self.start_normalization, NORMALIZATIONS).into(),
            ),
            ("kappa", self.kappa.to_string()),
            ("class_threshold", self.class_threshold.to_string()),
            ("score_threshold", self.score_threshold.to_string()),
            (
                "score_space",
                enum_name(self.score_space, SCORE_SPACES).into(),
            ),
            ("proposal_gap", self.proposal_gap.to_string()),
            ("proposal_min_len", self.proposal_min_len.to_string()),
            ("cas_margin", self.cas_margin.to_string()),
            ("cas_form", enum_name(self.cas_form, CAS_FORMS).into()),
            ("strong_fraction", self.strong_fraction.to_string()),
            ("gt_ratio", self.gt_ratio.to_string()),
            ("no_tpg_loss", a.no_tpg_loss.to_string()),
            ("no_rnn", a.no_rnn.to_string()),
            ("no_temporal_pool", a.no_temporal_pool.to_string()),
            ("no_start_head", a.no_start_head.to_string()),
            ("start_threshold", self.start_threshold.to_string()),
        ];
        debug_assert_eq!(entries.len(), TRAIN_KEYS.len());
        entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    /// Pooling window after ablations.
    pub fn effective_window(&self) -> usize {
        if self.ablations.no_temporal_pool {
            0
        } else {
            self.window
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
            decoupled_weight_decay: self.decoupled_weight_decay,
        }
    }

    pub fn proposal_params(&self) -> ProposalParams {
        ProposalParams {
            class_threshold: self.class_threshold,
            score_threshold: self.score_threshold,
            score_space: self.score_space,
            gap: self.proposal_gap,
            min_len: self.proposal_min_len,
        }
    }
}
