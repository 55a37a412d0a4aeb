//! Seeded synthetic corpora: background frames scattered around a background
//! prototype, action frames around per-class prototypes.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{GtSegment, VideoGroundTruth};
use crate::harness::config::{parse_finite, parse_value, unknown_key, KeyValue};
use crate::harness::features::{encode_features, write_features};
use crate::harness::manifest::{CorpusManifest, EvalVideo, ManifestEntry, Split};
use crate::labels::{LabelTrack, Provenance};
use crate::numerics::matrix::DenseMatrix;
use crate::tpg::VideoLabel;
use crate::training::{TrainingSet, TrainingVideo};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of each video's frames inside action instances.
    pub action_ratio: f64,
    pub max_instances: usize,
    /// Distance between the background prototype and every class prototype.
    pub margin: f64,
    /// Per-dimension standard deviation of the frame noise.
    pub noise: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            feature_dim: 16,
            train_per_class: 12,
            test_per_class: 6,
            min_len: 40,
            max_len: 120,
            action_ratio: 0.2,
            max_instances: 3,
            margin: 1.5,
            noise: 0.5,
            fps: 4.0,
            seed: 7,
        }
    }
}

pub const SYNTH_KEYS: &[&str] = &[
    "num_classes",
    "feature_dim",
    "train_per_class",
    "test_per_class",
    "min_len",
    "max_len",
    "action_ratio",
    "max_instances",
    "margin",
    "noise",
    "fps",
    "seed",
];

impl SyntheticSpec {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_classes" => self.num_classes = parse_value(key, value)?,
            "feature_dim" => self.feature_dim = parse_value(key, value)?,
            "train_per_class" => self.train_per_class = parse_value(key, value)?,
            "test_per_class" => self.test_per_class = parse_value(key, value)?,
            "min_len" => self.min_len = parse_value(key, value)?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "action_ratio" => self.action_ratio = parse_finite(key, value)?,
            "max_instances" => self.max_instances = parse_value(key, value)?,
            "margin" => self.margin = parse_finite(key, value)?,
            "noise" => self.noise = parse_finite(key, value)?,
            "fps" => self.fps = parse_finite(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(unknown_key(key, SYNTH_KEYS)),
        }
        Ok(())
    }

    pub fn apply(&mut self, entries: &[KeyValue]) -> Result<()> {
        for kv in entries {
            self.set(&kv.key, &kv.value)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_classes", self.num_classes),
            ("feature_dim", self.feature_dim),
            ("train_per_class", self.train_per_class),
            ("min_len", self.min_len),
            ("max_instances", self.max_instances),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidValue {
                    key: name.into(),
                    message: "must be >= 1".into(),
                });
            }
        }
        let bad = |key: &str, message: &str| Error::InvalidValue {
            key: key.into(),
            message: message.into(),
        };
        if self.max_len < self.min_len {
            return Err(bad("max_len", "must be >= min_len"));
        }
        if !(self.action_ratio > 0.0 && self.action_ratio < 1.0) {
            return Err(bad("action_ratio", "must lie in (0, 1)"));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(bad("margin", "must be > 0"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(bad("noise", "must be >= 0"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(bad("fps", "must be > 0"));
        }
        if self.min_len < 2 * self.max_instances {
            return Err(bad(
                "min_len",
                "too short for max_instances action instances",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub split: Split,
    pub class: usize,
    pub features: DenseMatrix,
    /// `(start_frame, end_frame_inclusive)` of each instance.
    pub instances: Vec<(usize, usize)>,
}

impl SyntheticVideo {
    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn segments(&self, fps: f64) -> Vec<GtSegment> {
        self.instances
            .iter()
            .map(|&(s, e)| GtSegment {
                class: self.class,
                start_s: s as f64 / fps,
                end_s: (e + 1) as f64 / fps,
            })
            .collect()
    }

    pub fn label_track(&self) -> LabelTrack {
        let segs: Vec<_> = self
            .instances
            .iter()
            .map(|&(s, e)| (self.class, s, e))
            .collect();
        LabelTrack::from_segments(self.num_frames(), &segs, Provenance::GroundTruth)
            .expect("instances lie inside the video")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub background_prototype: Vec<f64>,
    /// Index `c − 1` holds class `c`.
    pub class_prototypes: Vec<Vec<f64>>,
    pub videos: Vec<SyntheticVideo>,
}

/// Splits `total` into `parts` values, each at least `min`, uniformly over
/// compositions.
fn composition<R: Rng + ?Sized>(total: usize, parts: usize, min: usize, rng: &mut R) -> Vec<usize> {
    let free = total - parts * min;
    let mut bars: Vec<usize> = sample(rng, free + parts - 1, parts - 1).into_vec();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for (i, &b) in bars.iter().enumerate() {
        out.push(b - i - prev + min);
        prev = b - i;
    }
    out.push(free - prev + min);
    out
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    if spec.margin <= spec.noise {
        log::warn!(
            "synthetic margin {} does not exceed noise {}; the corpus may be unlearnable",
            spec.margin,
            spec.noise
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;
    let background_prototype: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
    let class_prototypes: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let u = unit_vector(d, &mut rng);
            background_prototype
                .iter()
                .zip(&u)
                .map(|(b, x)| b + spec.margin * x)
                .collect()
        })
        .collect();

    let mut videos = Vec::new();
    for (split, per_class) in [
        (Split::Train, spec.train_per_class),
        (Split::Test, spec.test_per_class),
    ] {
        for class in 1..=spec.num_classes {
            for idx in 0..per_class {
                let t = rng.random_range(spec.min_len..=spec.max_len);
                let k = rng.random_range(1..=spec.max_instances);
                let action =
                    ((spec.action_ratio * t as f64).round() as usize).clamp(k, t - (k - 1));
                let lengths = composition(action, k, 1, &mut rng);
                let mut gaps = composition(t - action - (k - 1), k + 1, 0, &mut rng);
                for g in &mut gaps[1..k] {
                    *g += 1;
                }
                let mut instances = Vec::with_capacity(k);
                let mut labels = vec![0usize; t];
                let mut pos = 0;
                for (&gap, &len) in gaps.iter().zip(&lengths) {
                    pos += gap;
                    instances.push((pos, pos + len - 1));
                    labels[pos..pos + len].fill(class);
                    pos += len;
                }
                let features = DenseMatrix::from_fn(t, d, |r, c| {
                    let proto = if labels[r] == 0 {
                        background_prototype[c]
                    } else {
                        class_prototypes[labels[r] - 1][c]
                    };
                    let z: f64 = rng.sample(StandardNormal);
                    proto + spec.noise * z
                });
                // Features are stored as f32 on disk; keep the in-memory copy identical.
                let features = DenseMatrix::from_fn(t, d, |r, c| features[(r, c)] as f32 as f64);
                videos.push(SyntheticVideo {
                    video_id: format!("{}_c{class}_{idx:03}", split.as_str()),
                    split,
                    class,
                    features,
                    instances,
                });
            }
        }
    }
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        background_prototype,
        class_prototypes,
        videos,
    })
}

impl SyntheticCorpus {
    pub fn class_names(&self) -> Vec<String> {
        (1..=self.spec.num_classes)
            .map(|c| format!("action{c}"))
            .collect()
    }

    fn feature_path(video: &SyntheticVideo) -> PathBuf {
        PathBuf::from("features").join(format!("{}.woadf", video.video_id))
    }

    pub fn manifest(&self, base_dir: &Path) -> CorpusManifest {
        CorpusManifest {
            class_names: self.class_names(),
            entries: self
                .videos
                .iter()
                .map(|v| ManifestEntry {
                    video_id: v.video_id.clone(),
                    feature_path: Self::feature_path(v),
                    frame_rate: self.spec.fps,
                    split: v.split,
                    classes: [v.class].into_iter().collect(),
                    segments: Some(v.segments(self.spec.fps)),
                })
                .collect(),
            base_dir: base_dir.to_path_buf(),
        }
    }

    /// Writes `manifest.tsv` and `features/*.woadf` under `dir`; returns the
    /// manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let features_dir = dir.join("features");
        std::fs::create_dir_all(&features_dir).map_err(|e| Error::io(&features_dir, e))?;
        for v in &self.videos {
            write_features(&dir.join(Self::feature_path(v)), &v.features)?;
        }
        let path = dir.join("manifest.tsv");
        std::fs::write(&path, self.manifest(dir).to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// SHA-256 over the manifest text and every feature file, in order.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.manifest(Path::new("")).to_text().as_bytes());
        for v in &self.videos {
            h.update(encode_features(&v.features));
        }
        h.finalize().into()
    }

    /// Training split with ground-truth tracks on every video.
    pub fn training_set(&self) -> TrainingSet {
        TrainingSet {
            num_classes: self.spec.num_classes,
            videos: self
                .videos
                .iter()
                .filter(|v| v.split == Split::Train)
                .map(|v| TrainingVideo {
                    video_id: v.video_id.clone(),
                    features: v.features.clone(),
                    label: VideoLabel::new(v.video_id.clone(), [v.class]),
                    ground_truth: Some(v.label_track()),
                })
                .collect(),
        }
    }

    pub fn eval_set(&self) -> Vec<EvalVideo> {
        self.videos
            .iter()
            .filter(|v| v.split == Split::Test)
            .map(|v| EvalVideo {
                features: v.features.clone(),
                ground_truth: VideoGroundTruth {
                    video_id: v.video_id.clone(),
                    fps: self.spec.fps,
                    num_frames: v.num_frames(),
                    segments: v.segments(self.spec.fps),
                },
            })
            .collect()
    }
}
