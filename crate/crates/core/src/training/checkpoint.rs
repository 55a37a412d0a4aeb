//! Versioned binary checkpoints: parameters, optimizer state, rng state and
//! the label tracks in force when the checkpoint was taken.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "WOADCK" u32:version [32]:config_hash u32:len config_text
//! u64:epoch u64:iteration [32]:rng_seed u64:rng_stream u128:rng_word_pos
//! u32:n_params { u32:len name u32:rows u32:cols f64* }
//! u64:adam_step { f64* first f64* second } per parameter
//! u32:n_videos { u8:tag u8:provenance u32:len u32* labels u8* start_bits }
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::{LabelTrack, Provenance};
use crate::model::{ModelDims, WoadModel};
use crate::numerics::adam::AdamState;
use crate::numerics::matrix::DenseMatrix;
use crate::numerics::param::ParameterSet;
use crate::training::config::TrainConfig;
use crate::training::supervision::SupervisionTag;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"WOADCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngSnapshot {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngSnapshot {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimizer steps.
    pub iteration: u64,
    pub rng: RngSnapshot,
    pub model: WoadModel,
    pub adam: AdamState,
    pub tags: Vec<SupervisionTag>,
    pub tracks: Vec<LabelTrack>,
}

fn tag_code(tag: SupervisionTag) -> u8 {
    match tag {
        SupervisionTag::WeakOnly => 0,
        SupervisionTag::Strong {
            use_ground_truth: false,
        } => 1,
        SupervisionTag::Strong {
            use_ground_truth: true,
        } => 2,
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.hash());
        let text = self.config.to_text();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());

        let params = self.model.parameters();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in &params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            write_matrix(&mut out, &p.value);
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for (m, v) in self.adam.first_moment.iter().zip(&self.adam.second_moment) {
            write_values(&mut out, m);
            write_values(&mut out, v);
        }

        out.extend_from_slice(&(self.tracks.len() as u32).to_le_bytes());
        for (tag, track) in self.tags.iter().zip(&self.tracks) {
            out.push(tag_code(*tag));
            out.push(match track.provenance {
                Provenance::GroundTruth => 1,
                Provenance::Pseudo => 0,
            });
            out.extend_from_slice(&(track.len() as u32).to_le_bytes());
            for &l in &track.frame_labels {
                out.extend_from_slice(&(l as u32).to_le_bytes());
            }
            out.extend(track.start_bits.iter().map(|&b| u8::from(b)));
        }
        out
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.encode()).into()
    }

    pub fn decode(bytes: &[u8], source_name: &str) -> Result<Self> {
        let mut r = Reader {
            bytes,
            offset: 0,
            source_name,
        };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(r.error(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error(r.offset - 4, &format!("unsupported version {version}")));
        }
        let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let text_len = r.u32()? as usize;
        let text_at = r.offset;
        let text = std::str::from_utf8(r.take(text_len)?)
            .map_err(|_| r.error(text_at, "config is not UTF-8"))?;
        let config = TrainConfig::parse(text)?;
        if config.hash() != hash {
            return Err(r.error(text_at, "config hash mismatch"));
        }
        let epoch = r.u64()?;
        let iteration = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));

        let n_params = r.u32()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let len = r.u32()? as usize;
            let at = r.offset;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| r.error(at, "parameter name is not UTF-8"))?
                .to_string();
            let value = r.matrix()?;
            params.push((name, value));
        }
        let model = rebuild_model(&config, &params).map_err(|m| r.error(r.offset, &m))?;
        let mut adam = AdamState::new(config.adam(), &model);
        adam.step = r.u64()?;
        for (m, v) in adam
            .first_moment
            .iter_mut()
            .zip(adam.second_moment.iter_mut())
        {
            r.fill(m)?;
            r.fill(v)?;
        }

        let n_videos = r.u32()? as usize;
        let mut tags = Vec::with_capacity(n_videos);
        let mut tracks = Vec::with_capacity(n_videos);
        for _ in 0..n_videos {
            let at = r.offset;
            tags.push(match r.take(1)?[0] {
                0 => SupervisionTag::WeakOnly,
                1 => SupervisionTag::Strong {
                    use_ground_truth: false,
                },
                2 => SupervisionTag::Strong {
                    use_ground_truth: true,
                },
                t => return Err(r.error(at, &format!("unknown supervision tag {t}"))),
            });
            let provenance = match r.take(1)?[0] {
                0 => Provenance::Pseudo,
                1 => Provenance::GroundTruth,
                p => return Err(r.error(at + 1, &format!("unknown provenance {p}"))),
            };
            let len = r.u32()? as usize;
            let mut frame_labels = Vec::with_capacity(len);
            for _ in 0..len {
                frame_labels.push(r.u32()? as usize);
            }
            let start_bits = r.take(len)?.iter().map(|&b| b != 0).collect();
            tracks.push(LabelTrack {
                frame_labels,
                start_bits,
                provenance,
            });
        }
        if r.offset != bytes.len() {
            return Err(r.error(r.offset, "trailing bytes"));
        }
        Ok(Self {
            config,
            epoch,
            iteration,
            rng: RngSnapshot {
                seed,
                stream,
                word_pos,
            },
            model,
            adam,
            tags,
            tracks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }
}

fn write_values(out: &mut Vec<u8>, m: &DenseMatrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_matrix(out: &mut Vec<u8>, m: &DenseMatrix) {
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    write_values(out, m);
}

fn rebuild_model(
    config: &TrainConfig,
    params: &[(String, DenseMatrix)],
) -> std::result::Result<WoadModel, String> {
    let shape = |name: &str| {
        params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.shape())
            .ok_or_else(|| format!("missing parameter `{name}`"))
    };
    let (input_dim, feature_dim) = shape("trunk.weight")?;
    let (_, num_classes) = shape("tpg.weight")?;
    let (hidden_dim, _) = shape("oar.w_action")?;
    let dims = ModelDims {
        input_dim,
        feature_dim,
        hidden_dim,
        num_classes,
    };
    let mut model = WoadModel::init(
        dims,
        !config.ablations.no_rnn,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let mut slots = model.parameters_mut();
    if slots.len() != params.len() {
        return Err(format!(
            "expected {} parameters, found {}",
            slots.len(),
            params.len()
        ));
    }
    for (slot, (name, value)) in slots.iter_mut().zip(params) {
        if slot.name != *name || slot.value.shape() != value.shape() {
            return Err(format!(
                "parameter `{name}` {:?} does not fit `{}` {:?}",
                value.shape(),
                slot.name,
                slot.value.shape()
            ));
        }
        slot.value = value.clone();
    }
    Ok(model)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    source_name: &'a str,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, message: &str) -> Error {
        Error::Parse {
            source_name: self.source_name.to_string(),
            offset: offset as u64,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(self.error(
                self.offset,
                &format!(
                    "truncated: needed {n} bytes, {} left",
                    self.bytes.len() - self.offset
                ),
            ));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.bytes.len() - self.offset)
            .ok_or_else(|| {
                self.error(
                    self.offset,
                    &format!("{rows}x{cols} matrix exceeds the payload"),
                )
            })?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        DenseMatrix::from_vec(rows, cols, data)
    }

    fn fill(&mut self, m: &mut DenseMatrix) -> Result<()> {
        for v in m.as_mut_slice() {
            *v = self.f64()?;
        }
        Ok(())
    }
}
