//! Per-frame supervision: action labels over `C+1` classes and start bits.

use crate::error::{Error, Result};

/// Class index 0 is background; actions are `1..=C`.
pub const BACKGROUND: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    GroundTruth,
    Pseudo,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelTrack {
    pub frame_labels: Vec<usize>,
    pub start_bits: Vec<bool>,
    pub provenance: Provenance,
}

impl LabelTrack {
    pub fn background(len: usize, provenance: Provenance) -> Self {
        Self {
            frame_labels: vec![BACKGROUND; len],
            start_bits: vec![false; len],
            provenance,
        }
    }

    /// Builds a track from per-frame classes. A start is set on the first
    /// frame of every maximal run of one action class.
    pub fn from_frame_labels(frame_labels: Vec<usize>, provenance: Provenance) -> Self {
        let start_bits = frame_labels
            .iter()
            .enumerate()
            .map(|(t, &c)| c != BACKGROUND && (t == 0 || frame_labels[t - 1] != c))
            .collect();
        Self {
            frame_labels,
            start_bits,
            provenance,
        }
    }

    /// Frame-indexed segments `(class, start, end_inclusive)`. Earlier segments
    /// win where segments overlap.
    pub fn from_segments(
        len: usize,
        segments: &[(usize, usize, usize)],
        provenance: Provenance,
    ) -> Result<Self> {
        let mut labels = vec![BACKGROUND; len];
        let mut claimed = vec![false; len];
        for &(class, start, end) in segments {
            if class == BACKGROUND || start > end || end >= len {
                return Err(Error::domain(format!(
                    "segment (class {class}, {start}..={end}) invalid for a {len}-frame track"
                )));
            }
            for t in start..=end {
                if !claimed[t] {
                    labels[t] = class;
                    claimed[t] = true;
                }
            }
        }
        Ok(Self::from_frame_labels(labels, provenance))
    }

    pub fn len(&self) -> usize {
        self.frame_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_labels.is_empty()
    }

    pub fn num_starts(&self) -> usize {
        self.start_bits.iter().filter(|&&b| b).count()
    }

    /// Start bits sit only on the first frame of an action run.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.start_bits.len() != self.frame_labels.len() {
            return Err(Error::domain(
                "start bits and frame labels differ in length",
            ));
        }
        for (t, (&c, &s)) in self.frame_labels.iter().zip(&self.start_bits).enumerate() {
            if c > num_classes {
                return Err(Error::domain(format!(
                    "frame {t} has class {c} > {num_classes}"
                )));
            }
            let first = c != BACKGROUND && (t == 0 || self.frame_labels[t - 1] != c);
            if s && !first {
                return Err(Error::domain(format!(
                    "start bit at frame {t} is not a segment start"
                )));
            }
        }
        Ok(())
    }
}
