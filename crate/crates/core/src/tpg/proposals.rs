//! Two-stage thresholding of TPG scores into class-wise temporal proposals.

use crate::error::{Error, Result};
use crate::labels::{LabelTrack, Provenance, BACKGROUND};
use crate::numerics::ops::{softmax, softmax_in_place};
use crate::tpg::scoring::{FrameScores, VideoLabel};

/// Which per-frame quantity the score threshold is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScoreSpace {
    #[default]
    Logit,
    /// Softmax over classes of each frame's score row.
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposalParams {
    /// Minimum video-level class probability for a class to be considered.
    pub class_threshold: f64,
    /// Minimum frame score for a frame to be marked.
    pub score_threshold: f64,
    pub score_space: ScoreSpace,
    /// Marked runs separated by at most this many unmarked frames are merged.
    pub gap: usize,
    pub min_len: usize,
}

impl Default for ProposalParams {
    fn default() -> Self {
        Self {
            class_threshold: 0.1,
            score_threshold: 0.0,
            score_space: ScoreSpace::Logit,
            gap: 0,
            min_len: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalProposal {
    /// 1-based class.
    pub class: usize,
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    /// Mean raw frame score over the interval.
    pub score: f64,
}

impl TemporalProposal {
    pub fn num_frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

/// Proposals ordered by class, then start frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProposalSet {
    pub video_id: String,
    pub proposals: Vec<TemporalProposal>,
}

pub fn generate_proposals(
    scores: &FrameScores,
    video_scores: &[f64],
    label: &VideoLabel,
    params: &ProposalParams,
) -> Result<ProposalSet> {
    let (t, c) = scores.scores.shape();
    if video_scores.len() != c {
        return Err(Error::domain(format!(
            "{} video scores for {c} classes",
            video_scores.len()
        )));
    }
    let class_probs = softmax(video_scores)?;
    let marked_source = match params.score_space {
        ScoreSpace::Logit => scores.scores.clone(),
        ScoreSpace::Softmax => {
            let mut s = scores.scores.clone();
            for r in 0..t {
                softmax_in_place(s.row_mut(r));
            }
            s
        }
    };

    let mut proposals = Vec::new();
    for col in 0..c {
        let class = col + 1;
        if class_probs[col] < params.class_threshold || !label.contains(class) {
            continue;
        }
        let mut run: Option<(usize, usize)> = None;
        let mut runs = Vec::new();
        for r in 0..t {
            if marked_source[(r, col)] < params.score_threshold {
                continue;
            }
            run = match run {
                Some((s, e)) if r - e - 1 <= params.gap => Some((s, r)),
                Some(done) => {
                    runs.push(done);
                    Some((r, r))
                }
                None => Some((r, r)),
            };
        }
        runs.extend(run);
        for (s, e) in runs {
            if e - s + 1 < params.min_len {
                continue;
            }
            let score = (s..=e).map(|r| scores.scores[(r, col)]).sum::<f64>() / (e - s + 1) as f64;
            proposals.push(TemporalProposal {
                class,
                start_frame: s,
                end_frame: e,
                score,
            });
        }
    }
    Ok(ProposalSet {
        video_id: scores.video_id.clone(),
        proposals,
    })
}

/// Rasterizes proposals into a pseudo label track. Where proposals of
/// different classes overlap, the higher-scoring one wins (lower class on ties).
pub fn proposals_to_labels(set: &ProposalSet, num_frames: usize) -> Result<LabelTrack> {
    let mut labels = vec![BACKGROUND; num_frames];
    let mut best: Vec<Option<(f64, usize)>> = vec![None; num_frames];
    for p in &set.proposals {
        if p.class == BACKGROUND || p.start_frame > p.end_frame || p.end_frame >= num_frames {
            return Err(Error::domain(format!(
                "proposal (class {}, {}..={}) outside a {num_frames}-frame video",
                p.class, p.start_frame, p.end_frame
            )));
        }
        for t in p.start_frame..=p.end_frame {
            let wins = match best[t] {
                None => true,
                Some((score, class)) => p.score > score || (p.score == score && p.class < class),
            };
            if wins {
                best[t] = Some((p.score, p.class));
                labels[t] = p.class;
            }
        }
    }
    Ok(LabelTrack::from_frame_labels(labels, Provenance::Pseudo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;

    fn one_class(col: &[f64]) -> FrameScores {
        FrameScores {
            video_id: "v".into(),
            scores: DenseMatrix::from_vec(col.len(), 1, col.to_vec()).unwrap(),
        }
    }

    fn spans(set: &ProposalSet) -> Vec<(usize, usize)> {
        set.proposals
            .iter()
            .map(|p| (p.start_frame, p.end_frame))
            .collect()
    }

    #[test]
    fn grouping_examples() {
        let s = one_class(&[0.9, 0.8, 0.1, 0.7, 0.9]);
        let label = VideoLabel::new("v", [1]);
        let params = ProposalParams {
            score_threshold: 0.5,
            ..ProposalParams::default()
        };
        let set = generate_proposals(&s, &[1.0], &label, &params).unwrap();
        assert_eq!(spans(&set), vec![(0, 1), (3, 4)]);
        assert!((set.proposals[0].score - 0.85).abs() < 1e-12);

        let merged =
            generate_proposals(&s, &[1.0], &label, &ProposalParams { gap: 1, ..params }).unwrap();
        assert_eq!(spans(&merged), vec![(0, 4)]);

        let none = generate_proposals(
            &s,
            &[1.0],
            &label,
            &ProposalParams {
                class_threshold: 1.01,
                ..params
            },
        )
        .unwrap();
        assert!(none.proposals.is_empty());

        let long_only = generate_proposals(
            &s,
            &[1.0],
            &label,
            &ProposalParams {
                min_len: 3,
                ..params
            },
        )
        .unwrap();
        assert!(long_only.proposals.is_empty());
    }

    #[test]
    fn class_filter_drops_unlabeled_classes() {
        let s = FrameScores {
            video_id: "v".into(),
            scores: DenseMatrix::from_fn(6, 2, |_, _| 1.0),
        };
        let set = generate_proposals(
            &s,
            &[0.0, 0.0],
            &VideoLabel::new("v", [2]),
            &ProposalParams::default(),
        )
        .unwrap();
        assert!(set.proposals.iter().all(|p| p.class == 2));
        assert_eq!(set.proposals.len(), 1);
    }

    #[test]
    fn softmax_score_space() {
        let s = FrameScores {
            video_id: "v".into(),
            scores: DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]])
                .unwrap(),
        };
        let params = ProposalParams {
            score_threshold: 0.5,
            score_space: ScoreSpace::Softmax,
            ..ProposalParams::default()
        };
        let set = generate_proposals(&s, &[0.0, 0.0], &VideoLabel::new("v", [1]), &params).unwrap();
        assert_eq!(spans(&set), vec![(0, 0), (2, 2)]);
    }

    #[test]
    fn labels_from_proposals() {
        let set = ProposalSet {
            video_id: "v".into(),
            proposals: vec![
                TemporalProposal {
                    class: 1,
                    start_frame: 0,
                    end_frame: 1,
                    score: 1.0,
                },
                TemporalProposal {
                    class: 1,
                    start_frame: 3,
                    end_frame: 4,
                    score: 1.0,
                },
            ],
        };
        let track = proposals_to_labels(&set, 6).unwrap();
        assert_eq!(track.frame_labels, vec![1, 1, 0, 1, 1, 0]);
        assert_eq!(
            track.start_bits,
            vec![true, false, false, true, false, false]
        );
        assert_eq!(track.provenance, Provenance::Pseudo);

        let empty = proposals_to_labels(&ProposalSet::default(), 4).unwrap();
        assert_eq!(empty, LabelTrack::background(4, Provenance::Pseudo));

        let overlap = ProposalSet {
            video_id: "v".into(),
            proposals: vec![
                TemporalProposal {
                    class: 1,
                    start_frame: 0,
                    end_frame: 3,
                    score: 0.9,
                },
                TemporalProposal {
                    class: 2,
                    start_frame: 2,
                    end_frame: 5,
                    score: 0.4,
                },
            ],
        };
        let track = proposals_to_labels(&overlap, 6).unwrap();
        assert_eq!(track.frame_labels, vec![1, 1, 1, 1, 2, 2]);
        track.validate(2).unwrap();

        let bad = ProposalSet {
            video_id: "v".into(),
            proposals: vec![TemporalProposal {
                class: 1,
                start_frame: 2,
                end_frame: 6,
                score: 0.0,
            }],
        };
        assert!(proposals_to_labels(&bad, 6).is_err());
    }
}
