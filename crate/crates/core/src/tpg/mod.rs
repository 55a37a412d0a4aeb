//! Temporal Proposal Generator: weakly supervised frame scoring and the
//! pseudo labels mined from it.

pub mod cas;
pub mod proposals;
pub mod scoring;

pub use cas::{cas_loss, cas_pair_loss, region_representations, CasForm, CasLoss, RegionRepr};
pub use proposals::{
    generate_proposals, proposals_to_labels, ProposalParams, ProposalSet, ScoreSpace,
    TemporalProposal,
};
pub use scoring::{
    frame_scores, mil_loss, top_k_count, video_class_scores, FrameScores, MilLoss, VideoLabel,
    VideoScores, DEFAULT_KAPPA,
};
