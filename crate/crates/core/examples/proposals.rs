//! Turns hand-written frame scores into class-wise proposals and the
//! frame-level pseudo labels derived from them.

use woad::numerics::DenseMatrix;
use woad::tpg::{generate_proposals, proposals_to_labels, FrameScores, ProposalParams, VideoLabel};

fn main() -> woad::Result<()> {
    // Twelve frames, two classes; class 1 fires twice with a one-frame dip.
    let rows: Vec<Vec<f64>> = [
        (-2.0, -1.0),
        (-1.5, -1.0),
        (1.0, -0.5),
        (2.0, -0.5),
        (-0.2, -0.5),
        (1.5, -0.5),
        (0.5, -1.0),
        (-1.0, -1.0),
        (-1.0, 0.8),
        (-1.0, 1.2),
        (-1.0, -0.3),
        (-2.0, -1.0),
    ]
    .iter()
    .map(|&(a, b)| vec![a, b])
    .collect();
    let scores = FrameScores {
        video_id: "toy".into(),
        scores: DenseMatrix::from_rows(&rows)?,
    };
    let video_scores = [1.2, 0.4];
    let label = VideoLabel::new("toy", [1, 2]);

    for gap in [0, 1] {
        let params = ProposalParams {
            gap,
            ..ProposalParams::default()
        };
        let set = generate_proposals(&scores, &video_scores, &label, &params)?;
        println!("gap {gap}:");
        for p in &set.proposals {
            println!(
                "  class {} frames {}..={} score {:.3}",
                p.class, p.start_frame, p.end_frame, p.score
            );
        }
        let track = proposals_to_labels(&set, scores.num_frames())?;
        println!("  labels {:?}", track.frame_labels);
        println!(
            "  starts {:?}",
            track
                .start_bits
                .iter()
                .map(|&b| u8::from(b))
                .collect::<Vec<_>>()
        );
    }

    // Class 2 is absent from the video label, so it yields nothing.
    let set = generate_proposals(
        &scores,
        &video_scores,
        &VideoLabel::new("toy", [1]),
        &ProposalParams::default(),
    )?;
    let classes: Vec<usize> = set.proposals.iter().map(|p| p.class).collect();
    println!("label {{1}} only: proposal classes {classes:?}");
    Ok(())
}
