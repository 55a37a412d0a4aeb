//! Generates the default synthetic corpus, writes it to a temporary
//! directory and prints its shape and content hash.

use woad::harness::{generate_synthetic, Split, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::default();
    let corpus = generate_synthetic(&spec)?;
    let dir = tempfile::tempdir()?;
    let manifest = corpus.write(dir.path())?;

    let train = corpus
        .videos
        .iter()
        .filter(|v| v.split == Split::Train)
        .count();
    let frames: usize = corpus.videos.iter().map(|v| v.num_frames()).sum();
    let instances: usize = corpus.videos.iter().map(|v| v.instances.len()).sum();
    println!(
        "classes {}, feature dim {}, fps {}",
        spec.num_classes, spec.feature_dim, spec.fps
    );
    println!(
        "{} videos ({train} train, {} test), {frames} frames, {instances} action instances",
        corpus.videos.len(),
        corpus.videos.len() - train
    );
    println!("manifest {}", manifest.display());
    println!("sha256 {}", hex::encode(corpus.hash()));

    let first = &corpus.videos[0];
    println!(
        "{}: class {}, segments {:?}",
        first.video_id,
        first.class,
        first.segments(spec.fps)
    );
    Ok(())
}
