//! Command-line front end: `synth`, `train`, `infer`, `eval`, `gradcheck`.
//!
//! Failures print one line to stderr, `error<TAB>kind<TAB>message`, and exit
//! with status 1 (2 for usage errors, 3 for failed gradient checks).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, ApMode, DEFAULT_THRESHOLDS_S};
use crate::gradients::gradient_suite;
use crate::harness::config::{
    parse_key_values, parse_override, parse_value, unknown_key, KeyValue,
};
use crate::harness::features::load_features;
use crate::harness::manifest::{CorpusManifest, Split};
use crate::harness::synthetic::{generate_synthetic, SyntheticSpec};
use crate::streaming::{run_stream, DetectionLog, StreamConfig};
use crate::training::{train, Checkpoint, TrainConfig, METRICS_HEADER};

#[derive(Debug, Parser)]
#[command(
    name = "woad",
    version,
    about = "Weakly supervised online action detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (manifest + feature files).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train on the train split of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for checkpoints and the metrics log.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Stream videos through a trained model and write detection logs.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Stream every video of `--split` in this manifest.
        #[arg(long, conflicts_with = "features")]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Stream a single feature file instead.
        #[arg(long, requires = "fps")]
        features: Option<PathBuf>,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long, default_value = "video")]
        video_id: String,
        /// Output directory (manifest mode) or file (single video).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score detection logs against the test split of a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of `<video_id>.log` detection logs.
        #[arg(long)]
        logs: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Finite-difference check of every training loss.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Exit status of a finished command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    GradientCheckFailed,
}

fn read_entries(args: &ConfigArgs) -> Result<Vec<KeyValue>> {
    let mut entries = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_key_values(&text, &path.display().to_string())?
        }
        None => Vec::new(),
    };
    for o in &args.overrides {
        entries.push(parse_override(o)?);
    }
    Ok(entries)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

const EVAL_KEYS: &[&str] = &["ap_mode", "thresholds"];
const GRADCHECK_KEYS: &[&str] = &["trials", "seed", "tolerance"];

fn synth(
    out: &Path,
    seed: Option<u64>,
    config: &ConfigArgs,
    stdout: &mut String,
) -> Result<Status> {
    let mut spec = SyntheticSpec::default();
    spec.apply(&read_entries(config)?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let corpus = generate_synthetic(&spec)?;
    let manifest = corpus.write(out)?;
    let _ = writeln!(stdout, "manifest={}", manifest.display());
    let _ = writeln!(stdout, "videos={}", corpus.videos.len());
    let _ = writeln!(stdout, "corpus_hash={}", hex::encode(corpus.hash()));
    Ok(Status::Success)
}

fn train_cmd(
    manifest: &Path,
    out: &Path,
    seed: Option<u64>,
    config: &ConfigArgs,
    stdout: &mut String,
) -> Result<Status> {
    let mut cfg = TrainConfig::default();
    cfg.apply(&read_entries(config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let set = CorpusManifest::load(manifest)?.training_set()?;
    create_dir(out)?;
    let outcome = train(&set, &cfg, Some(out))?;
    let mut metrics = format!("{METRICS_HEADER}\n");
    for m in &outcome.metrics {
        let _ = writeln!(metrics, "{m}");
    }
    write_file(&out.join("metrics.tsv"), metrics.as_bytes())?;
    let refreshes: String = outcome
        .refresh_log
        .iter()
        .map(|i| format!("{i}\n"))
        .collect();
    write_file(&out.join("refreshes.txt"), refreshes.as_bytes())?;
    let path = out.join("model.ckpt");
    outcome.final_checkpoint.save(&path)?;
    let _ = writeln!(stdout, "checkpoint={}", path.display());
    let _ = writeln!(stdout, "iterations={}", outcome.final_checkpoint.iteration);
    let _ = writeln!(
        stdout,
        "checkpoint_hash={}",
        hex::encode(outcome.final_checkpoint.hash())
    );
    Ok(Status::Success)
}

#[allow(clippy::too_many_arguments)]
fn infer(
    checkpoint: &Path,
    manifest: Option<&Path>,
    split: &str,
    features: Option<&Path>,
    fps: Option<f64>,
    video_id: &str,
    out: &Path,
    config: &ConfigArgs,
    stdout: &mut String,
) -> Result<Status> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = ck.config.clone();
    for kv in read_entries(config)? {
        cfg.set(&kv.key, &kv.value)?;
    }
    cfg.validate()?;
    let stream = StreamConfig::from(&cfg);
    match (manifest, features) {
        (Some(m), None) => {
            let split = match split {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::InvalidValue {
                        key: "split".into(),
                        message: format!("`{other}`, expected train or test"),
                    })
                }
            };
            let manifest = CorpusManifest::load(m)?;
            create_dir(out)?;
            let mut count = 0;
            for e in manifest.entries(split) {
                let feats = load_features(&manifest.resolve(e))?;
                let log = run_stream(&ck.model, &e.video_id, &feats, e.frame_rate, stream)?;
                write_file(
                    &out.join(format!("{}.log", e.video_id)),
                    log.to_text().as_bytes(),
                )?;
                count += 1;
            }
            let _ = writeln!(stdout, "logs={count}");
            let _ = writeln!(stdout, "out={}", out.display());
        }
        (None, Some(f)) => {
            let feats = load_features(f)?;
            let fps = fps.ok_or_else(|| Error::InvalidValue {
                key: "fps".into(),
                message: "required with --features".into(),
            })?;
            let log = run_stream(&ck.model, video_id, &feats, fps, stream)?;
            write_file(out, log.to_text().as_bytes())?;
            let _ = writeln!(stdout, "frames={}", log.len());
            let _ = writeln!(stdout, "events={}", log.events().count());
        }
        _ => {
            return Err(Error::InvalidValue {
                key: "manifest".into(),
                message: "exactly one of --manifest or --features is required".into(),
            })
        }
    }
    Ok(Status::Success)
}

fn eval(
    manifest: &Path,
    logs_dir: &Path,
    config: &ConfigArgs,
    stdout: &mut String,
) -> Result<Status> {
    let mut mode = ApMode::Uninterpolated;
    let mut thresholds = DEFAULT_THRESHOLDS_S.to_vec();
    for kv in read_entries(config)? {
        match kv.key.as_str() {
            "ap_mode" => {
                mode = match kv.value.as_str() {
                    "uninterpolated" => ApMode::Uninterpolated,
                    "eleven_point" => ApMode::ElevenPoint,
                    other => {
                        return Err(Error::InvalidValue {
                            key: kv.key,
                            message: format!("`{other}`, expected uninterpolated or eleven_point"),
                        })
                    }
                }
            }
            "thresholds" => {
                thresholds = kv
                    .value
                    .split(',')
                    .map(|t| parse_value::<f64>("thresholds", t.trim()))
                    .collect::<Result<_>>()?
            }
            _ => return Err(unknown_key(&kv.key, EVAL_KEYS)),
        }
    }
    let manifest = CorpusManifest::load(manifest)?;
    let mut logs = Vec::new();
    let mut gt = Vec::new();
    for e in manifest.entries(Split::Test) {
        let path = logs_dir.join(format!("{}.log", e.video_id));
        let text = std::fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
        let log = DetectionLog::parse(&text, &path.display().to_string())?;
        gt.push(manifest.ground_truth(e, log.len()));
        logs.push(log);
    }
    let report = evaluate(&logs, &gt, manifest.num_classes(), &thresholds, mode)?;
    stdout.push_str(&report.to_table());
    stdout.push_str(&report.to_key_values());
    Ok(Status::Success)
}

fn gradcheck(seed: Option<u64>, config: &ConfigArgs, stdout: &mut String) -> Result<Status> {
    let mut trials = 50usize;
    let mut suite_seed = 0u64;
    let mut tolerance = None;
    for kv in read_entries(config)? {
        match kv.key.as_str() {
            "trials" => trials = parse_value(&kv.key, &kv.value)?,
            "tolerance" => tolerance = Some(parse_value::<f64>(&kv.key, &kv.value)?),
            "seed" => suite_seed = parse_value(&kv.key, &kv.value)?,
            _ => return Err(unknown_key(&kv.key, GRADCHECK_KEYS)),
        }
    }
    if let Some(s) = seed {
        suite_seed = s;
    }
    let mut results = gradient_suite(trials, suite_seed)?;
    let mut ok = true;
    for r in &mut results {
        if let Some(t) = tolerance {
            r.tolerance = t;
        }
        ok &= r.passes();
        let _ = writeln!(
            stdout,
            "{}\tmax_rel_error={:.3e}\ttolerance={:.0e}\t{}\tworst={}",
            r.loss,
            r.max_rel_error,
            r.tolerance,
            if r.passes() { "PASS" } else { "FAIL" },
            r.worst
                .as_ref()
                .map_or("-".to_string(), |(name, k, trial)| format!(
                    "{name}[{k}]@trial{trial}"
                ))
        );
    }
    Ok(if ok {
        Status::Success
    } else {
        Status::GradientCheckFailed
    })
}

fn dispatch(cli: Cli, stdout: &mut String) -> Result<Status> {
    match cli.command {
        Command::Synth { out, seed, config } => synth(&out, seed, &config, stdout),
        Command::Train {
            manifest,
            out,
            seed,
            config,
        } => train_cmd(&manifest, &out, seed, &config, stdout),
        Command::Infer {
            checkpoint,
            manifest,
            split,
            features,
            fps,
            video_id,
            out,
            config,
        } => infer(
            &checkpoint,
            manifest.as_deref(),
            &split,
            features.as_deref(),
            fps,
            &video_id,
            &out,
            &config,
            stdout,
        ),
        Command::Eval {
            manifest,
            logs,
            config,
        } => eval(&manifest, &logs, &config, stdout),
        Command::Gradcheck { seed, config } => gradcheck(seed, &config, stdout),
    }
}

/// Output of one CLI invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI on `argv` (program name first) without touching the process
/// streams.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            return if code == 0 {
                Outcome {
                    code,
                    stdout: rendered,
                    stderr: String::new(),
                }
            } else {
                let first = rendered
                    .lines()
                    .next()
                    .unwrap_or("invalid arguments")
                    .to_string();
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: format!("error\tusage\t{}\n", first.trim_start_matches("error: ")),
                }
            };
        }
    };
    let mut stdout = String::new();
    match dispatch(cli, &mut stdout) {
        Ok(Status::Success) => Outcome {
            code: 0,
            stdout,
            stderr: String::new(),
        },
        Ok(Status::GradientCheckFailed) => Outcome {
            code: 3,
            stdout,
            stderr: "error\tgradient_check\ta loss exceeded its tolerance\n".into(),
        },
        Err(e) => Outcome {
            code: 1,
            stdout,
            stderr: format!(
                "error\t{}\t{}\n",
                e.kind(),
                e.to_string().replace(['\n', '\t'], " ")
            ),
        },
    }
}

/// Log verbosity comes from `WOAD_LOG` (`error`, `warn`, `info`, `debug`, `trace`).
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or("WOAD_LOG", "warn"))
        .try_init();
}
