//! Brute-force oracles and random instance generators shared by the oracle
//! tests and the acceptance suite.

#![allow(dead_code)]

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use woad::evaluation::{collect_starts, frame_ap, point_ap, ApMode, GtSegment, VideoGroundTruth};
use woad::numerics::ops::{softmax, softmax_in_place};
use woad::numerics::DenseMatrix;
use woad::oar::FrameOutput;
use woad::streaming::{DetectionLog, StartEvent, StreamStep};
use woad::tpg::{generate_proposals, FrameScores, ProposalParams, ScoreSpace, VideoLabel};

pub type Q = Ratio<i128>;

fn q(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

fn to_f64(r: Q) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

// ---------------------------------------------------------------- proposals

/// Every interval `[s, e]` whose endpoints are marked, whose unmarked holes
/// are at most `gap` long, and which no marked frame within `gap + 1` extends.
pub fn oracle_proposals(
    scores: &DenseMatrix,
    video_scores: &[f64],
    label: &VideoLabel,
    params: &ProposalParams,
) -> Vec<(usize, usize, usize, f64)> {
    let (t, c) = scores.shape();
    let class_probs = softmax(video_scores).unwrap();
    let mut out = Vec::new();
    for col in 0..c {
        let class = col + 1;
        if !label.contains(class) || class_probs[col] < params.class_threshold {
            continue;
        }
        let marked = |r: usize| -> bool {
            let v = match params.score_space {
                ScoreSpace::Logit => scores[(r, col)],
                ScoreSpace::Softmax => {
                    let mut row = scores.row(r).to_vec();
                    softmax_in_place(&mut row);
                    row[col]
                }
            };
            v >= params.score_threshold
        };
        for s in 0..t {
            for e in s..t {
                if !marked(s) || !marked(e) {
                    continue;
                }
                let mut hole = 0;
                let mut holes_ok = true;
                for r in s..=e {
                    if marked(r) {
                        hole = 0;
                    } else {
                        hole += 1;
                        holes_ok &= hole <= params.gap;
                    }
                }
                let left_free = (s.saturating_sub(params.gap + 1)..s).all(|r| !marked(r));
                let right_free = (e + 1..t.min(e + params.gap + 2)).all(|r| !marked(r));
                if holes_ok && left_free && right_free && e - s + 1 >= params.min_len {
                    let score = (s..=e).map(|r| scores[(r, col)]).sum::<f64>() / (e - s + 1) as f64;
                    out.push((class, s, e, score));
                }
            }
        }
    }
    out
}

pub fn random_proposal_instance(
    rng: &mut impl Rng,
) -> (FrameScores, Vec<f64>, VideoLabel, ProposalParams) {
    let t = rng.random_range(1..=14);
    let c = rng.random_range(1..=4);
    // Quarter-step grid so ties and threshold equality both occur.
    let scores = DenseMatrix::from_fn(t, c, |_, _| rng.random_range(-8..=8) as f64 / 4.0);
    let video_scores: Vec<f64> = (0..c)
        .map(|_| rng.random_range(-8..=8) as f64 / 4.0)
        .collect();
    let classes: Vec<usize> = (1..=c).filter(|_| rng.random_bool(0.6)).collect();
    let params = ProposalParams {
        class_threshold: [0.0, 0.1, 0.25, 0.5][rng.random_range(0..4)],
        score_threshold: rng.random_range(-4..=4) as f64 / 4.0,
        score_space: if rng.random_bool(0.7) {
            ScoreSpace::Logit
        } else {
            ScoreSpace::Softmax
        },
        gap: rng.random_range(0..=3),
        min_len: rng.random_range(1..=3),
    };
    let fs = FrameScores {
        video_id: "v".into(),
        scores,
    };
    (fs, video_scores, VideoLabel::new("v", classes), params)
}

/// Compares [`generate_proposals`] to [`oracle_proposals`] on `trials`
/// random instances; `Err` describes the first mismatch. Returns how many
/// instances produced at least one proposal.
pub fn check_proposals(trials: usize, seed: u64) -> Result<usize, String> {
    let mut nonempty = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let (scores, video_scores, label, params) = random_proposal_instance(&mut rng);
        let got = generate_proposals(&scores, &video_scores, &label, &params)
            .map_err(|e| e.to_string())?;
        let mut got: Vec<_> = got
            .proposals
            .iter()
            .map(|p| (p.class, p.start_frame, p.end_frame, p.score))
            .collect();
        let mut want = oracle_proposals(&scores.scores, &video_scores, &label, &params);
        let key = |a: &(usize, usize, usize, f64)| (a.0, a.1, a.2);
        got.sort_by_key(key);
        want.sort_by_key(key);
        let same = got.len() == want.len()
            && got
                .iter()
                .zip(&want)
                .all(|(g, w)| key(g) == key(w) && g.3.to_bits() == w.3.to_bits());
        if !same {
            return Err(format!(
                "trial {trial}: {params:?}\n got {got:?}\nwant {want:?}"
            ));
        }
        nonempty += usize::from(!want.is_empty());
    }
    Ok(nonempty)
}

// ----------------------------------------------------------------------- AP

/// AP from first principles: for every distinct confidence `τ`, precision
/// and recall of the set `{conf ≥ τ}`; AP sums precision × recall gained.
pub fn oracle_ap(items: &[(Q, bool)], total_positives: usize, mode: ApMode) -> Option<Q> {
    if total_positives == 0 {
        return None;
    }
    let mut levels: Vec<Q> = items.iter().map(|i| i.0).collect();
    levels.sort();
    levels.dedup();
    levels.reverse();
    let points: Vec<(Q, Q)> = levels
        .iter()
        .map(|&tau| {
            let kept: Vec<&(Q, bool)> = items.iter().filter(|i| i.0 >= tau).collect();
            let tp = kept.iter().filter(|i| i.1).count() as i128;
            (q(tp, kept.len() as i128), q(tp, total_positives as i128))
        })
        .collect();
    Some(match mode {
        ApMode::Uninterpolated => {
            let mut ap = q(0, 1);
            let mut prev = q(0, 1);
            for &(p, r) in &points {
                ap += p * (r - prev);
                prev = r;
            }
            ap
        }
        ApMode::ElevenPoint => {
            let mut sum = q(0, 1);
            for k in 0..=10 {
                let level = q(k, 10);
                sum += points
                    .iter()
                    .filter(|pt| pt.1 >= level)
                    .map(|pt| pt.0)
                    .max()
                    .unwrap_or(q(0, 1));
            }
            sum / q(11, 1)
        }
    })
}

/// One random evaluation instance on a dyadic grid: fps 4, confidences in
/// eighths, segment bounds in quarter seconds, so every comparison is exact
/// in both `f64` and rationals.
pub struct ApInstance {
    pub num_classes: usize,
    pub logs: Vec<DetectionLog>,
    pub gt: Vec<VideoGroundTruth>,
    /// `[video][frame][class]` confidences in eighths.
    pub eighths: Vec<Vec<Vec<i128>>>,
    /// `[video] → (class, start quarter, end quarter)`.
    pub quarters: Vec<Vec<(usize, i128, i128)>>,
    /// `[video] → (frame, class, confidence eighths)`.
    pub events: Vec<Vec<(usize, usize, i128)>>,
}

pub const GRID_FPS: i128 = 4;

pub fn random_ap_instance(rng: &mut impl Rng) -> ApInstance {
    let num_classes = rng.random_range(1..=3);
    let num_videos = rng.random_range(1..=3);
    let mut inst = ApInstance {
        num_classes,
        logs: Vec::new(),
        gt: Vec::new(),
        eighths: Vec::new(),
        quarters: Vec::new(),
        events: Vec::new(),
    };
    for v in 0..num_videos {
        let t = rng.random_range(1..=12);
        let video_id = format!("v{}", [2, 0, 1][v]);
        let eighths: Vec<Vec<i128>> = (0..t)
            .map(|_| (0..=num_classes).map(|_| rng.random_range(0..=8)).collect())
            .collect();
        let mut events = Vec::new();
        let steps: Vec<StreamStep> = (0..t)
            .map(|f| {
                let event = rng.random_bool(0.3).then(|| {
                    let class = rng.random_range(1..=num_classes);
                    let conf = rng.random_range(1..=8);
                    events.push((f, class, conf));
                    StartEvent {
                        frame: f as u64,
                        time_s: f as f64 / GRID_FPS as f64,
                        class,
                        confidence: conf as f64 / 8.0,
                    }
                });
                let action: Vec<f64> = eighths[f].iter().map(|&k| k as f64 / 8.0).collect();
                StreamStep {
                    frame: f as u64,
                    time_s: f as f64 / GRID_FPS as f64,
                    output: FrameOutput {
                        action: action.clone(),
                        start: vec![0.5, 0.5],
                    },
                    combined: action,
                    predicted: event.map_or(0, |e| e.class),
                    event,
                }
            })
            .collect();
        let quarters: Vec<(usize, i128, i128)> = (0..rng.random_range(0..=3))
            .map(|_| {
                let class = rng.random_range(1..=num_classes);
                let s = rng.random_range(0..=(t as i128 + 2));
                let e = s + rng.random_range(0..=6);
                (class, s, e)
            })
            .collect();
        inst.gt.push(VideoGroundTruth {
            video_id: video_id.clone(),
            fps: GRID_FPS as f64,
            num_frames: t,
            segments: quarters
                .iter()
                .map(|&(class, s, e)| GtSegment {
                    class,
                    start_s: s as f64 / 4.0,
                    end_s: e as f64 / 4.0,
                })
                .collect(),
        });
        inst.logs.push(DetectionLog {
            video_id,
            fps: GRID_FPS as f64,
            num_classes,
            steps,
        });
        inst.eighths.push(eighths);
        inst.quarters.push(quarters);
        inst.events.push(events);
    }
    inst
}

/// F-AP of `class` with positives decided in rationals.
pub fn oracle_frame_ap(inst: &ApInstance, class: usize, mode: ApMode) -> Option<Q> {
    let mut items = Vec::new();
    let mut positives = 0;
    for (v, frames) in inst.eighths.iter().enumerate() {
        for (t, row) in frames.iter().enumerate() {
            let center = q(2 * t as i128 + 1, 2 * GRID_FPS);
            let positive = inst.quarters[v]
                .iter()
                .any(|&(c, s, e)| c == class && q(s, 4) <= center && center < q(e, 4));
            positives += usize::from(positive);
            items.push((q(row[class], 8), positive));
        }
    }
    oracle_ap(&items, positives, mode)
}

/// P-AP of `class`: repeatedly take the unprocessed prediction that comes
/// first (highest confidence, then video id, then time) and give it the
/// closest free ground-truth start of its video within the threshold,
/// earliest on equal distance.
pub fn oracle_point_ap(inst: &ApInstance, class: usize, threshold: Q, mode: ApMode) -> Option<Q> {
    let ids: Vec<&str> = inst.logs.iter().map(|l| l.video_id.as_str()).collect();
    let mut preds: Vec<(usize, Q, Q)> = Vec::new();
    for (v, evs) in inst.events.iter().enumerate() {
        for &(f, c, conf) in evs {
            if c == class {
                preds.push((v, q(f as i128, GRID_FPS), q(conf, 8)));
            }
        }
    }
    let mut free: Vec<Vec<(Q, bool)>> = inst
        .quarters
        .iter()
        .map(|segs| {
            segs.iter()
                .filter(|s| s.0 == class)
                .map(|s| (q(s.1, 4), true))
                .collect()
        })
        .collect();
    let total: usize = free.iter().map(|f| f.len()).sum();
    let mut done = vec![false; preds.len()];
    let mut items = Vec::new();
    for _ in 0..preds.len() {
        let mut pick: Option<usize> = None;
        for i in 0..preds.len() {
            if done[i] {
                continue;
            }
            let better = match pick {
                None => true,
                Some(j) => {
                    let (a, b) = (&preds[i], &preds[j]);
                    a.2 > b.2
                        || (a.2 == b.2
                            && (ids[a.0] < ids[b.0] || (ids[a.0] == ids[b.0] && a.1 < b.1)))
                }
            };
            if better {
                pick = Some(i);
            }
        }
        let i = pick.unwrap();
        done[i] = true;
        let (v, time, conf) = preds[i];
        let mut best: Option<(usize, Q, Q)> = None;
        for (k, &(start, available)) in free[v].iter().enumerate() {
            let d = if time > start {
                time - start
            } else {
                start - time
            };
            if !available || d > threshold {
                continue;
            }
            let wins = match best {
                None => true,
                Some((_, bd, bs)) => d < bd || (d == bd && start < bs),
            };
            if wins {
                best = Some((k, d, start));
            }
        }
        if let Some((k, _, _)) = best {
            free[v][k].1 = false;
        }
        items.push((conf, best.is_some()));
    }
    oracle_ap(&items, total, mode)
}

/// `Ok(true)` when both sides are defined and agree.
fn compare(got: Option<f64>, want: Option<Q>, what: &str) -> Result<bool, String> {
    match (got, want) {
        (None, None) => Ok(false),
        (Some(g), Some(w)) if (g - to_f64(w)).abs() <= 1e-12 => Ok(true),
        _ => Err(format!("{what}: got {got:?}, want {:?}", want.map(to_f64))),
    }
}

fn random_mode(rng: &mut impl Rng) -> ApMode {
    if rng.random_bool(0.8) {
        ApMode::Uninterpolated
    } else {
        ApMode::ElevenPoint
    }
}

/// Returns the number of defined APs compared.
pub fn check_frame_ap(trials: usize, seed: u64) -> Result<usize, String> {
    let mut defined = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let inst = random_ap_instance(&mut rng);
        let mode = random_mode(&mut rng);
        for class in 1..=inst.num_classes {
            let got = frame_ap(class, &inst.logs, &inst.gt, mode).map_err(|e| e.to_string())?;
            defined += usize::from(compare(
                got,
                oracle_frame_ap(&inst, class, mode),
                &format!("trial {trial} class {class} {mode:?}"),
            )?);
        }
    }
    Ok(defined)
}

/// Returns the number of defined, nonzero APs compared.
pub fn check_point_ap(trials: usize, seed: u64) -> Result<usize, String> {
    let mut nonzero = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let inst = random_ap_instance(&mut rng);
        let mode = random_mode(&mut rng);
        let starts = collect_starts(&inst.logs);
        for quarter_threshold in [0, 1, 2, 4, 8] {
            let threshold = q(quarter_threshold, 4);
            for class in 1..=inst.num_classes {
                let got = point_ap(
                    class,
                    &starts,
                    &inst.gt,
                    quarter_threshold as f64 / 4.0,
                    mode,
                )
                .map_err(|e| e.to_string())?;
                let agreed = compare(
                    got,
                    oracle_point_ap(&inst, class, threshold, mode),
                    &format!("trial {trial} class {class} threshold {threshold} {mode:?}"),
                )?;
                nonzero += usize::from(agreed && got != Some(0.0));
            }
        }
    }
    Ok(nonzero)
}

// ---------------------------------------------------------------- streaming

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

use woad::model::{ModelDims, WoadModel};
use woad::streaming::{run_stream, StreamConfig, StreamSession};

thread_local! {
    static LIVE_BYTES: Cell<isize> = const { Cell::new(0) };
}

/// System allocator that tracks the bytes live on the calling thread.
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let _ = LIVE_BYTES.try_with(|b| b.set(b.get() + layout.size() as isize));
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        let _ = LIVE_BYTES.try_with(|b| b.set(b.get() - layout.size() as isize));
        System.dealloc(ptr, layout)
    }
}

pub fn live_bytes() -> isize {
    LIVE_BYTES.with(|b| b.get())
}

pub fn random_stream_model(rng: &mut impl Rng) -> (WoadModel, StreamConfig) {
    let dims = ModelDims {
        input_dim: rng.random_range(2..=6),
        feature_dim: rng.random_range(2..=6),
        hidden_dim: rng.random_range(2..=8),
        num_classes: rng.random_range(1..=4),
    };
    let model = WoadModel::init(dims, rng.random_bool(0.75), rng);
    let cfg = StreamConfig {
        window: rng.random_range(0..=4),
        threshold: 0.0,
        use_start_head: rng.random_bool(0.8),
    };
    (model, cfg)
}

/// Streams a random video, rewrites every frame from a random cut onwards and
/// streams again; the outputs before the cut must be bit-identical. Returns
/// the number of prefix frames compared.
pub fn check_causality(trials: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for trial in 0..trials {
        let (model, cfg) = random_stream_model(&mut rng);
        let t = rng.random_range(2..=40);
        let d = model.dims().input_dim;
        let original = DenseMatrix::from_fn(t, d, |_, _| rng.random_range(-3.0..3.0));
        let cut = rng.random_range(1..t);
        let mut mutated = original.clone();
        for r in cut..t {
            for v in mutated.row_mut(r) {
                *v = rng.random_range(-30.0..30.0);
            }
        }
        let a = run_stream(&model, "v", &original, 4.0, cfg).map_err(|e| e.to_string())?;
        let b = run_stream(&model, "v", &mutated, 4.0, cfg).map_err(|e| e.to_string())?;
        let bits = |s: &StreamStep| -> Vec<u64> {
            s.output
                .action
                .iter()
                .chain(&s.output.start)
                .chain(&s.combined)
                .map(|v| v.to_bits())
                .collect()
        };
        for f in 0..cut {
            let (x, y) = (&a.steps[f], &b.steps[f]);
            if bits(x) != bits(y) || x.predicted != y.predicted || x.event != y.event {
                return Err(format!(
                    "trial {trial}: frame {f} differs with the cut at {cut}"
                ));
            }
        }
        compared += cut;
    }
    Ok(compared)
}

/// Streams `frames` frames through one session. Returns the peak growth of
/// live heap bytes after a warm-up, and the largest pooling ring seen.
pub fn stream_memory(frames: u64) -> Result<(isize, usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = ModelDims {
        input_dim: 8,
        feature_dim: 8,
        hidden_dim: 8,
        num_classes: 3,
    };
    let model = WoadModel::init(dims, true, &mut rng);
    let cfg = StreamConfig::default();
    let mut session = StreamSession::new(&model, 4.0, cfg).map_err(|e| e.to_string())?;
    let frame: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut input = frame.clone();
    let mut baseline = None;
    let mut peak_growth = 0isize;
    let mut max_ring = 0;
    for t in 0..frames {
        for (k, v) in input.iter_mut().enumerate() {
            *v = frame[k] * (((t as usize + k) % 7) as f64 - 3.0);
        }
        let step = session.step(&model, &input).map_err(|e| e.to_string())?;
        drop(step);
        max_ring = max_ring.max(session.oar_state().hidden_ring.len());
        if t == 1000 {
            baseline = Some(live_bytes());
        }
        if let Some(base) = baseline {
            peak_growth = peak_growth.max(live_bytes() - base);
        }
    }
    Ok((peak_growth, max_ring, cfg.window + 1))
}

// --------------------------------------------------------------- reductions

use woad::gradients::GradientInstance;
use woad::oar::{forward_sequence, start_loss, StartNormalization};
use woad::training::total_loss;

/// Largest `|focal(γ=0) − cross-entropy|` over random selections.
pub fn focal_gamma_zero_gap(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.random_range(1..=30);
        let probs = DenseMatrix::from_fn(n, 2, |_, _| 0.0);
        let mut probs = probs;
        for r in 0..n {
            let p = rng.random_range(0.001..0.999);
            probs[(r, 0)] = 1.0 - p;
            probs[(r, 1)] = p;
        }
        let bits: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let selected: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
        if selected.is_empty() {
            continue;
        }
        let focal = start_loss(&probs, &bits, &selected, 0.0, StartNormalization::Selected)
            .unwrap()
            .loss;
        let ce = -selected
            .iter()
            .map(|&j| probs[(j, usize::from(bits[j]))].ln())
            .sum::<f64>()
            / selected.len() as f64;
        worst = worst.max((focal - ce).abs());
    }
    worst
}

/// Number of random batches where `λ = 0` gives a total different from
/// `L_OAR` in any bit.
pub fn lambda_zero_mismatches(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let mut inst = GradientInstance::random(&mut rng);
            inst.cfg.lambda = 0.0;
            let batch = inst.batch();
            let loss =
                total_loss(&mut inst.model.clone(), &batch, &inst.cfg, &inst.selection).unwrap();
            loss.total.to_bits() != loss.oar.to_bits()
        })
        .count()
}

/// Number of random sequences where the `M = 0` pool differs from the
/// current hidden in any bit.
pub fn window_zero_mismatches(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let inst = GradientInstance::random(&mut rng);
            let t = rng.random_range(1..=20);
            let d = inst.model.oar.cell.input_dim();
            let inputs = DenseMatrix::from_fn(t, d, |_, _| rng.random_range(-2.0..2.0));
            let fwd = forward_sequence(&inst.model.oar, 0, &inputs).unwrap();
            fwd.pooled.iter().zip(&fwd.hiddens).any(|(p, h)| {
                p.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                    != h.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            })
        })
        .count()
}
