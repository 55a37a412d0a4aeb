//! Frame-based and point-based average precision.
//!
//! Ranked lists are scored block-wise: items with equal confidence form one
//! block, and the block contributes `precision at its end × recall gained`.
//! Without ties this is the usual uninterpolated AP; constant scores give the
//! positive fraction regardless of the order of tied items.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::streaming::DetectionLog;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtSegment {
    /// Action class in `1..=C`.
    pub class: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoGroundTruth {
    pub video_id: String,
    pub fps: f64,
    pub num_frames: usize,
    pub segments: Vec<GtSegment>,
}

impl VideoGroundTruth {
    /// Frame `t` belongs to a segment when its center `(t + ½)/fps` lies in
    /// `[start_s, end_s)`.
    pub fn frame_in_class(&self, frame: usize, class: usize) -> bool {
        let center = (frame as f64 + 0.5) / self.fps;
        self.segments
            .iter()
            .any(|s| s.class == class && s.start_s <= center && center < s.end_s)
    }

    pub fn start_times(&self, class: usize) -> Vec<f64> {
        self.segments
            .iter()
            .filter(|s| s.class == class)
            .map(|s| s.start_s)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ApMode {
    #[default]
    Uninterpolated,
    /// Mean of the interpolated precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Precision/recall after each tie block of a ranking sorted by descending
/// confidence.
fn block_curve(ranked: &[(f64, bool)], total_positives: usize) -> Vec<(f64, f64)> {
    let mut curve = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < ranked.len() {
        let conf = ranked[i].0;
        while i < ranked.len() && ranked[i].0 == conf {
            seen += 1;
            tp += usize::from(ranked[i].1);
            i += 1;
        }
        curve.push((tp as f64 / seen as f64, tp as f64 / total_positives as f64));
    }
    curve
}

/// AP of `(confidence, is_true_positive)` items against `total_positives`
/// relevant items. `None` when there is nothing to retrieve.
pub fn average_precision(
    items: &[(f64, bool)],
    total_positives: usize,
    mode: ApMode,
) -> Option<f64> {
    if total_positives == 0 {
        return None;
    }
    let mut ranked = items.to_vec();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let curve = block_curve(&ranked, total_positives);
    Some(match mode {
        ApMode::Uninterpolated => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for &(p, r) in &curve {
                ap += p * (r - prev_recall);
                prev_recall = r;
            }
            ap
        }
        ApMode::ElevenPoint => {
            (0..=10)
                .map(|k| {
                    let level = k as f64 / 10.0;
                    curve
                        .iter()
                        .filter(|&&(_, r)| r >= level - 1e-12)
                        .map(|&(p, _)| p)
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 11.0
        }
    })
}

fn ground_truth_map(gt: &[VideoGroundTruth]) -> BTreeMap<&str, &VideoGroundTruth> {
    gt.iter().map(|g| (g.video_id.as_str(), g)).collect()
}

fn lookup<'a>(
    map: &BTreeMap<&str, &'a VideoGroundTruth>,
    video_id: &str,
) -> Result<&'a VideoGroundTruth> {
    map.get(video_id)
        .copied()
        .ok_or_else(|| Error::domain(format!("no ground truth for video `{video_id}`")))
}

/// F-AP of `class`: every logged frame ranked by its action probability.
pub fn frame_ap(
    class: usize,
    logs: &[DetectionLog],
    gt: &[VideoGroundTruth],
    mode: ApMode,
) -> Result<Option<f64>> {
    let map = ground_truth_map(gt);
    let mut items = Vec::new();
    let mut positives = 0;
    for log in logs {
        let g = lookup(&map, &log.video_id)?;
        for (t, step) in log.steps.iter().enumerate() {
            let score = *step.output.action.get(class).ok_or_else(|| {
                Error::domain(format!("class {class} missing from log `{}`", log.video_id))
            })?;
            let positive = g.frame_in_class(t, class);
            positives += usize::from(positive);
            items.push((score, positive));
        }
    }
    Ok(average_precision(&items, positives, mode))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictedStart {
    pub video_id: String,
    pub class: usize,
    pub time_s: f64,
    pub confidence: f64,
}

pub fn collect_starts(logs: &[DetectionLog]) -> Vec<PredictedStart> {
    logs.iter()
        .flat_map(|log| {
            log.events().map(|e| PredictedStart {
                video_id: log.video_id.clone(),
                class: e.class,
                time_s: e.time_s,
                confidence: e.confidence,
            })
        })
        .collect()
}

/// Marks each class-`class` prediction as a true or false positive.
/// Predictions are visited by descending confidence (ties by video id, then
/// time); each claims the nearest unmatched same-video start within
/// `threshold_s`, the earliest on equal distance.
pub fn match_starts(
    class: usize,
    starts: &[PredictedStart],
    gt: &[VideoGroundTruth],
    threshold_s: f64,
) -> Result<(Vec<(f64, bool)>, usize)> {
    let map = ground_truth_map(gt);
    let mut gt_starts: BTreeMap<&str, Vec<(f64, bool)>> = BTreeMap::new();
    let mut total = 0;
    for g in gt {
        let mut times = g.start_times(class);
        times.sort_by(f64::total_cmp);
        total += times.len();
        gt_starts.insert(&g.video_id, times.into_iter().map(|t| (t, false)).collect());
    }
    let mut preds: Vec<&PredictedStart> = starts.iter().filter(|s| s.class == class).collect();
    preds.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.video_id.cmp(&b.video_id))
            .then_with(|| a.time_s.total_cmp(&b.time_s))
    });
    let mut items = Vec::with_capacity(preds.len());
    for p in preds {
        lookup(&map, &p.video_id)?;
        let candidates = gt_starts
            .get_mut(p.video_id.as_str())
            .expect("every video has an entry");
        let mut best: Option<(usize, f64)> = None;
        for (k, &(t, used)) in candidates.iter().enumerate() {
            let d = (p.time_s - t).abs();
            if !used && d <= threshold_s && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        if let Some((k, _)) = best {
            candidates[k].1 = true;
        }
        items.push((p.confidence, best.is_some()));
    }
    Ok((items, total))
}

/// P-AP of `class` at `threshold_s` seconds; `None` without ground-truth starts.
pub fn point_ap(
    class: usize,
    starts: &[PredictedStart],
    gt: &[VideoGroundTruth],
    threshold_s: f64,
    mode: ApMode,
) -> Result<Option<f64>> {
    let (items, total) = match_starts(class, starts, gt, threshold_s)?;
    Ok(average_precision(&items, total, mode))
}

/// Mean over classes with a defined AP.
pub fn mean_ap(per_class: &[Option<f64>]) -> Result<f64> {
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::NoValidClass);
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

pub const DEFAULT_THRESHOLDS_S: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub struct PointApRow {
    pub threshold_s: f64,
    /// Index `c − 1` holds class `c`.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// Index `c − 1` holds class `c`.
    pub frame_ap: Vec<Option<f64>>,
    pub mean_frame_ap: f64,
    pub point_ap: Vec<PointApRow>,
}

impl EvaluationReport {
    pub fn mean_point_ap(&self, threshold_s: f64) -> Option<f64> {
        self.point_ap
            .iter()
            .find(|r| r.threshold_s == threshold_s)
            .map(|r| r.mean)
    }

    /// Aligned table with one column per threshold.
    pub fn to_table(&self) -> String {
        let mut head = format!("{:>8}", "F-AP");
        let mut vals = format!("{:>8.4}", self.mean_frame_ap);
        for r in &self.point_ap {
            let _ = write!(head, " {:>8}", format!("P@{}s", r.threshold_s));
            let _ = write!(vals, " {:>8.4}", r.mean);
        }
        format!("{head}\n{vals}\n")
    }

    /// `key=value` lines: `mean_f_ap`, `mean_p_ap@<t>s`, and per-class values
    /// (`nan` marks an undefined class).
    pub fn to_key_values(&self) -> String {
        let fmt = |v: &Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.6}"));
        let mut out = format!("mean_f_ap={:.6}\n", self.mean_frame_ap);
        for r in &self.point_ap {
            let _ = writeln!(out, "mean_p_ap@{}s={:.6}", r.threshold_s, r.mean);
        }
        for (i, v) in self.frame_ap.iter().enumerate() {
            let _ = writeln!(out, "f_ap.class{}={}", i + 1, fmt(v));
        }
        for r in &self.point_ap {
            for (i, v) in r.per_class.iter().enumerate() {
                let _ = writeln!(out, "p_ap@{}s.class{}={}", r.threshold_s, i + 1, fmt(v));
            }
        }
        out
    }
}

pub fn evaluate(
    logs: &[DetectionLog],
    gt: &[VideoGroundTruth],
    num_classes: usize,
    thresholds_s: &[f64],
    mode: ApMode,
) -> Result<EvaluationReport> {
    let frame_ap = (1..=num_classes)
        .map(|c| frame_ap(c, logs, gt, mode))
        .collect::<Result<Vec<_>>>()?;
    for (c, ap) in frame_ap.iter().enumerate() {
        if ap.is_none() {
            log::warn!(
                "class {} has no positive frames; excluded from mean F-AP",
                c + 1
            );
        }
    }
    let mean_frame_ap = mean_ap(&frame_ap)?;
    let starts = collect_starts(logs);
    let point_ap = thresholds_s
        .iter()
        .map(|&threshold_s| {
            let per_class = (1..=num_classes)
                .map(|c| point_ap(c, &starts, gt, threshold_s, mode))
                .collect::<Result<Vec<_>>>()?;
            let mean = mean_ap(&per_class)?;
            Ok(PointApRow {
                threshold_s,
                per_class,
                mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        frame_ap,
        mean_frame_ap,
        point_ap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ap(items: &[(f64, bool)]) -> f64 {
        let p = items.iter().filter(|i| i.1).count();
        average_precision(items, p, ApMode::Uninterpolated).unwrap()
    }

    #[test]
    fn ap_examples() {
        assert_eq!(ap(&[(0.9, true), (0.8, true), (0.1, false)]), 1.0);
        assert!((ap(&[(0.9, true), (0.5, false), (0.2, true)]) - 5.0 / 6.0).abs() < 1e-15);
        assert!((ap(&[(0.5, false), (0.5, true), (0.5, false), (0.5, true)]) - 0.5).abs() < 1e-15);
        assert_eq!(
            average_precision(&[(0.3, false)], 0, ApMode::Uninterpolated),
            None
        );
        assert_eq!(average_precision(&[], 2, ApMode::Uninterpolated), Some(0.0));
    }

    #[test]
    fn eleven_point_perfect() {
        let items = [(0.9, true), (0.1, false)];
        assert!((average_precision(&items, 1, ApMode::ElevenPoint).unwrap() - 1.0).abs() < 1e-15);
    }

    fn gt_one(start: f64) -> Vec<VideoGroundTruth> {
        vec![VideoGroundTruth {
            video_id: "v".into(),
            fps: 1.0,
            num_frames: 100,
            segments: vec![GtSegment {
                class: 1,
                start_s: start,
                end_s: start + 5.0,
            }],
        }]
    }

    fn pred(t: f64, conf: f64) -> PredictedStart {
        PredictedStart {
            video_id: "v".into(),
            class: 1,
            time_s: t,
            confidence: conf,
        }
    }

    #[test]
    fn point_ap_examples() {
        let gt = gt_one(10.0);
        let preds = [pred(10.5, 0.9), pred(20.0, 0.8)];
        assert_eq!(
            point_ap(1, &preds, &gt, 1.0, ApMode::Uninterpolated).unwrap(),
            Some(1.0)
        );
        assert_eq!(
            point_ap(1, &preds, &gt, 0.2, ApMode::Uninterpolated).unwrap(),
            Some(0.0)
        );

        let double = [pred(10.2, 0.9), pred(9.9, 0.8)];
        let (items, total) = match_starts(1, &double, &gt, 1.0).unwrap();
        assert_eq!(total, 1);
        assert_eq!(items.iter().filter(|i| i.1).count(), 1);

        assert_eq!(
            point_ap(1, &[], &gt, 1.0, ApMode::Uninterpolated).unwrap(),
            Some(0.0)
        );
        assert_eq!(
            point_ap(2, &preds, &gt, 1.0, ApMode::Uninterpolated).unwrap(),
            None
        );
    }

    #[test]
    fn frame_membership_uses_centers() {
        let g = VideoGroundTruth {
            video_id: "v".into(),
            fps: 2.0,
            num_frames: 10,
            segments: vec![GtSegment {
                class: 1,
                start_s: 1.0,
                end_s: 2.0,
            }],
        };
        let inside: Vec<usize> = (0..10).filter(|&t| g.frame_in_class(t, 1)).collect();
        assert_eq!(inside, vec![2, 3]);
    }

    #[test]
    fn means() {
        assert_eq!(mean_ap(&[Some(0.4)]).unwrap(), 0.4);
        assert_eq!(mean_ap(&[Some(1.0), None, Some(0.5)]).unwrap(), 0.75);
        assert!(matches!(mean_ap(&[None, None]), Err(Error::NoValidClass)));
    }

    #[test]
    fn anti_perfect_closed_form() {
        for (n, p) in [(5usize, 2usize), (10, 3), (7, 7), (9, 1)] {
            let items: Vec<(f64, bool)> = (0..n).map(|i| ((n - i) as f64, i >= n - p)).collect();
            let expected = (1..=p).map(|k| k as f64 / (n - p + k) as f64).sum::<f64>() / p as f64;
            assert!((ap(&items) - expected).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(
            items in proptest::collection::vec((0u8..6, any::<bool>()), 1..30),
        ) {
            let base: Vec<(f64, bool)> = items.iter().map(|&(s, p)| (s as f64 / 5.0, p)).collect();
            let warped: Vec<(f64, bool)> = base.iter().map(|&(s, p)| ((3.0 * s).exp() - 7.0, p)).collect();
            let pos = base.iter().filter(|i| i.1).count();
            prop_assert_eq!(
                average_precision(&base, pos, ApMode::Uninterpolated),
                average_precision(&warped, pos, ApMode::Uninterpolated)
            );
        }

        #[test]
        fn point_ap_monotone_in_threshold(
            gt_times in proptest::collection::vec(0.0f64..30.0, 1..5),
            preds in proptest::collection::vec((0.0f64..30.0, 0u8..5), 0..8),
            lo in 0.0f64..5.0,
            extra in 0.0f64..5.0,
        ) {
            let gt = vec![VideoGroundTruth {
                video_id: "v".into(),
                fps: 1.0,
                num_frames: 40,
                segments: gt_times.iter().map(|&s| GtSegment { class: 1, start_s: s, end_s: s + 1.0 }).collect(),
            }];
            let starts: Vec<PredictedStart> = preds.iter().map(|&(t, c)| pred(t, c as f64 / 4.0)).collect();
            let a = point_ap(1, &starts, &gt, lo, ApMode::Uninterpolated).unwrap().unwrap();
            let b = point_ap(1, &starts, &gt, lo + extra, ApMode::Uninterpolated).unwrap().unwrap();
            prop_assert!(b >= a - 1e-12, "AP dropped from {} to {}", a, b);
        }
    }
}
