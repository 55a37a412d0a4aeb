//! Causal frame-by-frame inference and action-start event emission.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::trunk::trunk_forward_frame;
use crate::labels::BACKGROUND;
use crate::model::WoadModel;
use crate::numerics::matrix::DenseMatrix;
use crate::oar::{heads, lstm_step, temporal_pool, FrameOutput, OarState};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamConfig {
    /// Pooling window `M`.
    pub window: usize,
    /// Strict lower bound on the winning combined score of an event.
    pub threshold: f64,
    /// When false, the combined scores are the action probabilities alone.
    pub use_start_head: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            window: 3,
            threshold: 0.0,
            use_start_head: true,
        }
    }
}

impl From<&TrainConfig> for StreamConfig {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            window: cfg.effective_window(),
            threshold: cfg.start_threshold,
            use_start_head: !cfg.ablations.no_start_head,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StartEvent {
    pub frame: u64,
    pub time_s: f64,
    /// Action class in `1..=C`.
    pub class: usize,
    /// The combined start score of `class` at `frame`.
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamStep {
    pub frame: u64,
    pub time_s: f64,
    pub output: FrameOutput,
    /// Combined start scores, `C+1` entries.
    pub combined: Vec<f64>,
    /// `argmax` of `combined`, lowest index on ties.
    pub predicted: usize,
    pub event: Option<StartEvent>,
}

/// `as_c = a_c · st_start` for actions and `as_0 = a_0 · st_non_start`.
pub fn combine_start_scores(action: &[f64], start: &[f64]) -> Vec<f64> {
    action
        .iter()
        .enumerate()
        .map(|(c, &a)| {
            if c == BACKGROUND {
                a * start[0]
            } else {
                a * start[1]
            }
        })
        .collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// The three start criteria: an action class wins, its combined score
/// exceeds the threshold, and it differs from the previous frame's winner.
pub fn is_start(predicted: usize, previous: usize, confidence: f64, threshold: f64) -> bool {
    predicted != BACKGROUND && confidence > threshold && predicted != previous
}

/// State of one stream: recurrent state, pooling ring, previous predicted
/// class and frame clock.
#[derive(Clone, Debug)]
pub struct StreamSession {
    state: OarState,
    previous: usize,
    frame: u64,
    fps: f64,
    config: StreamConfig,
    input_dim: usize,
    poisoned: bool,
}

impl StreamSession {
    pub fn new(model: &WoadModel, fps: f64, config: StreamConfig) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::domain(format!("frame rate {fps} must be positive")));
        }
        Ok(Self {
            state: OarState::new(model.dims().hidden_dim, config.window),
            previous: BACKGROUND,
            frame: 0,
            fps,
            config,
            input_dim: model.dims().input_dim,
            poisoned: false,
        })
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn previous_class(&self) -> usize {
        self.previous
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    /// Recurrent state, exposed for memory and causality checks.
    pub fn oar_state(&self) -> &OarState {
        &self.state
    }

    /// Consumes one raw feature vector.
    pub fn step(&mut self, model: &WoadModel, raw: &[f64]) -> Result<StreamStep> {
        if self.poisoned {
            return Err(Error::Poisoned);
        }
        let result = self.advance(model, raw);
        if result.is_err() {
            self.poisoned = true;
        }
        result
    }

    fn advance(&mut self, model: &WoadModel, raw: &[f64]) -> Result<StreamStep> {
        if raw.len() != self.input_dim {
            return Err(Error::domain(format!(
                "frame {} has {} features, expected {}",
                self.frame,
                raw.len(),
                self.input_dim
            )));
        }
        let features = trunk_forward_frame(raw, &model.trunk)?;
        lstm_step(&mut self.state, &features, &model.oar.cell)?;
        let pooled = temporal_pool(&self.state.hidden_ring)?;
        let output = heads(
            &self.state.h,
            &pooled.value,
            &model.oar.w_action,
            &model.oar.w_start,
        )?;
        let combined = if self.config.use_start_head {
            combine_start_scores(&output.action, &output.start)
        } else {
            output.action.clone()
        };
        let predicted = argmax_lowest(&combined);
        let time_s = self.frame as f64 / self.fps;
        let event = is_start(
            predicted,
            self.previous,
            combined[predicted],
            self.config.threshold,
        )
        .then_some(StartEvent {
            frame: self.frame,
            time_s,
            class: predicted,
            confidence: combined[predicted],
        });
        self.previous = predicted;
        let step = StreamStep {
            frame: self.frame,
            time_s,
            output,
            combined,
            predicted,
            event,
        };
        self.frame += 1;
        Ok(step)
    }
}

/// Per-frame record of a whole stream.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionLog {
    pub video_id: String,
    pub fps: f64,
    pub num_classes: usize,
    pub steps: Vec<StreamStep>,
}

impl DetectionLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn events(&self) -> impl Iterator<Item = &StartEvent> {
        self.steps.iter().filter_map(|s| s.event.as_ref())
    }

    /// Header line followed by one tab-separated line per frame: frame, time,
    /// `C+1` action probabilities, 2 start probabilities, `C+1` combined
    /// scores, predicted class, event flag. Reals carry 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# video {} fps {} classes {}\n",
            self.video_id, self.fps, self.num_classes
        );
        for s in &self.steps {
            write!(out, "{}\t{:.8e}", s.frame, s.time_s).expect("write to string");
            for v in s
                .output
                .action
                .iter()
                .chain(&s.output.start)
                .chain(&s.combined)
            {
                write!(out, "\t{v:.8e}").expect("write to string");
            }
            writeln!(out, "\t{}\t{}", s.predicted, u8::from(s.event.is_some()))
                .expect("write to string");
        }
        out
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Manifest {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "empty detection log".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (video_id, fps, num_classes) = match fields.as_slice() {
            ["#", "video", id, "fps", fps, "classes", c] => (
                id.to_string(),
                fps.parse::<f64>()
                    .map_err(|e| err(1, format!("fps: {e}")))?,
                c.parse::<usize>()
                    .map_err(|e| err(1, format!("classes: {e}")))?,
            ),
            _ => return Err(err(1, format!("malformed header `{header}`"))),
        };
        let k = num_classes + 1;
        let expected = 2 + k + 2 + k + 2;
        let mut steps = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != expected {
                return Err(err(
                    lineno,
                    format!("{} fields, expected {expected}", cols.len()),
                ));
            }
            let real = |j: usize| {
                cols[j]
                    .parse::<f64>()
                    .map_err(|e| err(lineno, format!("field {}: {e}", j + 1)))
            };
            let frame = cols[0]
                .parse::<u64>()
                .map_err(|e| err(lineno, format!("frame: {e}")))?;
            let time_s = real(1)?;
            let action = (2..2 + k).map(real).collect::<Result<Vec<_>>>()?;
            let start = (2 + k..4 + k).map(real).collect::<Result<Vec<_>>>()?;
            let combined = (4 + k..4 + 2 * k).map(real).collect::<Result<Vec<_>>>()?;
            let predicted = cols[4 + 2 * k]
                .parse::<usize>()
                .ok()
                .filter(|&c| c < k)
                .ok_or_else(|| err(lineno, format!("predicted class `{}`", cols[4 + 2 * k])))?;
            let event = match cols[5 + 2 * k] {
                "0" => None,
                "1" if predicted != BACKGROUND => Some(StartEvent {
                    frame,
                    time_s,
                    class: predicted,
                    confidence: combined[predicted],
                }),
                other => return Err(err(lineno, format!("event flag `{other}`"))),
            };
            steps.push(StreamStep {
                frame,
                time_s,
                output: FrameOutput { action, start },
                combined,
                predicted,
                event,
            });
        }
        Ok(Self {
            video_id,
            fps,
            num_classes,
            steps,
        })
    }
}

/// Streams every row of `features` through a fresh session.
pub fn run_stream(
    model: &WoadModel,
    video_id: &str,
    features: &DenseMatrix,
    fps: f64,
    config: StreamConfig,
) -> Result<DetectionLog> {
    if features.rows() == 0 {
        return Err(Error::domain(format!("video `{video_id}` has no frames")));
    }
    let mut session = StreamSession::new(model, fps, config)?;
    let steps = (0..features.rows())
        .map(|t| session.step(model, features.row(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionLog {
        video_id: video_id.to_string(),
        fps,
        num_classes: model.dims().num_classes,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> WoadModel {
        let dims = ModelDims {
            input_dim: 4,
            feature_dim: 4,
            hidden_dim: 5,
            num_classes: 2,
        };
        WoadModel::init(dims, true, &mut ChaCha8Rng::seed_from_u64(9))
    }

    #[test]
    fn combined_scores_example() {
        let a = [0.2, 0.8];
        let st = [0.3, 0.7];
        let s = combine_start_scores(&a, &st);
        assert!((s[0] - 0.06).abs() < 1e-15 && (s[1] - 0.56).abs() < 1e-15);
        assert_eq!(argmax_lowest(&s), 1);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[0.5, 0.5]), 0);
        assert_eq!(argmax_lowest(&[0.1, 0.3, 0.3]), 1);
    }

    fn fire(classes: &[usize]) -> Vec<usize> {
        let mut prev = BACKGROUND;
        let mut out = Vec::new();
        for (t, &c) in classes.iter().enumerate() {
            if is_start(c, prev, 0.5, 0.0) {
                out.push(t);
            }
            prev = c;
        }
        out
    }

    #[test]
    fn start_criteria() {
        assert_eq!(fire(&[0, 1, 1, 0, 1]), vec![1, 4]);
        assert_eq!(fire(&[2; 9]), vec![0]);
        assert_eq!(fire(&[1, 2, 2, 1]), vec![0, 1, 3]);
        assert!(!is_start(1, 0, 0.0, 0.0));
    }

    #[test]
    fn dimension_mismatch_poisons() {
        let m = model();
        let mut s = StreamSession::new(&m, 1.0, StreamConfig::default()).unwrap();
        assert!(s.step(&m, &[0.0; 3]).is_err());
        assert!(s.is_poisoned());
        assert!(matches!(s.step(&m, &[0.0; 4]), Err(Error::Poisoned)));
    }

    #[test]
    fn log_round_trip_and_manual_loop() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let feats =
            DenseMatrix::from_fn(12, 4, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let log = run_stream(&m, "v", &feats, 2.0, StreamConfig::default()).unwrap();
        assert_eq!(log.len(), 12);

        let mut s = StreamSession::new(&m, 2.0, StreamConfig::default()).unwrap();
        for t in 0..12 {
            assert_eq!(s.step(&m, feats.row(t)).unwrap(), log.steps[t]);
        }

        let parsed = DetectionLog::parse(&log.to_text(), "log").unwrap();
        assert_eq!(parsed.len(), 12);
        assert_eq!(parsed.to_text(), log.to_text());
        assert_eq!(parsed.events().count(), log.events().count());
    }

    proptest! {
        #[test]
        fn combined_scores_are_sub_distributions(
            a in proptest::collection::vec(0.0f64..1.0, 2..6),
            s in 0.0f64..1.0,
        ) {
            let total: f64 = a.iter().sum();
            let a: Vec<f64> = a.iter().map(|x| x / total.max(1e-12)).collect();
            let c = combine_start_scores(&a, &[1.0 - s, s]);
            prop_assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(c.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }
}
