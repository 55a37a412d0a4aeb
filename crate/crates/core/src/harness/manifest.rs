//! Corpus manifest: a tab-separated text file listing videos, their feature
//! files, labels and (optional) segment annotations.
//!
//! ```text
//! # woad-manifest v1
//! #classes	jump,run,throw
//! video_id	feature_path	frame_rate	split	classes	segments
//! v001	feats/v001.woadf	2	train	1	1:3.5:9;1:20:24.5
//! v002	feats/v002.woadf	2	test	2,3	-
//! ```
//!
//! `classes` are comma-separated 1-based indices into the class vocabulary;
//! `segments` are `class:start_s:end_s` joined by `;`, or `-` when the video
//! has no segment annotation. Feature paths are relative to the manifest.

// The example above is literal TSV.
#![allow(clippy::tabs_in_doc_comments)]

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{GtSegment, VideoGroundTruth};
use crate::harness::features::load_features;
use crate::labels::{LabelTrack, Provenance};
use crate::numerics::matrix::DenseMatrix;
use crate::tpg::VideoLabel;
use crate::training::{TrainingSet, TrainingVideo};

pub const MANIFEST_MAGIC: &str = "# woad-manifest v1";
pub const MANIFEST_COLUMNS: &str = "video_id\tfeature_path\tframe_rate\tsplit\tclasses\tsegments";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    /// As written in the manifest.
    pub feature_path: PathBuf,
    /// Feature rows per second.
    pub frame_rate: f64,
    pub split: Split,
    pub classes: BTreeSet<usize>,
    pub segments: Option<Vec<GtSegment>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusManifest {
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// Directory feature paths are resolved against.
    pub base_dir: PathBuf,
}

/// One test video ready for streaming and scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalVideo {
    pub features: DenseMatrix,
    pub ground_truth: VideoGroundTruth,
}

/// Frames whose centers fall in `[start_s, end_s)`, as an inclusive range.
pub fn segment_frames(segment: &GtSegment, fps: f64, num_frames: usize) -> Option<(usize, usize)> {
    let first = (segment.start_s * fps - 0.5).ceil().max(0.0) as usize;
    let mut last = None;
    for t in first..num_frames {
        let center = (t as f64 + 0.5) / fps;
        if center >= segment.end_s {
            break;
        }
        if center >= segment.start_s {
            last = Some(t);
        }
    }
    last.map(|l| (first, l))
}

impl CorpusManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.feature_path)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn parse(text: &str, source_name: &str, base_dir: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Manifest {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == MANIFEST_MAGIC => {}
            _ => return Err(err(1, format!("first line must be `{MANIFEST_MAGIC}`"))),
        }
        let class_names: Vec<String> = match lines.next() {
            Some((n, l)) => {
                let names = l
                    .strip_prefix("#classes\t")
                    .ok_or_else(|| err(n, "second line must be `#classes<TAB>name,...`".into()))?;
                let names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
                if names.iter().any(String::is_empty) {
                    return Err(err(n, "empty class name".into()));
                }
                names
            }
            None => return Err(err(2, "missing class vocabulary line".into())),
        };
        match lines.next() {
            Some((_, l)) if l.trim_end() == MANIFEST_COLUMNS => {}
            Some((n, _)) => {
                return Err(err(
                    n,
                    format!("column header must be `{MANIFEST_COLUMNS}`"),
                ))
            }
            None => return Err(err(3, "missing column header".into())),
        }
        let num_classes = class_names.len();
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in lines {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(err(n, format!("{} columns, expected 6", cols.len())));
            }
            let video_id = cols[0].to_string();
            if video_id.is_empty() || video_id.chars().any(char::is_whitespace) {
                return Err(err(n, format!("invalid video id `{video_id}`")));
            }
            if !seen.insert(video_id.clone()) {
                return Err(err(n, format!("duplicate video id `{video_id}`")));
            }
            if cols[1].is_empty() {
                return Err(err(n, "empty feature path".into()));
            }
            let frame_rate: f64 = cols[2]
                .parse()
                .ok()
                .filter(|r: &f64| r.is_finite() && *r > 0.0)
                .ok_or_else(|| {
                    err(
                        n,
                        format!("frame rate `{}` must be a positive number", cols[2]),
                    )
                })?;
            let split = match cols[3] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(err(n, format!("split `{other}` must be train or test"))),
            };
            let class_of = |s: &str, what: &str| -> Result<usize> {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|c| (1..=num_classes).contains(c))
                    .ok_or_else(|| err(n, format!("{what} class `{s}` outside 1..={num_classes}")))
            };
            let classes = cols[4]
                .split(',')
                .map(|s| class_of(s, "video"))
                .collect::<Result<BTreeSet<_>>>()?;
            let segments = if cols[5] == "-" {
                None
            } else {
                let mut segs = Vec::new();
                for s in cols[5].split(';') {
                    let parts: Vec<&str> = s.split(':').collect();
                    if parts.len() != 3 {
                        return Err(err(n, format!("segment `{s}` must be class:start_s:end_s")));
                    }
                    let class = class_of(parts[0], "segment")?;
                    if !classes.contains(&class) {
                        return Err(err(
                            n,
                            format!("segment class {class} not among the video classes"),
                        ));
                    }
                    let time = |p: &str| {
                        p.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite() && *x >= 0.0)
                            .ok_or_else(|| {
                                err(
                                    n,
                                    format!("segment time `{p}` must be a non-negative number"),
                                )
                            })
                    };
                    let (start_s, end_s) = (time(parts[1])?, time(parts[2])?);
                    if start_s > end_s {
                        return Err(err(n, format!("segment `{s}` ends before it starts")));
                    }
                    segs.push(GtSegment {
                        class,
                        start_s,
                        end_s,
                    });
                }
                Some(segs)
            };
            entries.push(ManifestEntry {
                video_id,
                feature_path: PathBuf::from(cols[1]),
                frame_rate,
                split,
                classes,
                segments,
            });
        }
        Ok(Self {
            class_names,
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MANIFEST_MAGIC}\n#classes\t{}\n{MANIFEST_COLUMNS}\n",
            self.class_names.join(",")
        );
        for e in &self.entries {
            let classes: Vec<String> = e.classes.iter().map(|c| c.to_string()).collect();
            let segments = match &e.segments {
                None => "-".to_string(),
                Some(s) => s
                    .iter()
                    .map(|g| format!("{}:{}:{}", g.class, g.start_s, g.end_s))
                    .collect::<Vec<_>>()
                    .join(";"),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                e.video_id,
                e.feature_path.display(),
                e.frame_rate,
                e.split.as_str(),
                classes.join(","),
                segments
            );
        }
        out
    }

    fn load_checked(&self, entry: &ManifestEntry) -> Result<DenseMatrix> {
        let features = load_features(&self.resolve(entry))?;
        let duration = features.rows() as f64 / entry.frame_rate;
        for s in entry.segments.iter().flatten() {
            if s.end_s > duration + 1e-9 {
                return Err(Error::domain(format!(
                    "video `{}`: segment ending at {}s exceeds the {duration}s duration",
                    entry.video_id, s.end_s
                )));
            }
        }
        Ok(features)
    }

    /// Loads every training video; annotated ones carry ground-truth tracks.
    pub fn training_set(&self) -> Result<TrainingSet> {
        let mut videos = Vec::new();
        for e in self.entries(Split::Train) {
            let features = self.load_checked(e)?;
            let ground_truth = match &e.segments {
                None => None,
                Some(segs) => {
                    let t = features.rows();
                    let frames: Vec<(usize, usize, usize)> = segs
                        .iter()
                        .filter_map(|s| {
                            segment_frames(s, e.frame_rate, t).map(|(a, b)| (s.class, a, b))
                        })
                        .collect();
                    Some(LabelTrack::from_segments(
                        t,
                        &frames,
                        Provenance::GroundTruth,
                    )?)
                }
            };
            videos.push(TrainingVideo {
                video_id: e.video_id.clone(),
                features,
                label: VideoLabel::new(e.video_id.clone(), e.classes.iter().copied()),
                ground_truth,
            });
        }
        Ok(TrainingSet {
            num_classes: self.num_classes(),
            videos,
        })
    }

    /// Loads every test video with its ground truth; unannotated test videos
    /// count as containing no action frames.
    pub fn eval_set(&self) -> Result<Vec<(ManifestEntry, EvalVideo)>> {
        self.entries(Split::Test)
            .map(|e| {
                let features = self.load_checked(e)?;
                let ground_truth = self.ground_truth(e, features.rows());
                Ok((
                    e.clone(),
                    EvalVideo {
                        features,
                        ground_truth,
                    },
                ))
            })
            .collect()
    }

    pub fn ground_truth(&self, entry: &ManifestEntry, num_frames: usize) -> VideoGroundTruth {
        VideoGroundTruth {
            video_id: entry.video_id.clone(),
            fps: entry.frame_rate,
            num_frames,
            segments: entry.segments.clone().unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "# woad-manifest v1\n#classes\tjump,run\nvideo_id\tfeature_path\tframe_rate\tsplit\tclasses\tsegments\nv1\ta.woadf\t2\ttrain\t1\t1:1:2.5;1:4:5\nv2\tb.woadf\t2.5\ttest\t1,2\t-\n";

    fn parse(text: &str) -> Result<CorpusManifest> {
        CorpusManifest::parse(text, "m", Path::new("/data"))
    }

    #[test]
    fn parses_and_round_trips() {
        let m = parse(GOOD).unwrap();
        assert_eq!(m.num_classes(), 2);
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].segments.as_ref().unwrap().len(), 2);
        assert_eq!(m.entries[1].segments, None);
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/a.woadf"));
        assert_eq!(parse(&m.to_text()).unwrap(), m);
    }

    fn line_of(text: &str) -> (usize, String) {
        match parse(text) {
            Err(Error::Manifest { line, message, .. }) => (line, message),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let with = |row: &str| GOOD.replace("v2\tb.woadf\t2.5\ttest\t1,2\t-", row);
        assert_eq!(line_of(&with("v2\tb.woadf\t2.5\ttest\t3\t-")).0, 5);
        assert_eq!(line_of(&with("v2\tb.woadf\t0\ttest\t1\t-")).0, 5);
        assert_eq!(line_of(&with("v2\tb.woadf\t1\tval\t1\t-")).0, 5);
        assert_eq!(line_of(&with("v2\tb.woadf\t1\ttest\t1\t2:0:1")).0, 5);
        assert_eq!(line_of(&with("v2\tb.woadf\t1\ttest\t1\t1:3:1")).0, 5);
        assert_eq!(line_of(&with("v1\tb.woadf\t1\ttest\t1\t-")).0, 5);
        assert_eq!(line_of(&with("v2\tb.woadf\t1\ttest")).0, 5);
        assert_eq!(line_of("# something else\n").0, 1);
        assert_eq!(line_of(&GOOD.replace("#classes\t", "#cls\t")).0, 2);
    }

    #[test]
    fn distinct_messages() {
        let with = |row: &str| GOOD.replace("v2\tb.woadf\t2.5\ttest\t1,2\t-", row);
        let msgs: HashSet<String> = [
            "v2\tb.woadf\t2.5\ttest\t3\t-",
            "v2\tb.woadf\t0\ttest\t1\t-",
            "v2\tb.woadf\t1\tval\t1\t-",
            "v2\tb.woadf\t1\ttest\t1\t2:0:1",
            "v2\tb.woadf\t1\ttest\t1\t1:3:1",
            "v1\tb.woadf\t1\ttest\t1\t-",
            "v2\tb.woadf\t1\ttest",
            "v2\tb.woadf\t1\ttest\t1\t1:x:2",
            "v2\tb.woadf\t1\ttest\t1\t1:2",
        ]
        .iter()
        .map(|r| line_of(&with(r)).1)
        .collect();
        assert_eq!(msgs.len(), 9);
    }

    #[test]
    fn segment_frame_centers() {
        let s = GtSegment {
            class: 1,
            start_s: 1.0,
            end_s: 2.5,
        };
        assert_eq!(segment_frames(&s, 2.0, 10), Some((2, 4)));
        let tiny = GtSegment {
            class: 1,
            start_s: 1.1,
            end_s: 1.2,
        };
        assert_eq!(segment_frames(&tiny, 2.0, 10), None);
    }
}
