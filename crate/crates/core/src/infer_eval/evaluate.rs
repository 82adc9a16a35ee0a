//! Scoring a prediction file against per-video ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::align::{align_labels, LabelAlignment};
use super::metrics::{
    accuracy, detection_map, mca, membership_accuracy, social_activity_accuracy, video_map, LabeledBox,
    MembershipCase, ScoredBox, Tube, IOU_THRESHOLD, TUBE_FRAME_FRACTION,
};
use super::predictions::{Detection, Predictions, VideoPrediction};
use crate::assignment::hungarian;
use crate::error::{Error, Result};
use crate::ingest::{GroundTruth, TruthRecord};

pub const REPORT_HEADER: &str = "# actorgraph report v1";
const DENOMINATOR_NOTE: &str =
    "# membership and social accuracy: IoU-matched actors plus unmatched predictions in the denominator";

/// Cost assigned to detection/annotation pairs below the IoU threshold.
const INELIGIBLE_COST: f64 = 1e3;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Report {
    pub group_activity_mca: f64,
    pub group_activity_accuracy: f64,
    pub action_detection_map: f64,
    pub membership_accuracy: f64,
    pub social_activity_accuracy: f64,
    pub video_map: f64,
}

impl Report {
    pub const METRIC_NAMES: [&'static str; 6] = [
        "group_activity_mca",
        "group_activity_accuracy",
        "action_detection_map",
        "membership_accuracy",
        "social_activity_accuracy",
        "video_map",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.group_activity_mca,
            self.group_activity_accuracy,
            self.action_detection_map,
            self.membership_accuracy,
            self.social_activity_accuracy,
            self.video_map,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::METRIC_NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n{DENOMINATOR_NOTE}\n");
        for (name, value) in Self::METRIC_NAMES.iter().zip(self.values()) {
            let _ = writeln!(s, "{name} {value:.6}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values: BTreeMap<&str, f64> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: "report".into(),
                line: lineno + 1,
                message,
            };
            let (name, value) = line.split_once(' ').ok_or_else(|| err("expected `name value`".into()))?;
            let name = Self::METRIC_NAMES
                .iter()
                .find(|n| **n == name)
                .ok_or_else(|| err(format!("unknown metric {name:?}")))?;
            let value: f64 = value.trim().parse().map_err(|_| err(format!("bad value {value:?}")))?;
            values.insert(name, value);
        }
        let v = |n: &str| values.get(n).copied().ok_or_else(|| Error::invalid(format!("report lacks {n}")));
        Ok(Self {
            group_activity_mca: v("group_activity_mca")?,
            group_activity_accuracy: v("group_activity_accuracy")?,
            action_detection_map: v("action_detection_map")?,
            membership_accuracy: v("membership_accuracy")?,
            social_activity_accuracy: v("social_activity_accuracy")?,
            video_map: v("video_map")?,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// IoU matching of one frame's detections to its annotations: Hungarian on
/// `1 − IoU`, keeping only pairs at or above the threshold. Returns
/// `(detection index, record index)` pairs.
pub fn match_frame(dets: &[&Detection], records: &[&TruthRecord]) -> Result<Vec<(usize, usize)>> {
    if dets.is_empty() || records.is_empty() {
        return Ok(Vec::new());
    }
    let iou: Vec<f64> = dets
        .iter()
        .flat_map(|d| records.iter().map(move |r| d.bbox.iou(&r.bbox)))
        .collect();
    let cost: Vec<f64> = iou
        .iter()
        .map(|&v| if v >= IOU_THRESHOLD { 1.0 - v } else { INELIGIBLE_COST })
        .collect();
    let assignment = hungarian(&cost, dets.len(), records.len())?;
    Ok(assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.filter(|&j| iou[i * records.len() + j] >= IOU_THRESHOLD).map(|j| (i, j)))
        .collect())
}

struct MatchedVideo<'a> {
    dets: Vec<&'a Detection>,
    /// `(detection, record)` pairs over the whole video.
    pairs: Vec<(&'a Detection, &'a TruthRecord)>,
    unmatched: usize,
}

fn match_video<'a>(pred: Option<&'a VideoPrediction>, truth: &'a GroundTruth) -> Result<MatchedVideo<'a>> {
    let dets: Vec<&Detection> = pred.map(|p| p.detections.iter().collect()).unwrap_or_default();
    let mut by_frame: BTreeMap<u32, Vec<&Detection>> = BTreeMap::new();
    for d in &dets {
        by_frame.entry(d.frame_index).or_default().push(d);
    }
    let records = truth.frames();
    let mut pairs = Vec::new();
    for (frame, fd) in &by_frame {
        let fr = records.get(frame).map(Vec::as_slice).unwrap_or(&[]);
        for (i, j) in match_frame(fd, fr)? {
            pairs.push((fd[i], fr[j]));
        }
    }
    let unmatched = dets.len() - pairs.len();
    Ok(MatchedVideo { dets, pairs, unmatched })
}

fn majority(labels: impl IntoIterator<Item = u32>) -> Option<u32> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(l, _)| l)
}

/// Scores predictions against ground truth given as `(video name, truth)`.
///
/// Every ground-truth video is scored; a video without predictions counts
/// as a wrong group activity and contributes no detections. Predictions for
/// videos without ground truth are rejected.
pub fn evaluate(predictions: &Predictions, truths: &[(String, GroundTruth)]) -> Result<Report> {
    if truths.is_empty() {
        return Err(Error::invalid("evaluation needs at least one ground-truth video"));
    }
    let by_name: BTreeMap<&str, &VideoPrediction> =
        predictions.videos.iter().map(|v| (v.name.as_str(), v)).collect();
    for name in by_name.keys() {
        if !truths.iter().any(|(n, _)| n == name) {
            return Err(Error::invalid(format!("prediction for video {name} has no ground truth")));
        }
    }
    let preds: Vec<Option<&VideoPrediction>> = truths.iter().map(|(n, _)| by_name.get(n.as_str()).copied()).collect();

    // Group activity, aligned over videos that have a prediction.
    let gt_group: Vec<u32> = truths
        .iter()
        .map(|(n, t)| t.group_activity().ok_or_else(|| Error::invalid(format!("ground truth for {n} is empty"))))
        .collect::<Result<_>>()?;
    let (gp, gg): (Vec<u32>, Vec<u32>) = preds
        .iter()
        .zip(&gt_group)
        .filter_map(|(p, &g)| p.map(|p| (p.group_activity, g)))
        .unzip();
    let group_alignment = align_labels(&gp, &gg);
    let group_pred: Vec<Option<u32>> = preds
        .iter()
        .map(|p| p.and_then(|p| group_alignment.apply(p.group_activity)))
        .collect();

    let matched: Vec<MatchedVideo> = preds
        .iter()
        .zip(truths)
        .map(|(p, (_, t))| match_video(*p, t))
        .collect::<Result<_>>()?;

    let all_pairs = || matched.iter().flat_map(|m| m.pairs.iter());
    let (ap, ag): (Vec<u32>, Vec<u32>) = all_pairs().map(|(d, r)| (d.action, r.action)).unzip();
    let action_alignment = align_labels(&ap, &ag);
    let (sp, sg): (Vec<u32>, Vec<u32>) = all_pairs().map(|(d, r)| (d.social, r.social_activity)).unzip();
    let social_alignment = align_labels(&sp, &sg);

    let mut scored = Vec::new();
    let mut labeled = Vec::new();
    let mut cases = Vec::new();
    let mut joint = Vec::new();
    let mut unmatched_total = 0;
    let mut pred_tubes = Vec::new();
    let mut gt_tubes = Vec::new();
    for (v, (m, (_, truth))) in matched.iter().zip(truths).enumerate() {
        for d in &m.dets {
            scored.push(ScoredBox {
                frame: (v, d.frame_index),
                bbox: d.bbox,
                label: action_alignment.apply(d.action),
                score: d.score,
            });
        }
        for r in &truth.records {
            labeled.push(LabeledBox {
                frame: (v, r.frame_index),
                bbox: r.bbox,
                label: r.action,
            });
        }

        let case = MembershipCase {
            pred: m.pairs.iter().map(|(d, _)| d.membership).collect(),
            gt: m.pairs.iter().map(|(_, r)| r.membership).collect(),
            unmatched: m.unmatched,
        };
        let membership_alignment: LabelAlignment = align_labels(&case.pred, &case.gt);
        for (d, r) in &m.pairs {
            joint.push((
                membership_alignment.apply(d.membership) == Some(r.membership),
                social_alignment.apply(d.social) == Some(r.social_activity),
            ));
        }
        unmatched_total += m.unmatched;
        cases.push(case);

        let mut chains: BTreeMap<u32, Vec<&Detection>> = BTreeMap::new();
        for d in &m.dets {
            chains.entry(d.chain_id).or_default().push(d);
        }
        for dets in chains.values() {
            let mut boxes = BTreeMap::new();
            let mut best_score: BTreeMap<u32, f64> = BTreeMap::new();
            for d in dets {
                if best_score.get(&d.frame_index).map_or(true, |&s| d.score > s) {
                    best_score.insert(d.frame_index, d.score);
                    boxes.insert(d.frame_index, d.bbox);
                }
            }
            pred_tubes.push(Tube {
                video: v,
                label: majority(dets.iter().filter_map(|d| action_alignment.apply(d.action))),
                score: dets.iter().map(|d| d.score).sum::<f64>() / dets.len() as f64,
                boxes,
            });
        }
        let mut actors: BTreeMap<u32, Vec<&TruthRecord>> = BTreeMap::new();
        for r in &truth.records {
            actors.entry(r.actor_id).or_default().push(r);
        }
        for records in actors.values() {
            gt_tubes.push(Tube {
                video: v,
                label: majority(records.iter().map(|r| r.action)),
                score: 1.0,
                boxes: records.iter().map(|r| (r.frame_index, r.bbox)).collect(),
            });
        }
    }

    Ok(Report {
        group_activity_mca: mca(&group_pred, &gt_group)?,
        group_activity_accuracy: accuracy(&group_pred, &gt_group)?,
        action_detection_map: detection_map(&scored, &labeled, IOU_THRESHOLD),
        membership_accuracy: membership_accuracy(&cases),
        social_activity_accuracy: social_activity_accuracy(&joint, unmatched_total),
        video_map: video_map(&pred_tubes, &gt_tubes, IOU_THRESHOLD, TUBE_FRAME_FRACTION),
    })
}

/// Reads ground-truth files, naming each video by its file stem.
pub fn read_truths<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<(String, GroundTruth)>> {
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            Ok((video_name(p), GroundTruth::read(p)?))
        })
        .collect()
}

/// Video name of a stream or ground-truth path: the file name up to its first dot.
pub fn video_name(path: &Path) -> String {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    file.split('.').next().unwrap_or_default().to_string()
}
