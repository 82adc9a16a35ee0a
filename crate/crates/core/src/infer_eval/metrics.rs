//! Evaluation metrics. All accumulators are f64.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const IOU_THRESHOLD: f64 = 0.5;
pub const TUBE_FRAME_FRACTION: f64 = 0.5;

fn check_paired(pred_len: usize, gt_len: usize, what: &str) -> Result<()> {
    if pred_len != gt_len {
        return Err(Error::invalid(format!("{what}: {pred_len} predictions for {gt_len} labels")));
    }
    if gt_len == 0 {
        return Err(Error::invalid(format!("{what}: empty input")));
    }
    Ok(())
}

/// Mean over ground-truth classes of per-class accuracy. `None` marks a
/// prediction with no aligned label (always wrong).
pub fn mca(pred: &[Option<u32>], gt: &[u32]) -> Result<f64> {
    check_paired(pred.len(), gt.len(), "mca")?;
    let mut per_class: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (p, &g) in pred.iter().zip(gt) {
        let e = per_class.entry(g).or_default();
        e.1 += 1;
        if *p == Some(g) {
            e.0 += 1;
        }
    }
    let sum: f64 = per_class.values().map(|&(ok, n)| ok as f64 / n as f64).sum();
    Ok(sum / per_class.len() as f64)
}

/// Fraction of correct predictions.
pub fn accuracy(pred: &[Option<u32>], gt: &[u32]) -> Result<f64> {
    check_paired(pred.len(), gt.len(), "accuracy")?;
    let ok = pred.iter().zip(gt).filter(|(p, g)| **p == Some(**g)).count();
    Ok(ok as f64 / gt.len() as f64)
}

/// All-point interpolated average precision of a ranked list of
/// `(score, is_true_positive)` against `n_gt` positives. Ties in score keep
/// input order.
pub fn average_precision(ranked: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[b].0.total_cmp(&ranked[a].0).then(a.cmp(&b)));
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        if ranked[i].1 {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Identifies one frame of one video.
pub type FrameKey = (usize, u32);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredBox {
    pub frame: FrameKey,
    pub bbox: BBox,
    /// Aligned class; `None` never matches.
    pub label: Option<u32>,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledBox {
    pub frame: FrameKey,
    pub bbox: BBox,
    pub label: u32,
}

/// Per-class AP over detections; a detection is a true positive when it
/// overlaps a not-yet-claimed ground-truth box of its class in the same frame
/// with IoU at least `iou_threshold` (the highest-IoU candidate is claimed).
/// Mean over classes that have ground truth.
pub fn detection_map(pred: &[ScoredBox], gt: &[LabeledBox], iou_threshold: f64) -> f64 {
    let classes: BTreeSet<u32> = gt.iter().map(|g| g.label).collect();
    if classes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &class in &classes {
        let gts: Vec<&LabeledBox> = gt.iter().filter(|g| g.label == class).collect();
        let mut dets: Vec<&ScoredBox> = pred.iter().filter(|p| p.label == Some(class)).collect();
        dets.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut claimed = vec![false; gts.len()];
        let ranked: Vec<(f64, bool)> = dets
            .iter()
            .map(|d| {
                let mut best: Option<(usize, f64)> = None;
                for (j, g) in gts.iter().enumerate() {
                    if claimed[j] || g.frame != d.frame {
                        continue;
                    }
                    let iou = d.bbox.iou(&g.bbox);
                    if iou >= iou_threshold && best.map_or(true, |(_, b)| iou > b) {
                        best = Some((j, iou));
                    }
                }
                if let Some((j, _)) = best {
                    claimed[j] = true;
                }
                (d.score, best.is_some())
            })
            .collect();
        total += average_precision(&ranked, gts.len());
    }
    total / classes.len() as f64
}

/// Correct over (matched + unmatched) predictions; 0 when both are zero.
pub fn matched_accuracy(correct: usize, matched: usize, unmatched: usize) -> f64 {
    let denom = matched + unmatched;
    if denom == 0 {
        0.0
    } else {
        correct as f64 / denom as f64
    }
}

/// One video's IoU-matched actors for membership scoring.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MembershipCase {
    pub pred: Vec<u32>,
    pub gt: Vec<u32>,
    /// Predicted actors that matched no ground-truth actor.
    pub unmatched: usize,
}

/// Community ids are aligned per video, then counted over every matched
/// actor; unmatched predictions count in the denominator.
pub fn membership_accuracy(videos: &[MembershipCase]) -> f64 {
    let (mut correct, mut matched, mut unmatched) = (0, 0, 0);
    for v in videos {
        correct += super::align::align_labels(&v.pred, &v.gt).agreements(&v.pred, &v.gt);
        matched += v.gt.len();
        unmatched += v.unmatched;
    }
    matched_accuracy(correct, matched, unmatched)
}

/// Per matched actor: whether its aligned membership and aligned social
/// activity are correct. Joint correctness is required.
pub fn social_activity_accuracy(outcomes: &[(bool, bool)], unmatched: usize) -> f64 {
    let correct = outcomes.iter().filter(|(m, s)| *m && *s).count();
    matched_accuracy(correct, outcomes.len(), unmatched)
}

/// A chain of boxes over frames of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct Tube {
    pub video: usize,
    pub label: Option<u32>,
    pub score: f64,
    pub boxes: BTreeMap<u32, BBox>,
}

/// Number of ground-truth frames whose box the prediction overlaps with IoU
/// at least `iou_threshold`.
pub fn tube_overlap_frames(pred: &Tube, gt: &Tube, iou_threshold: f64) -> usize {
    if pred.video != gt.video {
        return 0;
    }
    gt.boxes
        .iter()
        .filter(|(f, g)| pred.boxes.get(f).is_some_and(|p| p.iou(g) >= iou_threshold))
        .count()
}

pub fn tube_matches(pred: &Tube, gt: &Tube, iou_threshold: f64, frame_fraction: f64) -> bool {
    !gt.boxes.is_empty()
        && tube_overlap_frames(pred, gt, iou_threshold) as f64 >= frame_fraction * gt.boxes.len() as f64
}

/// Tube-level AP per ground-truth class, averaged. Each ground-truth tube
/// can be claimed once; a prediction claims the unclaimed matching tube with
/// the most overlapping frames.
pub fn video_map(pred: &[Tube], gt: &[Tube], iou_threshold: f64, frame_fraction: f64) -> f64 {
    let classes: BTreeSet<u32> = gt.iter().filter_map(|g| g.label).collect();
    if classes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &class in &classes {
        let gts: Vec<&Tube> = gt.iter().filter(|g| g.label == Some(class)).collect();
        let mut tubes: Vec<&Tube> = pred.iter().filter(|p| p.label == Some(class)).collect();
        tubes.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut claimed = vec![false; gts.len()];
        let ranked: Vec<(f64, bool)> = tubes
            .iter()
            .map(|t| {
                let mut best: Option<(usize, usize)> = None;
                for (j, g) in gts.iter().enumerate() {
                    if claimed[j] || !tube_matches(t, g, iou_threshold, frame_fraction) {
                        continue;
                    }
                    let overlap = tube_overlap_frames(t, g, iou_threshold);
                    if best.map_or(true, |(_, b)| overlap > b) {
                        best = Some((j, overlap));
                    }
                }
                if let Some((j, _)) = best {
                    claimed[j] = true;
                }
                (t.score, best.is_some())
            })
            .collect();
        total += average_precision(&ranked, gts.len());
    }
    total / classes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn mca_examples() {
        assert_eq!(mca(&[Some(0), Some(1)], &[0, 1]).unwrap(), 1.0);
        assert_eq!(mca(&[Some(1), Some(0)], &[0, 1]).unwrap(), 0.0);
        // class 0: 1/1, class 1: 1/2, class 2: 0/1.
        let pred = [Some(0), Some(1), Some(0), None];
        let gt = [0, 1, 1, 2];
        assert_eq!(mca(&pred, &gt).unwrap(), 0.5);
        assert_eq!(accuracy(&pred, &gt).unwrap(), 0.5);
        assert!(mca(&[], &[]).is_err());
    }

    #[test]
    fn ap_hand_example() {
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        assert!(close(ap, 0.5 + (2.0 / 3.0) * 0.5));
        assert_eq!(average_precision(&[], 2), 0.0);
    }

    fn bx(x: f32) -> BBox {
        BBox::new(x, 0.1, x + 0.2, 0.5)
    }

    #[test]
    fn detection_map_identity_and_empty() {
        let gt: Vec<LabeledBox> = (0..4)
            .map(|i| LabeledBox {
                frame: (0, i),
                bbox: bx(0.1 * i as f32),
                label: i % 2,
            })
            .collect();
        let pred: Vec<ScoredBox> = gt
            .iter()
            .map(|g| ScoredBox {
                frame: g.frame,
                bbox: g.bbox,
                label: Some(g.label),
                score: 1.0,
            })
            .collect();
        assert_eq!(detection_map(&pred, &gt, IOU_THRESHOLD), 1.0);
        assert_eq!(detection_map(&[], &gt, IOU_THRESHOLD), 0.0);
    }

    #[test]
    fn detection_map_ranked_example() {
        let gt = [
            LabeledBox { frame: (0, 0), bbox: bx(0.0), label: 0 },
            LabeledBox { frame: (0, 1), bbox: bx(0.0), label: 0 },
        ];
        let pred = [
            ScoredBox { frame: (0, 0), bbox: bx(0.0), label: Some(0), score: 0.9 },
            ScoredBox { frame: (0, 0), bbox: bx(0.0), label: Some(0), score: 0.8 },
            ScoredBox { frame: (0, 1), bbox: bx(0.0), label: Some(0), score: 0.7 },
        ];
        assert!(close(detection_map(&pred, &gt, IOU_THRESHOLD), 5.0 / 6.0));
    }

    #[test]
    fn membership_examples() {
        let perfect = MembershipCase { pred: vec![3, 3, 8, 8], gt: vec![0, 0, 1, 1], unmatched: 0 };
        assert_eq!(membership_accuracy(&[perfect]), 1.0);
        let single = MembershipCase { pred: vec![0; 4], gt: vec![0, 0, 1, 1], unmatched: 0 };
        assert_eq!(membership_accuracy(&[single]), 0.5);
        let swapped = MembershipCase { pred: vec![0, 0, 0, 1], gt: vec![0, 0, 1, 1], unmatched: 0 };
        assert_eq!(membership_accuracy(&[swapped]), 0.75);
        let extra = MembershipCase { pred: vec![0, 1], gt: vec![0, 1], unmatched: 2 };
        assert_eq!(membership_accuracy(&[extra]), 0.5);
    }

    #[test]
    fn social_examples() {
        assert_eq!(social_activity_accuracy(&[(true, true); 4], 0), 1.0);
        assert_eq!(social_activity_accuracy(&[(true, false); 4], 0), 0.0);
        let mixed = [(true, true), (true, true), (true, true), (false, true)];
        assert_eq!(social_activity_accuracy(&mixed, 0), 0.75);
    }

    fn tube(label: u32, frames: std::ops::Range<u32>, x: f32) -> Tube {
        Tube {
            video: 0,
            label: Some(label),
            score: 1.0,
            boxes: frames.map(|f| (f, bx(x))).collect(),
        }
    }

    #[test]
    fn tube_frame_boundary() {
        let gt = tube(0, 0..10, 0.0);
        let half = tube(0, 0..5, 0.0);
        assert!(tube_matches(&half, &gt, IOU_THRESHOLD, TUBE_FRAME_FRACTION));
        let gt100 = tube(0, 0..100, 0.0);
        let p49 = tube(0, 0..49, 0.0);
        let p50 = tube(0, 0..50, 0.0);
        assert!(!tube_matches(&p49, &gt100, IOU_THRESHOLD, TUBE_FRAME_FRACTION));
        assert!(tube_matches(&p50, &gt100, IOU_THRESHOLD, TUBE_FRAME_FRACTION));
        assert_eq!(video_map(&[half], &[gt.clone()], IOU_THRESHOLD, TUBE_FRAME_FRACTION), 1.0);
        assert_eq!(video_map(&[gt.clone()], &[gt], IOU_THRESHOLD, TUBE_FRAME_FRACTION), 1.0);
    }

    #[test]
    fn tubes_in_other_videos_do_not_match() {
        let gt = tube(0, 0..4, 0.0);
        let mut other = gt.clone();
        other.video = 1;
        assert_eq!(video_map(&[other], &[gt], IOU_THRESHOLD, TUBE_FRAME_FRACTION), 0.0);
    }
}
