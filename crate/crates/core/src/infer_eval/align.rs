//! Alignment of predicted cluster ids to ground-truth labels.

use std::collections::BTreeMap;

use crate::assignment::hungarian;

/// Injective mapping from predicted cluster ids to ground-truth labels.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelAlignment {
    pub mapping: BTreeMap<u32, u32>,
}

impl LabelAlignment {
    pub fn apply(&self, pred: u32) -> Option<u32> {
        self.mapping.get(&pred).copied()
    }

    /// Pairs whose predicted id maps onto the paired label.
    pub fn agreements(&self, pred: &[u32], gt: &[u32]) -> usize {
        pred.iter().zip(gt).filter(|(p, g)| self.apply(**p) == Some(**g)).count()
    }
}

/// Contingency counts between paired lists: sorted distinct predicted ids,
/// sorted distinct labels and `counts[p][g]`.
pub fn contingency(pred: &[u32], gt: &[u32]) -> (Vec<u32>, Vec<u32>, Vec<Vec<usize>>) {
    let mut p_ids: Vec<u32> = pred.to_vec();
    p_ids.sort_unstable();
    p_ids.dedup();
    let mut g_ids: Vec<u32> = gt.to_vec();
    g_ids.sort_unstable();
    g_ids.dedup();
    let mut counts = vec![vec![0usize; g_ids.len()]; p_ids.len()];
    for (p, g) in pred.iter().zip(gt) {
        let i = p_ids.binary_search(p).expect("collected");
        let j = g_ids.binary_search(g).expect("collected");
        counts[i][j] += 1;
    }
    (p_ids, g_ids, counts)
}

/// Mapping that maximises the number of agreeing pairs (Hungarian on the
/// negated contingency table).
pub fn align_labels(pred: &[u32], gt: &[u32]) -> LabelAlignment {
    let n = pred.len().min(gt.len());
    let (p_ids, g_ids, counts) = contingency(&pred[..n], &gt[..n]);
    let cost: Vec<f64> = counts.iter().flatten().map(|&c| -(c as f64)).collect();
    let assignment = hungarian(&cost, p_ids.len(), g_ids.len()).expect("finite costs");
    let mapping = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (p_ids[i], g_ids[j])))
        .collect();
    LabelAlignment { mapping }
}

/// Fraction of pairs that agree after optimal alignment; 0 for empty input.
pub fn aligned_accuracy(pred: &[u32], gt: &[u32]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    align_labels(pred, gt).agreements(pred, gt) as f64 / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renaming_is_perfect() {
        let gt = [0, 0, 1, 2, 2];
        let pred = [7, 7, 3, 5, 5];
        assert_eq!(aligned_accuracy(&pred, &gt), 1.0);
        let a = align_labels(&pred, &gt);
        assert_eq!(a.apply(7), Some(0));
        assert_eq!(a.apply(5), Some(2));
    }

    #[test]
    fn constant_prediction_half() {
        assert_eq!(aligned_accuracy(&[4, 4, 4, 4], &[0, 0, 1, 1]), 0.5);
    }

    #[test]
    fn contingency_example() {
        // [[5,1],[2,4]]: diagonal 9 beats anti-diagonal 3.
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        for (p, g, c) in [(0, 0, 5), (0, 1, 1), (1, 0, 2), (1, 1, 4)] {
            for _ in 0..c {
                pred.push(p);
                gt.push(g);
            }
        }
        let (_, _, counts) = contingency(&pred, &gt);
        assert_eq!(counts, vec![vec![5, 1], vec![2, 4]]);
        assert_eq!(aligned_accuracy(&pred, &gt), 0.75);
    }

    #[test]
    fn more_clusters_than_labels() {
        let a = align_labels(&[0, 1, 2, 2], &[5, 5, 6, 6]);
        assert_eq!(a.mapping.len(), 2);
        assert_eq!(a.apply(2), Some(6));
    }
}
