//! Registration of actor nodes across consecutive frames and the composite
//! spatio-temporal graph.

use crate::assignment::hungarian;
use crate::error::{Error, Result};
use crate::graph::{smooth, ActionGraph};
use crate::numerics::{Real, Tape, Tensor, Var};

/// Correspondence between the actor slots of two equally padded graphs.
///
/// Slot `i` of the earlier graph maps to slot `target(i)` of the later one.
/// The action nodes are not part of the matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationMatrix {
    forward: Vec<usize>,
    null_from: Vec<bool>,
    null_to: Vec<bool>,
}

impl PermutationMatrix {
    pub fn new(forward: Vec<usize>, null_from: Vec<bool>, null_to: Vec<bool>) -> Result<Self> {
        let n = forward.len();
        if null_from.len() != n || null_to.len() != n {
            return Err(Error::invalid("null masks must match the permutation size"));
        }
        let mut seen = vec![false; n];
        for &j in &forward {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid(format!("{forward:?} is not a permutation")));
            }
        }
        Ok(Self {
            forward,
            null_from,
            null_to,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
            null_from: vec![false; n],
            null_to: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn target(&self, i: usize) -> usize {
        self.forward[i]
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn null_from(&self) -> &[bool] {
        &self.null_from
    }

    pub fn null_to(&self) -> &[bool] {
        &self.null_to
    }

    /// Dense 0/1 matrix with `P[i][target(i)] = 1`.
    pub fn matrix(&self) -> Tensor<f32> {
        let n = self.len();
        let mut m = Tensor::zeros(vec![n, n]);
        for (i, &j) in self.forward.iter().enumerate() {
            m.set(i, j, 1.0);
        }
        m
    }

    /// Pairs of slots where both sides are real actors.
    pub fn registered_pairs(&self) -> Vec<(usize, usize)> {
        self.forward
            .iter()
            .enumerate()
            .filter(|&(i, &j)| !self.null_from[i] && !self.null_to[j])
            .map(|(i, &j)| (i, j))
            .collect()
    }

    /// Grows to `n` slots; the new slots are null on both sides and map to
    /// themselves.
    pub fn extend(&self, n: usize) -> Result<Self> {
        if n < self.len() {
            return Err(Error::invalid(format!("cannot shrink a {}-slot permutation to {n}", self.len())));
        }
        let mut out = self.clone();
        for k in self.len()..n {
            out.forward.push(k);
            out.null_from.push(true);
            out.null_to.push(true);
        }
        Ok(out)
    }

    /// Sum of `cost[i][target(i)]` over a row-major `n × n` cost matrix.
    pub fn total_cost(&self, cost: &[f64]) -> f64 {
        let n = self.len();
        self.forward.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
    }
}

/// Row-major matching cost between the actor slots of two graphs with equal
/// slot counts: `w1 · ‖F_i − F_j‖₂ + w2 · (1 − IoU(B_i, B_j))`.
pub fn registration_cost(a: &ActionGraph, b: &ActionGraph, w_feature: f64, w_iou: f64) -> Result<Vec<f64>> {
    let n = a.actor_slots();
    if b.actor_slots() != n {
        return Err(Error::Shape {
            op: "register",
            lhs: vec![n],
            rhs: vec![b.actor_slots()],
        });
    }
    if n > 0 && a.feature_width() != b.feature_width() {
        return Err(Error::Shape {
            op: "register",
            lhs: vec![a.feature_width()],
            rhs: vec![b.feature_width()],
        });
    }
    let mut cost = Vec::with_capacity(n * n);
    for p in &a.nodes()[..n] {
        for q in &b.nodes()[..n] {
            let dist = p
                .feature
                .data()
                .iter()
                .zip(q.feature.data())
                .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            cost.push(w_feature * dist + w_iou * (1.0 - p.bbox.iou(&q.bbox)));
        }
    }
    Ok(cost)
}

/// Minimum-cost registration of two graphs padded to equal slot counts.
pub fn register(a: &ActionGraph, b: &ActionGraph, w_feature: f64, w_iou: f64) -> Result<PermutationMatrix> {
    let n = a.actor_slots();
    let cost = registration_cost(a, b, w_feature, w_iou)?;
    let forward = hungarian(&cost, n, n)?
        .into_iter()
        .map(|j| j.expect("square problems assign every row"))
        .collect();
    let null_mask = |g: &ActionGraph| g.nodes()[..n].iter().map(|node| node.is_null).collect();
    PermutationMatrix::new(forward, null_mask(a), null_mask(b))
}

/// Pads both graphs to their larger slot count, then registers them.
pub fn register_frames(a: &ActionGraph, b: &ActionGraph, w_feature: f64, w_iou: f64) -> Result<PermutationMatrix> {
    let n = a.actor_slots().max(b.actor_slots());
    register(&a.pad_null(n)?, &b.pad_null(n)?, w_feature, w_iou)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TemporalEdge {
    pub from: usize,
    pub to: usize,
    pub action: bool,
}

/// Per-frame graphs padded to a common slot count `N`, stacked on a block
/// diagonal and joined by weight-1 symmetric temporal edges.
///
/// Node `k` of frame `t` has composite index `t · (N + 1) + k`; slot `N` is
/// the frame's action node.
#[derive(Clone, Debug)]
pub struct CompositeGraph {
    adjacency: Tensor<f32>,
    features: Tensor<f32>,
    graphs: Vec<ActionGraph>,
    original_slots: Vec<usize>,
    slots: usize,
    temporal_edges: Vec<TemporalEdge>,
    perms: Vec<PermutationMatrix>,
}

/// Stacks `graphs` with `perms[t]` registering frame `t` to `t + 1`.
///
/// Permutations smaller than the common slot count are extended with null
/// identity slots.
pub fn build_composite(graphs: &[ActionGraph], perms: &[PermutationMatrix]) -> Result<CompositeGraph> {
    if graphs.is_empty() {
        return Err(Error::invalid("composite graph needs at least one frame"));
    }
    if perms.len() + 1 != graphs.len() {
        return Err(Error::invalid(format!(
            "{} graphs need {} registrations, got {}",
            graphs.len(),
            graphs.len() - 1,
            perms.len()
        )));
    }
    let slots = graphs
        .iter()
        .map(ActionGraph::actor_slots)
        .chain(perms.iter().map(PermutationMatrix::len))
        .max()
        .unwrap_or(0);
    let stride = slots + 1;
    let padded: Vec<ActionGraph> = graphs.iter().map(|g| g.pad_null(slots)).collect::<Result<_>>()?;
    let perms: Vec<PermutationMatrix> = perms.iter().map(|p| p.extend(slots)).collect::<Result<_>>()?;
    let width = padded[0].feature_width();
    if let Some(g) = padded.iter().find(|g| g.feature_width() != width) {
        return Err(Error::Shape {
            op: "build_composite",
            lhs: vec![width],
            rhs: vec![g.feature_width()],
        });
    }

    let m = stride * graphs.len();
    let mut adjacency = Tensor::zeros(vec![m, m]);
    let mut features = Vec::with_capacity(m * width);
    for (t, g) in padded.iter().enumerate() {
        let base = t * stride;
        for i in 0..stride {
            for j in 0..stride {
                adjacency.set(base + i, base + j, g.adjacency().at(i, j));
            }
        }
        features.extend_from_slice(g.feature_matrix().data());
    }

    let mut temporal_edges = Vec::new();
    for (t, p) in perms.iter().enumerate() {
        let (here, next) = (t * stride, (t + 1) * stride);
        for (i, j) in p.registered_pairs() {
            temporal_edges.push(TemporalEdge {
                from: here + i,
                to: next + j,
                action: false,
            });
        }
        if padded[t].action_connected() && padded[t + 1].action_connected() {
            temporal_edges.push(TemporalEdge {
                from: here + slots,
                to: next + slots,
                action: true,
            });
        }
    }
    for e in &temporal_edges {
        adjacency.set(e.from, e.to, 1.0);
        adjacency.set(e.to, e.from, 1.0);
    }

    Ok(CompositeGraph {
        adjacency,
        features: Tensor::new(vec![m, width], features)?,
        original_slots: graphs.iter().map(ActionGraph::actor_slots).collect(),
        graphs: padded,
        slots,
        temporal_edges,
        perms,
    })
}

impl CompositeGraph {
    pub fn adjacency(&self) -> &Tensor<f32> {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor<f32> {
        &self.features
    }

    pub fn frames(&self) -> usize {
        self.graphs.len()
    }

    /// Common actor slot count `N`.
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn len(&self) -> usize {
        self.graphs.len() * (self.slots + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn node_index(&self, frame: usize, slot: usize) -> usize {
        frame * (self.slots + 1) + slot
    }

    /// `(frame, slot)` of a composite node.
    pub fn locate(&self, node: usize) -> (usize, usize) {
        (node / (self.slots + 1), node % (self.slots + 1))
    }

    /// Padded per-frame graphs.
    pub fn graphs(&self) -> &[ActionGraph] {
        &self.graphs
    }

    /// Registrations extended to the common slot count.
    pub fn perms(&self) -> &[PermutationMatrix] {
        &self.perms
    }

    pub fn temporal_edges(&self) -> &[TemporalEdge] {
        &self.temporal_edges
    }

    /// Stacks per-frame node rows into composite order on the tape.
    ///
    /// `per_frame[t]` holds the rows of the unpadded graph `t` (actor slots,
    /// then the action node); null padding rows become zeros.
    pub fn assemble<T: Real>(&self, tape: &mut Tape<T>, per_frame: &[Var]) -> Result<Var> {
        if per_frame.len() != self.graphs.len() {
            return Err(Error::invalid(format!(
                "expected {} frames of node rows, got {}",
                self.graphs.len(),
                per_frame.len()
            )));
        }
        let mut blocks = Vec::with_capacity(per_frame.len());
        for (t, &rows) in per_frame.iter().enumerate() {
            let orig = self.original_slots[t];
            let width = tape.value(rows).cols();
            if tape.value(rows).shape() != [orig + 1, width] {
                return Err(Error::Shape {
                    op: "assemble",
                    lhs: tape.value(rows).shape().to_vec(),
                    rhs: vec![orig + 1, width],
                });
            }
            if orig == self.slots {
                blocks.push(rows);
                continue;
            }
            let zero = tape.constant(Tensor::zeros(vec![1, width]));
            let with_zero = tape.concat_rows(&[rows, zero])?;
            let index: Vec<usize> = (0..=self.slots)
                .map(|k| match k {
                    k if k < orig => k,
                    k if k == self.slots => orig,
                    _ => orig + 1,
                })
                .collect();
            blocks.push(tape.gather_rows(with_zero, &index)?);
        }
        tape.concat_rows(&blocks)
    }
}

/// Temporal smoothing of the composite's own features with `W_t`.
pub fn temporal_smooth(composite: &CompositeGraph, weight: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(composite.adjacency.clone());
    let f = tape.constant(composite.features.clone());
    let w = tape.constant(weight.clone());
    let out = smooth(&mut tape, a, f, w)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::graph::build_action_graph;

    fn graph(boxes: &[BBox], feats: &[f32], d: usize) -> ActionGraph {
        let n = boxes.len();
        let sources: Vec<usize> = (0..n).collect();
        build_action_graph(
            boxes,
            &Tensor::new(vec![n, d], feats.to_vec()).unwrap(),
            &sources,
            &Tensor::vector(vec![0.5; d + 4]),
            true,
        )
        .unwrap()
    }

    fn two_actors() -> (BBox, BBox) {
        (BBox::new(0.1, 0.1, 0.3, 0.4), BBox::new(0.6, 0.5, 0.8, 0.9))
    }

    #[test]
    fn identical_graphs_register_identity() {
        let (a, b) = two_actors();
        let g = graph(&[a, b], &[1.0, 0.0, 0.0, 1.0], 2);
        let p = register(&g, &g, 1.0, 1.0).unwrap();
        assert_eq!(p, PermutationMatrix::identity(2));
        assert_eq!(p.total_cost(&registration_cost(&g, &g, 1.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn swapped_order_registers_anti_diagonal() {
        let (a, b) = two_actors();
        let g = graph(&[a, b], &[1.0, 0.0, 0.0, 1.0], 2);
        let h = graph(&[b, a], &[0.0, 1.0, 1.0, 0.0], 2);
        let p = register(&g, &h, 1.0, 1.0).unwrap();
        assert_eq!(p.forward(), &[1, 0]);
        assert_eq!(p.matrix().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn null_costs() {
        let (a, _) = two_actors();
        let g = graph(&[a], &[3.0, 4.0], 2).pad_null(2).unwrap();
        let c = registration_cost(&g, &g, 1.0, 1.0).unwrap();
        let norm = (9.0f64 + 16.0 + [0.1f32, 0.1, 0.3, 0.4].iter().map(|&v| (v as f64).powi(2)).sum::<f64>()).sqrt();
        assert!((c[1] - (norm + 1.0)).abs() < 1e-6);
        assert_eq!(c[3], 1.0);
        let empty = graph(&[], &[], 2);
        assert!(register(&empty, &empty, 1.0, 1.0).unwrap().is_empty());
        assert!(register(&g, &graph(&[a], &[3.0, 4.0], 2), 1.0, 1.0).is_err());
    }

    #[test]
    fn single_frame_composite() {
        let (a, b) = two_actors();
        let g = graph(&[a, b], &[1.0, 0.0, 0.0, 1.0], 2);
        let c = build_composite(&[g.clone()], &[]).unwrap();
        assert_eq!(c.adjacency(), g.adjacency());
        assert_eq!(c.features(), &g.feature_matrix());
        assert!(c.temporal_edges().is_empty());
        assert!(build_composite(&[g.clone(), g.clone()], &[]).is_err());
    }

    #[test]
    fn two_frame_composite_edges() {
        let (a, _) = two_actors();
        let g = graph(&[a], &[1.0, 2.0], 2);
        let c = build_composite(&[g.clone(), g.clone()], &[PermutationMatrix::identity(1)]).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.temporal_edges().len(), 2);
        let adj = c.adjacency();
        assert_eq!((adj.at(0, 2), adj.at(2, 0), adj.at(1, 3), adj.at(3, 1)), (1.0, 1.0, 1.0, 1.0));
        assert_eq!((adj.at(0, 3), adj.at(1, 2)), (0.0, 0.0));
    }

    #[test]
    fn disappearing_actor_has_no_forward_edge() {
        let (a, b) = two_actors();
        let g2 = graph(&[a, b], &[1.0, 0.0, 0.0, 1.0], 2);
        let g1 = graph(&[a], &[1.0, 0.0], 2);
        let p01 = register_frames(&g2, &g2, 1.0, 1.0).unwrap();
        let p12 = register_frames(&g2, &g1, 1.0, 1.0).unwrap();
        assert_eq!(p12.forward(), &[0, 1]);
        assert_eq!(p12.null_to(), &[false, true]);
        let c = build_composite(&[g2.clone(), g2.clone(), g1], &[p01, p12]).unwrap();
        let b_mid = c.node_index(1, 1);
        let last = c.node_index(2, 0)..c.node_index(2, 3);
        for n in last {
            assert_eq!(c.adjacency().at(b_mid, n), 0.0);
        }
        assert_eq!(c.adjacency().at(c.node_index(1, 0), c.node_index(2, 0)), 1.0);
        // Registered pairs: 2 + 1, plus 2 action links.
        assert_eq!(c.temporal_edges().len(), 5);
    }

    #[test]
    fn temporal_smooth_hand_product() {
        let (a, _) = two_actors();
        let mut c = build_composite(
            &[graph(&[a], &[1.0, 2.0], 2), graph(&[a], &[1.0, 2.0], 2)],
            &[PermutationMatrix::identity(1)],
        )
        .unwrap();
        // Replace features with a hand-chosen 4×2 matrix.
        c.features = Tensor::new(vec![4, 2], vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, -1.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        // 𝓐 rows: [1,1,1,0], [1,1,0,1], [1,0,1,1], [0,1,1,1].
        // 𝓐𝓕 = [[3,1],[1,0],[3,-1],[2,0]]; times W = [[3,5],[1,1],[3,1],[2,2]].
        let out = temporal_smooth(&c, &w).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0, 1.0, 1.0, 3.0, 1.0, 2.0, 2.0]);
        c.features = Tensor::zeros(vec![4, 2]);
        assert!(temporal_smooth(&c, &w).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(temporal_smooth(&c, &Tensor::zeros(vec![3, 2])).is_err());
    }

    #[test]
    fn assemble_inserts_zero_rows() {
        let (a, b) = two_actors();
        let g2 = graph(&[a, b], &[1.0, 0.0, 0.0, 1.0], 2);
        let g1 = graph(&[a], &[1.0, 0.0], 2);
        let p = register_frames(&g2, &g1, 1.0, 1.0).unwrap();
        let c = build_composite(&[g2.clone(), g1.clone()], &[p]).unwrap();
        let mut tape = Tape::<f32>::new();
        let r2 = tape.constant(g2.feature_matrix());
        let r1 = tape.constant(g1.feature_matrix());
        let stacked = c.assemble(&mut tape, &[r2, r1]).unwrap();
        assert_eq!(tape.value(stacked), c.features());
    }
}
