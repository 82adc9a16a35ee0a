//! Per-frame action graphs: distance-derived social adjacency between
//! selected actors plus one event ("action") node, and graph smoothing.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::numerics::{sigmoid, Real, Tape, Tensor, Var};

/// Number of box coordinates appended to every node feature.
pub const BOX_DIMS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ActorNode {
    /// `[roi_feature; x1, y1, x2, y2]`, width `D + 4`.
    pub feature: Tensor<f32>,
    pub bbox: BBox,
    pub is_null: bool,
    pub is_action_node: bool,
    /// Index of the originating ROI in the frame's candidate list.
    pub source: Option<usize>,
}

impl ActorNode {
    pub fn null(width: usize) -> Self {
        Self {
            feature: Tensor::zeros(vec![width]),
            bbox: BBox::degenerate(),
            is_null: true,
            is_action_node: false,
            source: None,
        }
    }

    pub fn is_actor(&self) -> bool {
        !self.is_null && !self.is_action_node
    }
}

/// Actor nodes (real, then null padding) followed by exactly one action node.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionGraph {
    nodes: Vec<ActorNode>,
    adjacency: Tensor<f32>,
    action_connected: bool,
}

/// Centred scores this close to zero count as exact ties.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-6;

/// Pairwise distance between `[cx, cy, w, h]` descriptors.
fn descriptor_distance(a: &BBox, b: &BBox) -> f64 {
    let desc = |b: &BBox| {
        let (x1, y1, x2, y2) = (b.x1 as f64, b.y1 as f64, b.x2 as f64, b.y2 as f64);
        [(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1]
    };
    let (p, q) = (desc(a), desc(b));
    p.iter().zip(&q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Actor-block adjacency from boxes alone.
///
/// Scores are negated mean-centred descriptor distances, so closer pairs score
/// higher. Each row is scaled by the L2 norm of its off-diagonal scores, passed
/// through a sigmoid, and entries below the row's off-diagonal mean are pruned
/// to exactly 0. The diagonal is 1.
pub fn social_adjacency(boxes: &[BBox]) -> Result<Vec<Vec<f64>>> {
    let n = boxes.len();
    let mut d = vec![vec![0f64; n]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = descriptor_distance(&boxes[i], &boxes[j]);
                if !d[i][j].is_finite() {
                    return Err(Error::NonFinite(format!("distance between actors {i} and {j}")));
                }
                total += d[i][j];
            }
        }
    }
    let pairs = n * n.saturating_sub(1);
    let mean = if pairs > 0 { total / pairs as f64 } else { 0.0 };

    let mut a = vec![vec![0f64; n]; n];
    for i in 0..n {
        let scores: Vec<f64> = (0..n)
            .map(|j| {
                let s = if i == j { 0.0 } else { mean - d[i][j] };
                if s.abs() <= SCORE_TIE_TOLERANCE {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        let norm = scores.iter().map(|s| s * s).sum::<f64>().sqrt();
        for j in 0..n {
            if i != j {
                let s = if norm > 0.0 { scores[j] / norm } else { 0.0 };
                a[i][j] = sigmoid(s);
            }
        }
        if n > 1 {
            let row_mean = (0..n).filter(|&j| j != i).map(|j| a[i][j]).sum::<f64>() / (n - 1) as f64;
            for j in 0..n {
                if i != j && a[i][j] < row_mean {
                    a[i][j] = 0.0;
                }
            }
        }
        a[i][i] = 1.0;
    }
    Ok(a)
}

/// Builds the graph for one frame.
///
/// `features` is `[n, D]` aligned with `boxes`; `action_feature` is the
/// event feature already projected to width `D + 4`. With
/// `connect_action == false` the action node keeps its slot but has no edges
/// besides its self-loop and a zero feature.
pub fn build_action_graph(
    boxes: &[BBox],
    features: &Tensor<f32>,
    sources: &[usize],
    action_feature: &Tensor<f32>,
    connect_action: bool,
) -> Result<ActionGraph> {
    let n = boxes.len();
    if features.rank() != 2 || features.rows() != n || sources.len() != n {
        return Err(Error::Shape {
            op: "build_action_graph",
            lhs: features.shape().to_vec(),
            rhs: vec![n, sources.len()],
        });
    }
    let width = features.cols() + BOX_DIMS;
    if action_feature.shape() != [width] {
        return Err(Error::Shape {
            op: "build_action_graph",
            lhs: action_feature.shape().to_vec(),
            rhs: vec![width],
        });
    }
    let block = social_adjacency(boxes)?;

    let mut nodes = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut f = features.row(i).to_vec();
        f.extend_from_slice(&boxes[i].to_array());
        nodes.push(ActorNode {
            feature: Tensor::vector(f),
            bbox: boxes[i],
            is_null: false,
            is_action_node: false,
            source: Some(sources[i]),
        });
    }
    nodes.push(ActorNode {
        feature: if connect_action {
            action_feature.clone()
        } else {
            Tensor::zeros(vec![width])
        },
        bbox: BBox::degenerate(),
        is_null: false,
        is_action_node: true,
        source: None,
    });

    let m = n + 1;
    let mut adjacency = Tensor::zeros(vec![m, m]);
    for (i, row) in block.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            adjacency.set(i, j, v as f32);
        }
        if connect_action {
            adjacency.set(i, n, 1.0);
            adjacency.set(n, i, 1.0);
        }
    }
    adjacency.set(n, n, 1.0);
    Ok(ActionGraph {
        nodes,
        adjacency,
        action_connected: connect_action,
    })
}

impl ActionGraph {
    pub fn nodes(&self) -> &[ActorNode] {
        &self.nodes
    }

    pub fn adjacency(&self) -> &Tensor<f32> {
        &self.adjacency
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Actor slots (real and null), excluding the action node.
    pub fn actor_slots(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn real_actors(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_actor()).count()
    }

    pub fn action_index(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn action_connected(&self) -> bool {
        self.action_connected
    }

    pub fn feature_width(&self) -> usize {
        self.nodes[0].feature.len()
    }

    /// Node features stacked into `[n, D + 4]`.
    pub fn feature_matrix(&self) -> Tensor<f32> {
        let w = self.feature_width();
        let mut data = Vec::with_capacity(self.nodes.len() * w);
        for n in &self.nodes {
            data.extend_from_slice(n.feature.data());
        }
        Tensor::new(vec![self.nodes.len(), w], data).expect("uniform node width")
    }

    /// Same graph with `target` actor slots: null nodes are inserted before
    /// the action node with zero features, a degenerate box and an isolated
    /// self-loop.
    pub fn pad_null(&self, target: usize) -> Result<ActionGraph> {
        let slots = self.actor_slots();
        if target < slots {
            return Err(Error::invalid(format!(
                "cannot pad a graph with {slots} actor slots down to {target}"
            )));
        }
        if target == slots {
            return Ok(self.clone());
        }
        let width = self.feature_width();
        let mut nodes = self.nodes[..slots].to_vec();
        nodes.extend((slots..target).map(|_| ActorNode::null(width)));
        nodes.push(self.nodes[slots].clone());
        let m = target + 1;
        let mut adjacency = Tensor::zeros(vec![m, m]);
        let remap = |i: usize| if i == slots { target } else { i };
        for i in 0..=slots {
            for j in 0..=slots {
                adjacency.set(remap(i), remap(j), self.adjacency.at(i, j));
            }
        }
        for i in slots..target {
            adjacency.set(i, i, 1.0);
        }
        Ok(ActionGraph {
            nodes,
            adjacency,
            action_connected: self.action_connected,
        })
    }

    /// Relabels actor slots: new slot `k` holds old slot `order[k]`. The
    /// action node stays last.
    pub fn permute_actors(&self, order: &[usize]) -> Result<ActionGraph> {
        let slots = self.actor_slots();
        let mut seen = vec![false; slots];
        if order.len() != slots || order.iter().any(|&o| o >= slots || std::mem::replace(&mut seen[o], true)) {
            return Err(Error::invalid("actor order is not a permutation"));
        }
        let full: Vec<usize> = order.iter().copied().chain(std::iter::once(slots)).collect();
        let nodes = full.iter().map(|&i| self.nodes[i].clone()).collect();
        let m = full.len();
        let mut adjacency = Tensor::zeros(vec![m, m]);
        for (a, &i) in full.iter().enumerate() {
            for (b, &j) in full.iter().enumerate() {
                adjacency.set(a, b, self.adjacency.at(i, j));
            }
        }
        Ok(ActionGraph {
            nodes,
            adjacency,
            action_connected: self.action_connected,
        })
    }

    /// Line-delimited dump of the node table followed by the adjacency rows.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let kind = if n.is_action_node {
                "action"
            } else if n.is_null {
                "null"
            } else {
                "actor"
            };
            let b = n.bbox;
            let _ = writeln!(s, "node {i} {kind} {} {} {} {}", b.x1, b.y1, b.x2, b.y2);
        }
        for i in 0..self.nodes.len() {
            let row: Vec<String> = self.adjacency.row(i).iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "adj {i} {}", row.join(" "));
        }
        s
    }
}

/// One smoothing layer on the tape: `ReLU(A · F · W)`.
pub fn smooth<T: Real>(tape: &mut Tape<T>, adjacency: Var, features: Var, weight: Var) -> Result<Var> {
    let mixed = tape.matmul(adjacency, features)?;
    let projected = tape.matmul(mixed, weight)?;
    tape.relu(projected)
}

/// Spatial smoothing of a graph's own node features with `W_s`.
pub fn spatial_smooth(graph: &ActionGraph, weight: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(graph.adjacency.clone());
    let f = tape.constant(graph.feature_matrix());
    let w = tape.constant(weight.clone());
    let out = smooth(&mut tape, a, f, w)?;
    Ok(tape.value(out).clone())
}
