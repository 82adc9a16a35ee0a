//! Randomized property checks shared by the property tests and the
//! acceptance suite.

use actorgraph::geometry::BBox;
use actorgraph::graph::{build_action_graph, smooth, social_adjacency, spatial_smooth, ActionGraph};
use actorgraph::learn::{actor_loss, total_loss, Anticipators};
use actorgraph::numerics::{gradient_check, Tape, Tensor, Var};
use actorgraph::predictor::global_loss;
use actorgraph::temporal::{build_composite, register, register_frames, registration_cost, PermutationMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRADIENT_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let w: f32 = rng.gen_range(0.05..0.3);
    let h: f32 = rng.gen_range(0.05..0.3);
    let cx: f32 = rng.gen_range(w / 2.0..1.0 - w / 2.0);
    let cy: f32 = rng.gen_range(h / 2.0..1.0 - h / 2.0);
    BBox::from_center(cx, cy, w, h)
}

pub fn random_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<BBox> {
    (0..n).map(|_| random_box(rng)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, connect: bool) -> ActionGraph {
    let boxes = random_boxes(rng, n);
    let feats: Tensor<f32> = random_tensor(rng, &[n, d], 1.0).cast();
    let action: Tensor<f32> = random_tensor(rng, &[d + 4], 1.0).cast();
    let sources: Vec<usize> = (0..n).collect();
    build_action_graph(&boxes, &feats, &sources, &action, connect).unwrap()
}

/// `sum(R ⊙ x)` for a fixed random `R`, so every output entry matters.
fn weighted_sum(tape: &mut Tape<f64>, x: Var, rng: &mut ChaCha8Rng) -> actorgraph::Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let r = tape.constant(random_tensor(rng, &shape, 1.0));
    let p = tape.mul(x, r)?;
    tape.sum(p)
}

/// Masked prediction loss on a random 1×2×2 map, checked in the prediction.
pub fn grad_global_loss(seed: u64) -> f64 {
    let mut r = rng(seed);
    let theta = random_tensor(&mut r, &[4, 1], 1.0);
    let actual = random_tensor(&mut r, &[4, 1], 1.0);
    let mask = Tensor::new(vec![4], (0..4).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
    gradient_check(
        |t, x| {
            let a = t.constant(actual.clone());
            let m = t.constant(mask.clone());
            Ok(global_loss(t, x, a, m)?.0)
        },
        &theta,
        GRADIENT_STEP,
    )
    .unwrap()
}

/// Spatial smoothing of a random action graph, checked in the weight.
pub fn grad_spatial_smooth(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..6);
    let d = r.gen_range(1..4);
    let g = random_graph(&mut r, n, d, true);
    let w = d + 4;
    let theta = random_tensor(&mut r, &[w, w], 1.0);
    let adjacency: Tensor<f64> = g.adjacency().cast();
    let features: Tensor<f64> = g.feature_matrix().cast();
    let probe_seed = r.gen();
    gradient_check(
        |t, x| {
            let a = t.constant(adjacency.clone());
            let f = t.constant(features.clone());
            let y = smooth(t, a, f, x)?;
            weighted_sum(t, y, &mut rng(probe_seed))
        },
        &theta,
        GRADIENT_STEP,
    )
    .unwrap()
}

fn random_composite(r: &mut ChaCha8Rng, frames: usize, d: usize) -> (Tensor<f64>, Tensor<f64>) {
    let graphs: Vec<ActionGraph> = (0..frames)
        .map(|_| {
            let n = r.gen_range(1..5);
            random_graph(r, n, d, true)
        })
        .collect();
    let perms: Vec<PermutationMatrix> = graphs
        .windows(2)
        .map(|w| register_frames(&w[0], &w[1], 1.0, 1.0).unwrap())
        .collect();
    let c = build_composite(&graphs, &perms).unwrap();
    (c.adjacency().cast(), c.features().cast())
}

/// Temporal smoothing over a random three-frame composite, checked in the
/// weight.
pub fn grad_temporal_smooth(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.gen_range(1..4);
    let (adjacency, features) = random_composite(&mut r, 3, d);
    let theta = random_tensor(&mut r, &[d + 4, d + 4], 1.0);
    let probe_seed = r.gen();
    gradient_check(
        |t, x| {
            let a = t.constant(adjacency.clone());
            let f = t.constant(features.clone());
            let y = smooth(t, a, f, x)?;
            weighted_sum(t, y, &mut rng(probe_seed))
        },
        &theta,
        GRADIENT_STEP,
    )
    .unwrap()
}

struct ActorCase {
    feature_bias: Tensor<f64>,
    box_weight: Tensor<f64>,
    box_bias: Tensor<f64>,
    current: Tensor<f64>,
    next: Tensor<f64>,
    next_boxes: Tensor<f64>,
}

fn actor_case(r: &mut ChaCha8Rng, pairs: usize, w: usize) -> ActorCase {
    ActorCase {
        feature_bias: random_tensor(r, &[w], 1.0),
        box_weight: random_tensor(r, &[w, 4], 1.0),
        box_bias: random_tensor(r, &[4], 1.0),
        current: random_tensor(r, &[pairs, w], 1.0),
        next: random_tensor(r, &[pairs, w], 1.0),
        next_boxes: random_tensor(r, &[pairs, 4], 1.0),
    }
}

/// Multi-actor anticipation loss, checked in the feature anticipator weight.
pub fn grad_actor_loss(seed: u64) -> f64 {
    let mut r = rng(seed);
    let w = r.gen_range(2..6);
    let pairs = r.gen_range(1..5);
    let case = actor_case(&mut r, pairs, w);
    let theta = random_tensor(&mut r, &[w, w], 1.0);
    gradient_check(
        |t, x| {
            let maps = Anticipators {
                feature_weight: x,
                feature_bias: t.constant(case.feature_bias.clone()),
                box_weight: t.constant(case.box_weight.clone()),
                box_bias: t.constant(case.box_bias.clone()),
            };
            let cur = t.constant(case.current.clone());
            let next = t.constant(case.next.clone());
            let boxes = t.constant(case.next_boxes.clone());
            actor_loss(t, &maps, cur, next, boxes)
        },
        &theta,
        GRADIENT_STEP,
    )
    .unwrap()
}

/// Weighted total objective where one tensor feeds both terms: it is the
/// predicted map of the global loss and the current actor rows of the
/// anticipation loss.
pub fn grad_total_loss(seed: u64) -> f64 {
    let mut r = rng(seed);
    let w = 3;
    let rows = 4;
    let case = actor_case(&mut r, rows, w);
    let feature_weight = random_tensor(&mut r, &[w, w], 1.0);
    let actual = random_tensor(&mut r, &[rows, w], 1.0);
    let mask = Tensor::new(vec![rows], (0..rows).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
    let (l1, l2) = (r.gen_range(0.1..2.0), r.gen_range(0.1..2.0));
    let theta = case.current.clone();
    gradient_check(
        |t, x| {
            let a = t.constant(actual.clone());
            let m = t.constant(mask.clone());
            let (g, _) = global_loss(t, x, a, m)?;
            let maps = Anticipators {
                feature_weight: t.constant(feature_weight.clone()),
                feature_bias: t.constant(case.feature_bias.clone()),
                box_weight: t.constant(case.box_weight.clone()),
                box_bias: t.constant(case.box_bias.clone()),
            };
            let next = t.constant(case.next.clone());
            let boxes = t.constant(case.next_boxes.clone());
            let al = actor_loss(t, &maps, x, next, boxes)?;
            total_loss(t, g, al, l1, l2)
        },
        &theta,
        GRADIENT_STEP,
    )
    .unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Registers two random `n`-actor graphs and compares the Hungarian total
/// cost with exhaustive enumeration. Returns `(hungarian, brute force)`.
pub fn registration_vs_brute_force(r: &mut ChaCha8Rng, n: usize) -> (f64, f64) {
    let d = 3;
    let a = random_graph(r, n, d, true);
    let b = random_graph(r, n, d, true);
    let (w1, w2) = (r.gen_range(0.0..2.0), r.gen_range(0.0..2.0));
    let cost = registration_cost(&a, &b, w1, w2).unwrap();
    let perm = register(&a, &b, w1, w2).unwrap();
    let found: f64 = perm.forward().iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    let best = permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    (found, best)
}

/// Independent computation of the actor-block adjacency: `None` marks an
/// entry that must be pruned to exactly 0.
pub fn adjacency_oracle(boxes: &[BBox]) -> Vec<Vec<Option<f64>>> {
    let n = boxes.len();
    let desc: Vec<[f64; 4]> = boxes
        .iter()
        .map(|b| {
            let (x1, y1, x2, y2) = (b.x1 as f64, b.y1 as f64, b.x2 as f64, b.y2 as f64);
            [(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1]
        })
        .collect();
    let dist = |i: usize, j: usize| -> f64 { (0..4).map(|k| (desc[i][k] - desc[j][k]).powi(2)).sum::<f64>().sqrt() };
    let off: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let mean = if off.is_empty() {
        0.0
    } else {
        off.iter().map(|&(i, j)| dist(i, j)).sum::<f64>() / off.len() as f64
    };
    (0..n)
        .map(|i| {
            let s: Vec<f64> = (0..n)
                .map(|j| {
                    let v = if i == j { 0.0 } else { mean - dist(i, j) };
                    if v.abs() <= 1e-6 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            let sig: Vec<f64> = s
                .iter()
                .map(|v| 1.0 / (1.0 + (-(if norm > 0.0 { v / norm } else { 0.0 })).exp()))
                .collect();
            let row_mean = if n > 1 {
                (0..n).filter(|&j| j != i).map(|j| sig[j]).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            (0..n)
                .map(|j| {
                    if i == j {
                        Some(1.0)
                    } else if sig[j] < row_mean {
                        None
                    } else {
                        Some(sig[j])
                    }
                })
                .collect()
        })
        .collect()
}

/// Violations of the adjacency contract on random boxes: entries outside
/// [0, 1], entries the oracle prunes that are not exactly 0, and surviving
/// entries that disagree with the oracle.
pub fn adjacency_violations(r: &mut ChaCha8Rng) -> usize {
    let n = r.gen_range(1..9);
    let boxes = random_boxes(r, n);
    let a = social_adjacency(&boxes).unwrap();
    let oracle = adjacency_oracle(&boxes);
    let mut bad = 0;
    for i in 0..n {
        for j in 0..n {
            let v = a[i][j];
            if !(0.0..=1.0).contains(&v) {
                bad += 1;
            }
            match oracle[i][j] {
                None if v != 0.0 => bad += 1,
                Some(o) if (o - v).abs() > 1e-9 => bad += 1,
                _ => {}
            }
        }
    }
    bad
}

/// Relabelling actor slots permutes the rows of the spatial smoothing output
/// the same way (action row fixed).
pub fn equivariance_violated(r: &mut ChaCha8Rng) -> bool {
    let n = r.gen_range(1..7);
    let d = r.gen_range(1..4);
    let connect = r.gen_bool(0.5);
    let g = random_graph(r, n, d, connect);
    let weight: Tensor<f32> = random_tensor(r, &[d + 4, d + 4], 1.0).cast();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.gen_range(0..=i));
    }
    let base = spatial_smooth(&g, &weight).unwrap();
    let permuted = spatial_smooth(&g.permute_actors(&order).unwrap(), &weight).unwrap();
    let full: Vec<usize> = order.iter().copied().chain(std::iter::once(n)).collect();
    full.iter().enumerate().any(|(k, &i)| {
        base.row(i)
            .iter()
            .zip(permuted.row(k))
            .any(|(a, b)| (a - b).abs() > 1e-5 * a.abs().max(1.0))
    })
}

/// Translating every box by a common offset leaves the actor block unchanged.
pub fn translation_violated(r: &mut ChaCha8Rng) -> bool {
    let n = r.gen_range(1..8);
    // Keep translated boxes inside the unit square.
    let boxes: Vec<BBox> = random_boxes(r, n)
        .into_iter()
        .map(|b| BBox::from_center(b.center().0 * 0.5 + 0.25, b.center().1 * 0.5 + 0.25, b.width() * 0.5, b.height() * 0.5))
        .collect();
    let (dx, dy) = (r.gen_range(-0.2..0.2f32), r.gen_range(-0.2..0.2f32));
    let moved: Vec<BBox> = boxes.iter().map(|b| b.translate(dx, dy)).collect();
    let a = social_adjacency(&boxes).unwrap();
    let b = social_adjacency(&moved).unwrap();
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .any(|(x, y)| (x == &0.0) != (y == &0.0) || (x - y).abs() > 1e-4)
}
