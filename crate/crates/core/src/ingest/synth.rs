//! Deterministic synthetic multi-actor scenes with ground truth.
//!
//! Groups occupy horizontal lanes; actors of a group stand side by side and
//! move together according to the group's [`MotionPattern`]. ROI features mix
//! a per-pattern prototype (shared across all scenes), a per-group prototype
//! and a per-actor component, so actors of one group are closer in cosine
//! than actors of different groups. The global map rasterizes occupancy,
//! velocity and appearance of the boxes onto the `H × W` grid.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::stream::{FrameFeatures, StreamDims};
use super::truth::{GroundTruth, TruthRecord};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::numerics::Tensor;

/// Class id written for every synthetic ROI.
pub const PERSON_CLASS: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotionPattern {
    Stationary,
    LinearWalk,
    CrossingPaths,
    Queueing,
}

impl MotionPattern {
    pub const ALL: [MotionPattern; 4] = [
        MotionPattern::Stationary,
        MotionPattern::LinearWalk,
        MotionPattern::CrossingPaths,
        MotionPattern::Queueing,
    ];

    /// Label used for actions and activities in the ground truth.
    pub fn label(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionPattern::Stationary => "stationary",
            MotionPattern::LinearWalk => "walk",
            MotionPattern::CrossingPaths => "crossing",
            MotionPattern::Queueing => "queue",
        }
    }
}

impl fmt::Display for MotionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(MotionPattern::Stationary),
            "walk" | "linear" => Ok(MotionPattern::LinearWalk),
            "crossing" => Ok(MotionPattern::CrossingPaths),
            "queue" | "queueing" => Ok(MotionPattern::Queueing),
            other => Err(Error::invalid(format!("unknown motion pattern {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    /// One entry per social group.
    pub patterns: Vec<MotionPattern>,
    pub actors_per_group: usize,
    pub noise: f32,
    pub frames: usize,
    pub seed: u64,
    pub dims: StreamDims,
}

impl SceneSpec {
    pub fn groups(&self) -> usize {
        self.patterns.len()
    }

    pub fn actors(&self) -> usize {
        self.patterns.len() * self.actors_per_group
    }
}

struct Layout {
    box_w: f32,
    box_h: f32,
    spacing: f32,
    lane_h: f32,
    group_w: f32,
}

impl Layout {
    fn new(spec: &SceneSpec) -> Result<Self> {
        let d = spec.dims;
        let lane_h = 1.0 / spec.groups() as f32;
        let box_w = (1.2 / d.width as f32).max(0.12);
        let box_h = (1.2 / d.height as f32).max(0.18).min(lane_h * 0.9);
        let spacing = box_w * 1.25;
        let group_w = (spec.actors_per_group - 1) as f32 * spacing + box_w;
        if group_w > 0.98 {
            return Err(Error::invalid(format!(
                "{} actors per group do not fit side by side on a {}-wide grid",
                spec.actors_per_group, d.width
            )));
        }
        Ok(Self {
            box_w,
            box_h,
            spacing,
            lane_h,
            group_w,
        })
    }

    /// Free horizontal travel for a group's left edge.
    fn travel(&self) -> f32 {
        (1.0 - 0.02 - self.group_w).max(0.0)
    }
}

/// Maps an unbounded displacement onto `[0, range]` by reflecting at the ends.
fn reflect(v: f32, range: f32) -> f32 {
    if range <= 0.0 {
        return 0.0;
    }
    let m = v.rem_euclid(2.0 * range);
    if m > range {
        2.0 * range - m
    } else {
        m
    }
}

struct GroupMotion {
    pattern: MotionPattern,
    start: f32,
    direction: f32,
}

impl GroupMotion {
    fn displacement(&self, t: f32) -> f32 {
        match self.pattern {
            MotionPattern::Stationary => 0.0,
            MotionPattern::LinearWalk => self.direction * 0.035 * t,
            MotionPattern::CrossingPaths => self.direction * 0.05 * t,
            // Advance on every third frame, hold in between.
            MotionPattern::Queueing => self.direction * 0.03 * ((t + 2.0) / 3.0).floor(),
        }
    }

    fn left_edge(&self, t: f32, layout: &Layout) -> f32 {
        0.01 + reflect(self.start + self.displacement(t), layout.travel())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

/// Appearance direction shared by every scene using `pattern`.
pub fn pattern_prototype(pattern: MotionPattern, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15 ^ pattern.label() as u64);
    unit_vector(&mut rng, dim)
}

/// Generates one scene. The seed fully determines the output.
pub fn synth_generate(spec: &SceneSpec) -> Result<(Vec<FrameFeatures>, GroundTruth)> {
    if spec.patterns.is_empty() || spec.actors_per_group == 0 {
        return Err(Error::invalid("a scene needs at least one group and one actor"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be finite and >= 0, got {}", spec.noise)));
    }
    let d = spec.dims;
    if d.channels == 0 || d.cells() == 0 || d.feature_dim == 0 {
        return Err(Error::invalid(format!("degenerate dimensions {d:?}")));
    }
    if spec.actors() > d.cells() {
        return Err(Error::invalid(format!(
            "{} actors exceed the {}x{} raster capacity",
            spec.actors(),
            d.height,
            d.width
        )));
    }
    let layout = Layout::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let motions: Vec<GroupMotion> = spec
        .patterns
        .iter()
        .enumerate()
        .map(|(g, &pattern)| {
            let travel = layout.travel();
            match pattern {
                MotionPattern::CrossingPaths => {
                    let direction = if g % 2 == 0 { 1.0 } else { -1.0 };
                    let start = if direction > 0.0 { 0.0 } else { travel };
                    GroupMotion {
                        pattern,
                        start,
                        direction,
                    }
                }
                _ => GroupMotion {
                    pattern,
                    start: rng.gen_range(0.0..=travel.max(f32::EPSILON)),
                    direction: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                },
            }
        })
        .collect();

    let group_protos: Vec<Vec<f32>> = (0..spec.groups())
        .map(|_| unit_vector(&mut rng, d.feature_dim))
        .collect();
    let pattern_protos: Vec<Vec<f32>> = spec
        .patterns
        .iter()
        .map(|&p| pattern_prototype(p, d.feature_dim))
        .collect();

    struct Actor {
        id: u32,
        group: usize,
        slot: usize,
        appearance: Vec<f32>,
    }
    let mut actors = Vec::with_capacity(spec.actors());
    for g in 0..spec.groups() {
        for slot in 0..spec.actors_per_group {
            let own = unit_vector(&mut rng, d.feature_dim);
            let appearance = (0..d.feature_dim)
                .map(|k| pattern_protos[g][k] + 0.5 * group_protos[g][k] + 0.25 * own[k])
                .collect();
            actors.push(Actor {
                id: actors.len() as u32,
                group: g,
                slot,
                appearance,
            });
        }
    }

    let group_activity = majority_pattern(&spec.patterns).label();
    let centre = |a: &Actor, t: f32| -> (f32, f32) {
        let left = motions[a.group].left_edge(t, &layout);
        let cx = left + a.slot as f32 * layout.spacing + layout.box_w / 2.0;
        let cy = (a.group as f32 + 0.5) * layout.lane_h;
        (cx, cy)
    };

    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = GroundTruth::default();
    let mut order: Vec<usize> = (0..actors.len()).collect();

    for t in 0..spec.frames {
        let tf = t as f32;
        let mut boxes = Vec::with_capacity(actors.len());
        let mut velocities = Vec::with_capacity(actors.len());
        for a in &actors {
            let (cx, cy) = centre(a, tf);
            let (px, py) = centre(a, tf - 1.0);
            let jx = spec.noise * 0.05 * rng.sample::<f32, _>(StandardNormal);
            let jy = spec.noise * 0.05 * rng.sample::<f32, _>(StandardNormal);
            boxes.push(clamp_box(BBox::from_center(cx + jx, cy + jy, layout.box_w, layout.box_h)));
            velocities.push((cx - px, cy - py));
        }

        let mut map = vec![0f32; d.channels * d.cells()];
        for r in 0..d.height {
            for c in 0..d.width {
                let x = (c as f32 + 0.5) / d.width as f32;
                let y = (r as f32 + 0.5) / d.height as f32;
                let cell = r * d.width + c;
                for (a, b) in actors.iter().zip(&boxes) {
                    if !b.contains(x, y) {
                        continue;
                    }
                    let (vx, vy) = velocities[a.id as usize];
                    map[cell] += 1.0;
                    if d.channels > 1 {
                        map[d.cells() + cell] += 10.0 * vx;
                    }
                    if d.channels > 2 {
                        map[2 * d.cells() + cell] += 10.0 * vy;
                    }
                    for ch in 3..d.channels {
                        map[ch * d.cells() + cell] += 0.5 * a.appearance[(ch - 3) % d.feature_dim];
                    }
                }
            }
        }
        if spec.noise > 0.0 {
            for v in &mut map {
                *v += spec.noise * rng.sample::<f32, _>(StandardNormal);
            }
        }

        order.shuffle(&mut rng);
        let mut rois = Vec::with_capacity(actors.len());
        let mut feats = Vec::with_capacity(actors.len() * d.feature_dim);
        for &i in &order {
            let a = &actors[i];
            rois.push(boxes[i]);
            feats.extend(
                a.appearance
                    .iter()
                    .map(|&v| v + spec.noise * rng.sample::<f32, _>(StandardNormal)),
            );
        }
        for a in &actors {
            let label = spec.patterns[a.group].label();
            truth.records.push(TruthRecord {
                frame_index: t as u32,
                actor_id: a.id,
                bbox: boxes[a.id as usize],
                action: label,
                group_activity,
                membership: a.group as u32,
                social_activity: label,
            });
        }
        frames.push(FrameFeatures {
            frame_index: t as u32,
            global_map: Tensor::new(vec![d.channels, d.height, d.width], map)?,
            rois,
            roi_features: Tensor::new(vec![actors.len(), d.feature_dim], feats)?,
            roi_scores: vec![0.9; actors.len()],
            roi_class_ids: vec![PERSON_CLASS; actors.len()],
        });
    }
    Ok((frames, truth))
}

fn clamp_box(b: BBox) -> BBox {
    let dx = if b.x1 < 0.0 {
        -b.x1
    } else if b.x2 > 1.0 {
        1.0 - b.x2
    } else {
        0.0
    };
    let dy = if b.y1 < 0.0 {
        -b.y1
    } else if b.y2 > 1.0 {
        1.0 - b.y2
    } else {
        0.0
    };
    let t = b.translate(dx, dy);
    BBox::new(t.x1.max(0.0), t.y1.max(0.0), t.x2.min(1.0), t.y2.min(1.0))
}

fn majority_pattern(patterns: &[MotionPattern]) -> MotionPattern {
    let mut best = patterns[0];
    let mut best_count = 0;
    for &p in &MotionPattern::ALL {
        let count = patterns.iter().filter(|&&q| q == p).count();
        if count > best_count {
            best = p;
            best_count = count;
        }
    }
    best
}

/// A named synthetic video.
#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub name: String,
    pub template: usize,
    pub frames: Vec<FrameFeatures>,
    pub truth: GroundTruth,
}

/// A corpus of scenes cycling through activity templates.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    /// Per-group patterns of each template.
    pub templates: Vec<Vec<MotionPattern>>,
    pub videos_per_template: usize,
    pub actors_per_group: usize,
    pub frames: usize,
    pub noise: f32,
    pub seed: u64,
    pub dims: StreamDims,
}

/// Video `i` uses template `i % templates.len()` and a seed derived from the
/// corpus seed and `i`.
pub fn synth_corpus(spec: &CorpusSpec) -> Result<Vec<SynthVideo>> {
    if spec.templates.is_empty() {
        return Err(Error::invalid("corpus needs at least one template"));
    }
    let total = spec.templates.len() * spec.videos_per_template;
    (0..total)
        .map(|i| {
            let template = i % spec.templates.len();
            let scene = SceneSpec {
                patterns: spec.templates[template].clone(),
                actors_per_group: spec.actors_per_group,
                noise: spec.noise,
                frames: spec.frames,
                seed: mix_seed(spec.seed, i as u64),
                dims: spec.dims,
            };
            let (frames, truth) = synth_generate(&scene)?;
            Ok(SynthVideo {
                name: format!("video_{i:03}"),
                template,
                frames,
                truth,
            })
        })
        .collect()
}

/// SplitMix64 step, used to derive independent per-item seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
