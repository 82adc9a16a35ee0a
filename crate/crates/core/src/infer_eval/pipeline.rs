//! Label inference: stream each video through the frozen model, smooth its
//! whole-video composite graph, then cluster across the corpus.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::align::align_labels;
use super::evaluate::video_name;
use super::kmeans::{elbow_k, kmeans, nearest};
use super::predictions::{Detection, Predictions, VideoPrediction};
use super::spectral::spectral_clustering;
use crate::config::{Config, KMode};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::graph::{build_action_graph, ActionGraph};
use crate::ingest::{mix_seed, read_stream, FrameFeatures};
use crate::learn::{actor_inputs, map_shape, uniform_attention, Checkpoint, ModelParams};
use crate::numerics::{Tape, Tensor};
use crate::predictor::{attention, global_loss, map_to_locations, motion_mask, PredictorState};
use crate::temporal::{build_composite, register_frames, PermutationMatrix};

/// Config keys fixed by a trained model.
pub const ARCHITECTURE_KEYS: [&str; 5] = ["recurrent_layers", "event_dim", "spatial_layers", "temporal_layers", "action_node"];

/// One actor node of one frame after temporal smoothing.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorObservation {
    /// Position of the frame within the video.
    pub frame: usize,
    pub frame_index: u32,
    pub bbox: BBox,
    /// Registration chain; nodes linked across consecutive frames share it.
    pub chain: u32,
    pub feature: Vec<f64>,
}

/// Actor block of one frame's social adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBlock {
    pub frame_index: u32,
    /// Indices into [`VideoFeatures::actors`], in slot order.
    pub actors: Vec<usize>,
    pub adjacency: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeatures {
    pub name: String,
    pub actors: Vec<ActorObservation>,
    pub frames: Vec<FrameBlock>,
    pub frames_read: u64,
}

impl VideoFeatures {
    /// Mean smoothed actor feature, `None` for a video without actors.
    pub fn pooled(&self) -> Option<Vec<f64>> {
        mean_rows(self.actors.iter().map(|a| a.feature.as_slice()))
    }
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut sum: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for r in rows {
        let s = sum.get_or_insert_with(|| vec![0.0; r.len()]);
        for (a, b) in s.iter_mut().zip(r) {
            *a += b;
        }
        n += 1;
    }
    sum.map(|s| s.into_iter().map(|v| v / n as f64).collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferenceSummary {
    pub videos: usize,
    pub frames_read: u64,
    pub actor_nodes: usize,
    pub group_k: usize,
    pub action_k: usize,
    /// Videos without any actor node; their group id is the cluster nearest
    /// the zero vector.
    pub flagged_videos: Vec<String>,
}

/// Frozen model plus the clustering settings.
pub struct Inferencer {
    config: Config,
    model: ModelParams<f32>,
}

struct PendingStep {
    prediction: Tensor<f32>,
    event: Tensor<f32>,
}

impl Inferencer {
    pub fn new(config: Config, model: ModelParams<f32>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, model })
    }

    /// Uses the model stored in `checkpoint`; clustering settings come from
    /// `config`, whose architecture keys must agree with the checkpoint.
    pub fn from_checkpoint(checkpoint: &Checkpoint, config: Config) -> Result<Self> {
        for key in ARCHITECTURE_KEYS {
            let (fixed, given) = (checkpoint.config.get(key)?, config.get(key)?);
            if fixed != given {
                return Err(Error::Config(format!(
                    "{key}={given} conflicts with the checkpoint's {key}={fixed}"
                )));
            }
        }
        Self::new(config, checkpoint.model()?)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    fn step(&self, state: &PredictorState<f32>, frame: &FrameFeatures) -> Result<(PendingStep, PredictorState<f32>)> {
        let mut tape = Tape::new();
        let bound = self.model.store.bind_frozen(&mut tape);
        let tape_state = state.bind(&mut tape);
        let input = tape.constant(map_to_locations(&frame.global_map)?);
        let step = self.model.predictor.step(&mut tape, &bound, input, &tape_state)?;
        let next = step.state.detach(&tape, step.event);
        Ok((
            PendingStep {
                prediction: tape.value(step.prediction).clone(),
                event: tape.value(step.event).clone(),
            },
            next,
        ))
    }

    fn error_attention(&self, pending: &PendingStep, prev: &FrameFeatures, frame: &FrameFeatures) -> Result<Tensor<f32>> {
        let (h, w) = map_shape(frame);
        let mut tape = Tape::<f32>::new();
        let predicted = tape.constant(pending.prediction.clone());
        let target = tape.constant(map_to_locations(&frame.global_map)?);
        let mask = tape.constant(motion_mask(&prev.global_map, &frame.global_map)?.reshape(vec![h * w])?);
        let (_, errors) = global_loss(&mut tape, predicted, target, mask)?;
        Ok(attention(&tape.value(errors).clone().reshape(vec![h, w])?))
    }

    fn frame_graph(&self, frame: &FrameFeatures, alpha: &Tensor<f32>, event: &Tensor<f32>) -> Result<(ActionGraph, Tensor<f32>)> {
        let (boxes, feats, sources) = actor_inputs(frame, alpha, self.config.attention_slots)?;
        let mut tape = Tape::new();
        let bound = self.model.store.bind_frozen(&mut tape);
        let event = tape.constant(event.clone());
        let action = self.model.action_row(&mut tape, &bound, event)?;
        let action_value = tape.value(action).clone();
        let graph = build_action_graph(&boxes, &feats, &sources, &action_value, self.config.action_node)?;
        let rows = self.model.spatial_forward(&mut tape, &bound, &graph, action)?;
        Ok((graph, tape.value(rows).clone()))
    }

    /// Streams one video and returns its smoothed actor nodes.
    pub fn video_features<I>(&self, name: &str, frames: I) -> Result<VideoFeatures>
    where
        I: IntoIterator<Item = Result<FrameFeatures>>,
    {
        let mut state: Option<PredictorState<f32>> = None;
        let mut prev: Option<(FrameFeatures, PendingStep)> = None;
        let mut last_attention: Option<Tensor<f32>> = None;
        let mut graphs: Vec<ActionGraph> = Vec::new();
        let mut rows: Vec<Tensor<f32>> = Vec::new();
        let mut perms: Vec<PermutationMatrix> = Vec::new();
        let mut frame_indices: Vec<u32> = Vec::new();
        let mut frames_read = 0u64;

        let mut push = |frame: &FrameFeatures, alpha: &Tensor<f32>, event: &Tensor<f32>| -> Result<()> {
            let (graph, r) = self.frame_graph(frame, alpha, event)?;
            if let Some(last) = graphs.last() {
                perms.push(register_frames(last, &graph, self.config.w_feature, self.config.w_iou)?);
            }
            graphs.push(graph);
            rows.push(r);
            frame_indices.push(frame.frame_index);
            Ok(())
        };

        for item in frames {
            let frame = item?;
            frames_read += 1;
            let dims = frame
                .dims()
                .ok_or_else(|| Error::invalid(format!("frame {} has malformed tensors", frame.frame_index)))?;
            if dims.channels != self.model.channels() || dims.feature_dim != self.model.roi_dim() {
                return Err(Error::invalid(format!(
                    "frame {} has C={} D={}, model expects C={} D={}",
                    frame.frame_index,
                    dims.channels,
                    dims.feature_dim,
                    self.model.channels(),
                    self.model.roi_dim()
                )));
            }
            frame.validate(&dims)?;
            let st = state.get_or_insert_with(|| self.model.predictor.zero_state(dims.cells()));
            if let Some((p, pending)) = prev.take() {
                let alpha = self.error_attention(&pending, &p, &frame)?;
                push(&p, &alpha, &pending.event)?;
                last_attention = Some(alpha);
            }
            let (pending, next) = self.step(st, &frame)?;
            *st = next;
            prev = Some((frame, pending));
        }
        if let Some((p, pending)) = prev.take() {
            let (h, w) = map_shape(&p);
            let alpha = last_attention.unwrap_or_else(|| uniform_attention(h, w));
            push(&p, &alpha, &pending.event)?;
        }
        drop(push);

        if graphs.is_empty() {
            return Ok(VideoFeatures {
                name: name.to_string(),
                actors: Vec::new(),
                frames: Vec::new(),
                frames_read,
            });
        }
        let composite = build_composite(&graphs, &perms)?;
        let mut tape = Tape::<f32>::new();
        let bound = self.model.store.bind_frozen(&mut tape);
        let per_frame: Vec<_> = rows.into_iter().map(|r| tape.constant(r)).collect();
        let stacked = composite.assemble(&mut tape, &per_frame)?;
        let smoothed = self.model.temporal_forward(&mut tape, &bound, composite.adjacency(), stacked)?;
        let smoothed = tape.value(smoothed);

        let mut actors = Vec::new();
        let mut blocks = Vec::new();
        let mut chain_of: Vec<Option<u32>> = Vec::new();
        let mut next_chain = 0u32;
        for (t, g) in composite.graphs().iter().enumerate() {
            let mut chains = vec![None; composite.slots()];
            if t > 0 {
                for (i, j) in composite.perms()[t - 1].registered_pairs() {
                    chains[j] = chain_of[i];
                }
            }
            let mut block = Vec::new();
            let mut slot_of = Vec::new();
            for (s, node) in g.nodes().iter().enumerate().take(composite.slots()) {
                if !node.is_actor() {
                    continue;
                }
                let chain = *chains[s].get_or_insert_with(|| {
                    next_chain += 1;
                    next_chain - 1
                });
                block.push(actors.len());
                slot_of.push(s);
                actors.push(ActorObservation {
                    frame: t,
                    frame_index: frame_indices[t],
                    bbox: node.bbox,
                    chain,
                    feature: smoothed.row(composite.node_index(t, s)).iter().map(|&v| v as f64).collect(),
                });
            }
            let adjacency = slot_of
                .iter()
                .map(|&i| slot_of.iter().map(|&j| g.adjacency().at(i, j) as f64).collect())
                .collect();
            blocks.push(FrameBlock {
                frame_index: frame_indices[t],
                actors: block,
                adjacency,
            });
            chain_of = chains;
        }
        Ok(VideoFeatures {
            name: name.to_string(),
            actors,
            frames: blocks,
            frames_read,
        })
    }

    /// Clusters every video's nodes into group, action, membership and
    /// social labels.
    pub fn label(&self, videos: &[VideoFeatures]) -> Result<(Predictions, InferenceSummary)> {
        let seed = self.config.seed;
        let mut summary = InferenceSummary {
            videos: videos.len(),
            frames_read: videos.iter().map(|v| v.frames_read).sum(),
            actor_nodes: videos.iter().map(|v| v.actors.len()).sum(),
            ..InferenceSummary::default()
        };

        // Group activity over pooled video features.
        let pooled: Vec<Option<Vec<f64>>> = videos.iter().map(VideoFeatures::pooled).collect();
        let points: Vec<Vec<f64>> = pooled.iter().flatten().cloned().collect();
        let group_ids: Vec<u32> = if points.is_empty() {
            vec![0; videos.len()]
        } else {
            let k = self.choose_k(&points, self.config.group_k, seed)?;
            summary.group_k = k;
            let model = kmeans(&points, k, seed)?;
            let mut it = model.assignments.iter();
            pooled
                .iter()
                .zip(videos)
                .map(|(p, v)| match p {
                    Some(_) => *it.next().expect("one assignment per pooled video") as u32,
                    None => {
                        summary.flagged_videos.push(v.name.clone());
                        let zero = vec![0.0; model.centroids[0].len()];
                        nearest(&zero, &model.centroids).0 as u32
                    }
                })
                .collect()
        };

        // Individual actions over every actor node of the corpus.
        let rows: Vec<Vec<f64>> = videos.iter().flat_map(|v| v.actors.iter().map(|a| a.feature.clone())).collect();
        let (actions, scores, centroids) = if rows.is_empty() {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            let k = self.choose_k(&rows, self.config.action_k, seed)?;
            summary.action_k = k;
            let model = kmeans(&rows, k, seed)?;
            let dist: Vec<f64> = rows
                .iter()
                .zip(&model.assignments)
                .map(|(r, &c)| sq_dist(r, &model.centroids[c]).sqrt())
                .collect();
            let (lo, hi) = dist
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
            let scores = dist
                .iter()
                .map(|&d| if hi > lo { (hi - d) / (hi - lo) } else { 1.0 })
                .collect();
            (model.assignments, scores, model.centroids)
        };

        let mut out = Predictions::default();
        let mut offset = 0;
        for (v, video) in videos.iter().enumerate() {
            let n = video.actors.len();
            let membership = self.video_membership(video, mix_seed(seed, v as u64))?;
            let mut detections = Vec::with_capacity(n);
            let mut social_of: BTreeMap<(usize, u32), u32> = BTreeMap::new();
            let mut community_rows: BTreeMap<(usize, u32), Vec<&[f64]>> = BTreeMap::new();
            for (a, &m) in video.actors.iter().zip(&membership) {
                community_rows.entry((a.frame, m)).or_default().push(&a.feature);
            }
            for (key, members) in community_rows {
                let mean = mean_rows(members.into_iter()).expect("non-empty community");
                social_of.insert(key, nearest(&mean, &centroids).0 as u32);
            }
            for (i, a) in video.actors.iter().enumerate() {
                detections.push(Detection {
                    frame_index: a.frame_index,
                    chain_id: a.chain,
                    bbox: a.bbox,
                    action: actions[offset + i] as u32,
                    score: scores[offset + i],
                    membership: membership[i],
                    social: social_of[&(a.frame, membership[i])],
                });
            }
            offset += n;
            out.videos.push(VideoPrediction {
                name: video.name.clone(),
                group_activity: group_ids[v],
                detections,
            });
        }
        Ok((out, summary))
    }

    fn choose_k(&self, points: &[Vec<f64>], k_gt: usize, seed: u64) -> Result<usize> {
        let k = k_gt.clamp(1, points.len());
        match self.config.k_mode {
            KMode::Gt => Ok(k),
            KMode::Opt => elbow_k(points, k, (3 * k_gt).min(points.len()), seed),
        }
    }

    /// Per-frame communities, relabelled to agree with the previous frame
    /// along registration chains, then fixed per chain by majority vote.
    fn video_membership(&self, video: &VideoFeatures, seed: u64) -> Result<Vec<u32>> {
        let mut per_actor = vec![0u32; video.actors.len()];
        let mut prev_by_chain: BTreeMap<u32, u32> = BTreeMap::new();
        let mut next_id = 0u32;
        for block in &video.frames {
            if block.actors.is_empty() {
                prev_by_chain.clear();
                continue;
            }
            let raw: Vec<u32> = spectral_clustering(&block.adjacency, self.config.membership_groups, seed)?
                .into_iter()
                .map(|c| c as u32)
                .collect();
            let (cur, prev): (Vec<u32>, Vec<u32>) = block
                .actors
                .iter()
                .zip(&raw)
                .filter_map(|(&a, &c)| prev_by_chain.get(&video.actors[a].chain).map(|&p| (c, p)))
                .unzip();
            let alignment = align_labels(&cur, &prev);
            let mut fresh: BTreeMap<u32, u32> = BTreeMap::new();
            let mut labelled = BTreeMap::new();
            for (&a, &c) in block.actors.iter().zip(&raw) {
                let id = match alignment.apply(c) {
                    Some(id) => id,
                    None => *fresh.entry(c).or_insert_with(|| {
                        next_id += 1;
                        next_id - 1
                    }),
                };
                next_id = next_id.max(id + 1);
                per_actor[a] = id;
                labelled.insert(video.actors[a].chain, id);
            }
            prev_by_chain = labelled;
        }

        let mut votes: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
        for (a, &id) in video.actors.iter().zip(&per_actor) {
            *votes.entry(a.chain).or_default().entry(id).or_default() += 1;
        }
        let winner: BTreeMap<u32, u32> = votes
            .into_iter()
            .map(|(chain, counts)| {
                let best = counts
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(id, _)| id)
                    .expect("chain has members");
                (chain, best)
            })
            .collect();
        Ok(video.actors.iter().map(|a| winner[&a.chain]).collect())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Runs inference over stream files; each video is named by its file stem.
pub fn infer_streams(checkpoint: &Checkpoint, config: Config, paths: &[PathBuf]) -> Result<(Predictions, InferenceSummary)> {
    let inferencer = Inferencer::from_checkpoint(checkpoint, config)?;
    let videos = paths
        .iter()
        .map(|p| {
            let reader = read_stream(p)?;
            inferencer
                .video_features(&video_name(p), reader)
                .map_err(|e| Error::invalid(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    inferencer.label(&videos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_generate, MotionPattern, SceneSpec, StreamDims};

    fn config() -> Config {
        Config {
            event_dim: 8,
            recurrent_layers: 1,
            attention_slots: 16,
            ..Config::default()
        }
    }

    fn dims() -> StreamDims {
        StreamDims {
            channels: 4,
            height: 8,
            width: 8,
            feature_dim: 6,
        }
    }

    fn scene(patterns: Vec<MotionPattern>, frames: usize, seed: u64) -> Vec<FrameFeatures> {
        let spec = SceneSpec {
            patterns,
            actors_per_group: 2,
            noise: 0.02,
            frames,
            seed,
            dims: dims(),
        };
        synth_generate(&spec).unwrap().0
    }

    fn inferencer() -> Inferencer {
        let c = config();
        let model = ModelParams::new(&c, 4, 6).unwrap();
        Inferencer::new(c, model).unwrap()
    }

    #[test]
    fn chains_follow_registration() {
        let inf = inferencer();
        let frames = scene(vec![MotionPattern::Stationary, MotionPattern::Stationary], 5, 2);
        let v = inf.video_features("v", frames.into_iter().map(Ok)).unwrap();
        assert_eq!(v.frames.len(), 5);
        assert_eq!(v.frames_read, 5);
        let n0 = v.frames[0].actors.len();
        assert!(n0 > 0);
        // Static scene with a constant actor count: every node is registered
        // to the next frame, so the first frame's chains are all there is.
        assert!(v.frames.iter().all(|b| b.actors.len() == n0));
        let chains: std::collections::BTreeSet<u32> = v.actors.iter().map(|a| a.chain).collect();
        assert_eq!(chains.len(), n0);
        assert!(v.actors.iter().all(|a| a.feature.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn labels_cover_every_actor() {
        let inf = inferencer();
        let videos: Vec<VideoFeatures> = (0..4)
            .map(|i| {
                let pats = if i % 2 == 0 {
                    vec![MotionPattern::Stationary, MotionPattern::Stationary]
                } else {
                    vec![MotionPattern::LinearWalk, MotionPattern::LinearWalk]
                };
                inf.video_features(&format!("v{i}"), scene(pats, 4, i).into_iter().map(Ok))
                    .unwrap()
            })
            .collect();
        let (pred, summary) = inf.label(&videos).unwrap();
        assert_eq!(summary.videos, 4);
        assert_eq!(summary.group_k, 2);
        assert!(summary.flagged_videos.is_empty());
        for (p, v) in pred.videos.iter().zip(&videos) {
            assert_eq!(p.detections.len(), v.actors.len());
            assert!(p.group_activity < 2);
            for d in &p.detections {
                assert!((0.0..=1.0).contains(&d.score));
                assert!(d.action < 2);
            }
        }
        let again = inf.label(&videos).unwrap().0;
        assert_eq!(again, pred);
    }

    #[test]
    fn empty_video_is_flagged() {
        let inf = inferencer();
        let full = inf
            .video_features("a", scene(vec![MotionPattern::Stationary], 3, 1).into_iter().map(Ok))
            .unwrap();
        let empty = inf.video_features("b", std::iter::empty()).unwrap();
        let (pred, summary) = inf.label(&[full, empty]).unwrap();
        assert_eq!(summary.flagged_videos, vec!["b".to_string()]);
        assert!(pred.videos[1].detections.is_empty());
    }

    #[test]
    fn architecture_must_match_checkpoint() {
        let c = config();
        let model = ModelParams::new(&c, 4, 6).unwrap();
        let ck = Checkpoint::new(c.clone(), 0, &model);
        let mut other = c.clone();
        other.group_k = 5;
        assert!(Inferencer::from_checkpoint(&ck, other).is_ok());
        let mut other = c;
        other.temporal_layers = 0;
        assert!(Inferencer::from_checkpoint(&ck, other).is_err());
    }

    #[test]
    fn opt_mode_stays_in_range() {
        let mut c = config();
        c.k_mode = KMode::Opt;
        let model = ModelParams::new(&c, 4, 6).unwrap();
        let inf = Inferencer::new(c, model).unwrap();
        let v = inf
            .video_features("a", scene(vec![MotionPattern::Queueing, MotionPattern::LinearWalk], 4, 5).into_iter().map(Ok))
            .unwrap();
        let (_, summary) = inf.label(&[v]).unwrap();
        assert!((2..=6).contains(&summary.action_k));
    }
}
