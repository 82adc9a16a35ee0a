//! Single-pass streaming trainer with truncated backpropagation over a
//! sliding window of action graphs.

use std::path::PathBuf;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::graph::{build_action_graph, ActionGraph};
use crate::ingest::{read_stream, FrameFeatures, StreamDims};
use crate::numerics::{BoundParams, Sgd, Tape, Tensor, Var};
use crate::predictor::{
    attention, global_loss, map_to_locations, motion_mask, select_actors, PredictorState, PredictorStep, TapeState,
};
use crate::temporal::{build_composite, register_frames, PermutationMatrix};

use super::checkpoint::Checkpoint;
use super::loss::{actor_loss, total_loss, Anticipators};
use super::model::ModelParams;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub videos: usize,
    /// Frames pulled from the input streams.
    pub frames_read: u64,
    pub updates: usize,
    /// Windows whose loss or gradient was non-finite.
    pub skipped_updates: usize,
    pub peak_frames_retained: usize,
    pub peak_graphs_retained: usize,
    /// Masked prediction loss of every frame that had a successor.
    pub global_losses: Vec<f64>,
    /// Total objective per optimisation window.
    pub window_losses: Vec<f64>,
}

/// Selected actor boxes, their ROI feature rows and ROI indices.
pub(crate) fn actor_inputs(
    frame: &FrameFeatures,
    attention_map: &Tensor<f32>,
    slots: usize,
) -> Result<(Vec<BBox>, Tensor<f32>, Vec<usize>)> {
    let selected = select_actors(attention_map, &frame.rois, slots)?;
    let boxes = selected.iter().map(|&i| frame.rois[i]).collect();
    let feats = frame.roi_features.select_rows(&selected);
    Ok((boxes, feats, selected))
}

/// Uniform attention over an `h × w` grid.
pub(crate) fn uniform_attention(h: usize, w: usize) -> Tensor<f32> {
    Tensor::filled(vec![h, w], 1.0 / (h * w) as f32)
}

pub(crate) fn map_shape(frame: &FrameFeatures) -> (usize, usize) {
    let s = frame.global_map.shape();
    (s[1], s[2])
}

struct WindowGraph {
    graph: ActionGraph,
    rows: Var,
    perm: Option<PermutationMatrix>,
}

struct VideoRun {
    tape: Tape<f32>,
    bound: BoundParams,
    state: TapeState,
    prev: Option<FrameFeatures>,
    pending: Option<PredictorStep>,
    last_attention: Option<Tensor<f32>>,
    window: Vec<WindowGraph>,
    global_terms: Vec<Var>,
}

pub struct Trainer {
    config: Config,
    model: ModelParams<f32>,
    sgd: Sgd,
    stats: TrainStats,
}

impl Trainer {
    pub fn new(config: Config, channels: usize, roi_dim: usize) -> Result<Self> {
        let model = ModelParams::new(&config, channels, roi_dim)?;
        let sgd = Sgd::new(config.learning_rate)?;
        Ok(Self {
            config,
            model,
            sgd,
            stats: TrainStats::default(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn model(&self) -> &ModelParams<f32> {
        &self.model
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.config.clone(), self.stats.frames_read, &self.model)
    }

    fn check_frame(&self, frame: &FrameFeatures) -> Result<()> {
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
        frame.validate(&dims)
    }

    fn start_video(&self, cells: usize) -> VideoRun {
        let mut tape = Tape::new();
        let bound = self.model.store.bind(&mut tape);
        let state = self.model.predictor.zero_state::<f32>(cells).bind(&mut tape);
        VideoRun {
            tape,
            bound,
            state,
            prev: None,
            pending: None,
            last_attention: None,
            window: Vec::new(),
            global_terms: Vec::new(),
        }
    }

    /// Streams one video through the model, updating parameters at every
    /// window boundary and at the end of the video.
    pub fn train_video<I>(&mut self, frames: I) -> Result<()>
    where
        I: IntoIterator<Item = Result<FrameFeatures>>,
    {
        let mut run: Option<VideoRun> = None;
        for item in frames {
            let frame = item?;
            self.stats.frames_read += 1;
            self.check_frame(&frame)?;
            let (h, w) = map_shape(&frame);
            let run = run.get_or_insert_with(|| self.start_video(h * w));
            let held = 1 + usize::from(run.prev.is_some());
            self.stats.peak_frames_retained = self.stats.peak_frames_retained.max(held);

            if let Some(prev) = run.prev.take() {
                let step = run.pending.take().expect("a prediction accompanies every retained frame");
                let mask = motion_mask(&prev.global_map, &frame.global_map)?;
                let target = run.tape.constant(map_to_locations(&frame.global_map)?);
                let mask = run.tape.constant(mask.reshape(vec![h * w])?);
                let (loss, errors) = global_loss(&mut run.tape, step.prediction, target, mask)?;
                self.stats.global_losses.push(run.tape.value(loss).item() as f64);
                run.global_terms.push(loss);
                let alpha = attention(&run.tape.value(errors).clone().reshape(vec![h, w])?);
                run.last_attention = Some(alpha.clone());
                self.push_graph(run, &prev, &alpha, step.event)?;
                if run.window.len() >= self.config.bptt_window {
                    self.flush(run, false)?;
                }
            }

            let input = run.tape.constant(map_to_locations(&frame.global_map)?);
            let step = self.model.predictor.step(&mut run.tape, &run.bound, input, &run.state)?;
            run.state = step.state.clone();
            run.pending = Some(step);
            run.prev = Some(frame);
        }
        if let Some(mut run) = run {
            if let Some(prev) = run.prev.take() {
                let step = run.pending.take().expect("a prediction accompanies every retained frame");
                let (h, w) = map_shape(&prev);
                let alpha = run.last_attention.clone().unwrap_or_else(|| uniform_attention(h, w));
                self.push_graph(&mut run, &prev, &alpha, step.event)?;
                self.flush(&mut run, true)?;
            }
        }
        self.stats.videos += 1;
        Ok(())
    }

    fn push_graph(&mut self, run: &mut VideoRun, frame: &FrameFeatures, alpha: &Tensor<f32>, event: Var) -> Result<()> {
        let (boxes, feats, sources) = actor_inputs(frame, alpha, self.config.attention_slots)?;
        let action = self.model.action_row(&mut run.tape, &run.bound, event)?;
        let action_value = run.tape.value(action).clone();
        let graph = build_action_graph(&boxes, &feats, &sources, &action_value, self.config.action_node)?;
        let rows = self.model.spatial_forward(&mut run.tape, &run.bound, &graph, action)?;
        let perm = match run.window.last() {
            Some(prev) => Some(register_frames(
                &prev.graph,
                &graph,
                self.config.w_feature,
                self.config.w_iou,
            )?),
            None => None,
        };
        run.window.push(WindowGraph { graph, rows, perm });
        self.stats.peak_graphs_retained = self.stats.peak_graphs_retained.max(run.window.len());
        Ok(())
    }

    /// Loss over the current window, one gradient step, then a fresh tape
    /// carrying the recurrent state and (unless `last`) the newest graph.
    fn flush(&mut self, run: &mut VideoRun, last: bool) -> Result<()> {
        let tape = &mut run.tape;
        let graphs: Vec<ActionGraph> = run.window.iter().map(|g| g.graph.clone()).collect();
        let perms: Vec<PermutationMatrix> = run.window.iter().skip(1).map(|g| g.perm.clone().expect("registered")).collect();
        let composite = build_composite(&graphs, &perms)?;
        let rows: Vec<Var> = run.window.iter().map(|g| g.rows).collect();
        let stacked = composite.assemble(tape, &rows)?;
        let smoothed = self.model.temporal_forward(tape, &run.bound, composite.adjacency(), stacked)?;

        let mut from = Vec::new();
        let mut to = Vec::new();
        let mut next_boxes = Vec::new();
        for (t, p) in composite.perms().iter().enumerate() {
            for (i, j) in p.registered_pairs() {
                from.push(composite.node_index(t, i));
                to.push(composite.node_index(t + 1, j));
                next_boxes.extend_from_slice(&composite.graphs()[t + 1].nodes()[j].bbox.to_array());
            }
        }
        let current = tape.gather_rows(smoothed, &from)?;
        let next = tape.gather_rows(smoothed, &to)?;
        let next_boxes = tape.constant(Tensor::new(vec![from.len(), 4], next_boxes)?);
        let maps = Anticipators {
            feature_weight: run.bound.var(self.model.act_weight),
            feature_bias: run.bound.var(self.model.act_bias),
            box_weight: run.bound.var(self.model.box_weight),
            box_bias: run.bound.var(self.model.box_bias),
        };
        let l_actor = actor_loss(tape, &maps, current, next, next_boxes)?;

        let l_global = match run.global_terms.split_first() {
            None => tape.constant(Tensor::scalar(0.0)),
            Some((&first, rest)) => {
                let mut sum = first;
                for &term in rest {
                    sum = tape.add(sum, term)?;
                }
                tape.scale(sum, 1.0 / run.global_terms.len() as f64)?
            }
        };
        let total = total_loss(tape, l_global, l_actor, self.config.lambda_global, self.config.lambda_actor)?;
        let value = tape.value(total).item() as f64;
        self.stats.window_losses.push(value);
        if !value.is_finite() {
            self.stats.skipped_updates += 1;
        } else if tape.requires_grad(total) {
            let mut grads = tape.backward(total)?;
            let grads = run.bound.collect(&mut grads, &self.model.store);
            match self.sgd.step(&mut self.model.store, &grads) {
                Ok(()) => self.stats.updates += 1,
                Err(Error::NonFinite(_)) => self.stats.skipped_updates += 1,
                Err(e) => return Err(e),
            }
        }

        let state = PredictorState {
            hidden: run.state.hidden.iter().map(|&v| tape.value(v).clone()).collect(),
            cell: run.state.cell.iter().map(|&v| tape.value(v).clone()).collect(),
            event_feature: Tensor::zeros(vec![self.model.predictor.hidden()]),
        };
        let carried = if last {
            None
        } else {
            run.window.pop().map(|g| (g.graph, tape.value(g.rows).clone()))
        };

        let mut tape = Tape::new();
        run.bound = self.model.store.bind(&mut tape);
        run.state = state.bind(&mut tape);
        run.window.clear();
        run.global_terms.clear();
        if let Some((graph, rows)) = carried {
            let rows = tape.constant(rows);
            run.window.push(WindowGraph { graph, rows, perm: None });
        }
        run.tape = tape;
        Ok(())
    }
}

/// Trains on every stream in order, one pass, and returns the checkpoint.
///
/// With no streams the model is initialised for the default stream
/// dimensions and no frames are trained.
pub fn train_streams(paths: &[PathBuf], config: &Config) -> Result<(Checkpoint, TrainStats)> {
    let mut trainer: Option<Trainer> = None;
    for path in paths {
        let reader = read_stream(path)?;
        let dims = reader.dims();
        let t = match trainer.as_mut() {
            Some(t) => t,
            None => trainer.insert(Trainer::new(config.clone(), dims.channels, dims.feature_dim)?),
        };
        t.train_video(reader).map_err(|e| match e {
            Error::Format { offset, message } => Error::Format {
                offset,
                message: format!("{}: {message}", path.display()),
            },
            other => Error::invalid(format!("{}: {other}", path.display())),
        })?;
    }
    let trainer = match trainer {
        Some(t) => t,
        None => {
            let d = StreamDims::default();
            Trainer::new(config.clone(), d.channels, d.feature_dim)?
        }
    };
    Ok((trainer.checkpoint(), trainer.stats))
}
