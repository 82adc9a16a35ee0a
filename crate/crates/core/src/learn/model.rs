//! Learnable parameters and the differentiable forward pieces shared by
//! training and inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::graph::{smooth, ActionGraph, BOX_DIMS};
use crate::numerics::{BoundParams, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::predictor::Predictor;

/// Standard deviation of the noise added to identity-initialised maps.
pub const IDENTITY_INIT_NOISE: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct ModelParams<T: Real = f32> {
    pub store: ParamStore<T>,
    pub predictor: Predictor,
    pub event_weight: ParamId,
    pub event_bias: ParamId,
    pub spatial: Vec<ParamId>,
    pub temporal: Vec<ParamId>,
    pub act_weight: ParamId,
    pub act_bias: ParamId,
    pub box_weight: ParamId,
    pub box_bias: ParamId,
    pub action_node: bool,
}

fn noisy_identity<T: Real>(n: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let noise = Normal::new(0.0, IDENTITY_INIT_NOISE).expect("valid std");
    let mut t = Tensor::<T>::identity(n);
    for v in t.data_mut() {
        *v = *v + T::of(noise.sample(rng));
    }
    t
}

fn uniform<T: Real>(shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let dist = Uniform::new_inclusive(-bound, bound);
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| T::of(dist.sample(rng))).collect()).expect("sized")
}

fn find<T: Real>(store: &ParamStore<T>, name: &str) -> Result<ParamId> {
    store
        .find(name)
        .ok_or_else(|| Error::invalid(format!("parameter {name} missing")))
}

impl<T: Real> ModelParams<T> {
    /// Fresh parameters for streams with `channels` map channels and
    /// `roi_dim`-wide ROI features, seeded from `config.seed`.
    pub fn new(config: &Config, channels: usize, roi_dim: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let predictor = Predictor::register(
            &mut store,
            channels,
            config.event_dim,
            config.recurrent_layers,
            &mut rng,
        )?;
        let width = roi_dim + BOX_DIMS;
        let e = config.event_dim;
        let event_weight = store.add("event.weight", uniform(vec![e, width], 1.0 / (e as f64).sqrt(), &mut rng));
        let event_bias = store.add("event.bias", Tensor::zeros(vec![width]));
        let spatial = (0..config.spatial_layers)
            .map(|l| store.add(format!("spatial{l}.weight"), noisy_identity(width, &mut rng)))
            .collect();
        let temporal = (0..config.temporal_layers)
            .map(|l| store.add(format!("temporal{l}.weight"), noisy_identity(width, &mut rng)))
            .collect();
        let act_weight = store.add("actor.feature.weight", noisy_identity(width, &mut rng));
        let act_bias = store.add("actor.feature.bias", Tensor::zeros(vec![width]));
        let box_weight = store.add(
            "actor.box.weight",
            uniform(vec![width, BOX_DIMS], 1.0 / (width as f64).sqrt(), &mut rng),
        );
        let box_bias = store.add("actor.box.bias", Tensor::zeros(vec![BOX_DIMS]));
        Ok(Self {
            store,
            predictor,
            event_weight,
            event_bias,
            spatial,
            temporal,
            act_weight,
            act_bias,
            box_weight,
            box_bias,
            action_node: config.action_node,
        })
    }

    /// Rebinds handles to an existing store (e.g. from a checkpoint).
    pub fn locate(store: ParamStore<T>, config: &Config) -> Result<Self> {
        let predictor = Predictor::locate(&store)?;
        let layers = |prefix: &str, n: usize| -> Result<Vec<ParamId>> {
            (0..n).map(|l| find(&store, &format!("{prefix}{l}.weight"))).collect()
        };
        let spatial = layers("spatial", config.spatial_layers)?;
        let temporal = layers("temporal", config.temporal_layers)?;
        let model = Self {
            predictor,
            event_weight: find(&store, "event.weight")?,
            event_bias: find(&store, "event.bias")?,
            spatial,
            temporal,
            act_weight: find(&store, "actor.feature.weight")?,
            act_bias: find(&store, "actor.feature.bias")?,
            box_weight: find(&store, "actor.box.weight")?,
            box_bias: find(&store, "actor.box.bias")?,
            action_node: config.action_node,
            store,
        };
        if model.predictor.hidden() != config.event_dim || model.predictor.depth() != config.recurrent_layers {
            return Err(Error::invalid("parameters do not match the configured predictor shape"));
        }
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            store: self.store.cast(),
            predictor: self.predictor.clone(),
            event_weight: self.event_weight,
            event_bias: self.event_bias,
            spatial: self.spatial.clone(),
            temporal: self.temporal.clone(),
            act_weight: self.act_weight,
            act_bias: self.act_bias,
            box_weight: self.box_weight,
            box_bias: self.box_bias,
            action_node: self.action_node,
        }
    }

    pub fn channels(&self) -> usize {
        self.predictor.channels()
    }

    /// Node feature width `D + 4`.
    pub fn node_width(&self) -> usize {
        self.store.get(self.event_weight).cols()
    }

    pub fn roi_dim(&self) -> usize {
        self.node_width() - BOX_DIMS
    }

    pub fn is_finite(&self) -> bool {
        self.store.iter().all(|(_, t)| t.is_finite())
    }

    /// Event feature projected to node width, or zeros when the action node
    /// is disabled.
    pub fn action_row(&self, tape: &mut Tape<T>, params: &BoundParams, event: Var) -> Result<Var> {
        if !self.action_node {
            return Ok(tape.constant(Tensor::zeros(vec![self.node_width()])));
        }
        let projected = tape.matmul(event, params.var(self.event_weight))?;
        tape.add(projected, params.var(self.event_bias))
    }

    /// Node rows of `graph` (actor slots as constants, then `action_row`)
    /// passed through the spatial smoothing layers.
    pub fn spatial_forward(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        graph: &ActionGraph,
        action_row: Var,
    ) -> Result<Var> {
        let slots = graph.actor_slots();
        let features = graph.feature_matrix();
        let actors = tape.constant(Tensor::new(
            vec![slots, features.cols()],
            features.data()[..slots * features.cols()].iter().map(|&v| T::of(v as f64)).collect(),
        )?);
        let mut x = tape.concat_rows(&[actors, action_row])?;
        let a = tape.constant(graph.adjacency().cast());
        for &w in &self.spatial {
            x = smooth(tape, a, x, params.var(w))?;
        }
        Ok(x)
    }

    /// Temporal smoothing layers over a composite adjacency.
    pub fn temporal_forward(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        adjacency: &Tensor<f32>,
        features: Var,
    ) -> Result<Var> {
        let a = tape.constant(adjacency.cast());
        let mut x = features;
        for &w in &self.temporal {
            x = smooth(tape, a, x, params.var(w))?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> Config {
        Config {
            event_dim: 6,
            recurrent_layers: 1,
            ..Config::default()
        }
    }

    #[test]
    fn deterministic_and_locatable() {
        let c = small_config();
        let a = ModelParams::<f32>::new(&c, 3, 5).unwrap();
        let b = ModelParams::<f32>::new(&c, 3, 5).unwrap();
        assert_eq!(a.store, b.store);
        assert_eq!(a.node_width(), 9);
        let located = ModelParams::locate(a.store.clone(), &c).unwrap();
        assert_eq!(located.spatial, a.spatial);
        assert_eq!(located.box_bias, a.box_bias);
        let mut other = c.clone();
        other.spatial_layers = 2;
        assert!(ModelParams::locate(a.store.clone(), &other).is_err());
    }

    #[test]
    fn ablation_layer_counts() {
        let mut c = small_config();
        c.spatial_layers = 0;
        c.temporal_layers = 2;
        let m = ModelParams::<f32>::new(&c, 3, 5).unwrap();
        assert!(m.spatial.is_empty());
        assert_eq!(m.temporal.len(), 2);
        assert!(m.store.find("temporal1.weight").is_some());
    }

    #[test]
    fn disabled_action_node_row_is_zero() {
        let mut c = small_config();
        c.action_node = false;
        let m = ModelParams::<f32>::new(&c, 3, 5).unwrap();
        let mut tape = Tape::new();
        let bound = m.store.bind(&mut tape);
        let e = tape.constant(Tensor::vector(vec![1.0; 6]));
        let row = m.action_row(&mut tape, &bound, e).unwrap();
        assert_eq!(tape.value(row), &Tensor::zeros(vec![9]));
    }
}
