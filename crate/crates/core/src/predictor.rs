//! Global next-frame feature prediction, prediction-error attention and
//! actor selection.
//!
//! A stack of LSTM layers runs independently at every spatial location of the
//! `[C, H, W]` global map with weights shared across locations. The top
//! layer's hidden state is projected back to `C` channels to anticipate the
//! next map, and its spatial mean is the event feature.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::numerics::{softmax_in_place, BoundParams, ParamId, ParamStore, Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct LstmLayer {
    w_input: ParamId,
    w_hidden: ParamId,
    bias: ParamId,
}

/// Parameter handles of the recurrent predictor.
#[derive(Clone, Debug)]
pub struct Predictor {
    layers: Vec<LstmLayer>,
    out_weight: ParamId,
    out_bias: ParamId,
    channels: usize,
    hidden: usize,
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> Tensor<T> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::of(rng.gen_range(-bound..=bound))).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

impl Predictor {
    /// Registers `layers` LSTM layers of width `hidden` and the output
    /// projection in `store`.
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        channels: usize,
        hidden: usize,
        layers: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if channels == 0 || hidden == 0 || layers == 0 {
            return Err(Error::invalid(format!(
                "predictor needs positive sizes, got channels={channels} hidden={hidden} layers={layers}"
            )));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut stack = Vec::with_capacity(layers);
        for l in 0..layers {
            let input = if l == 0 { channels } else { hidden };
            stack.push(LstmLayer {
                w_input: store.add(
                    format!("predictor.lstm{l}.w_input"),
                    uniform(rng, vec![input, 4 * hidden], bound),
                ),
                w_hidden: store.add(
                    format!("predictor.lstm{l}.w_hidden"),
                    uniform(rng, vec![hidden, 4 * hidden], bound),
                ),
                bias: store.add(format!("predictor.lstm{l}.bias"), uniform(rng, vec![4 * hidden], bound)),
            });
        }
        let out_weight = store.add("predictor.out.weight", uniform(rng, vec![hidden, channels], bound));
        let out_bias = store.add("predictor.out.bias", uniform(rng, vec![channels], bound));
        Ok(Self {
            layers: stack,
            out_weight,
            out_bias,
            channels,
            hidden,
        })
    }

    /// Rebinds handles to parameters already present in `store`.
    pub fn locate<T: Real>(store: &ParamStore<T>) -> Result<Self> {
        let find = |name: String| {
            store
                .find(&name)
                .ok_or_else(|| Error::invalid(format!("parameter {name} missing")))
        };
        let mut layers = Vec::new();
        while store.find(&format!("predictor.lstm{}.w_input", layers.len())).is_some() {
            let l = layers.len();
            layers.push(LstmLayer {
                w_input: find(format!("predictor.lstm{l}.w_input"))?,
                w_hidden: find(format!("predictor.lstm{l}.w_hidden"))?,
                bias: find(format!("predictor.lstm{l}.bias"))?,
            });
        }
        if layers.is_empty() {
            return Err(Error::invalid("no predictor layers in parameter store"));
        }
        let out_weight = find("predictor.out.weight".into())?;
        let out_bias = find("predictor.out.bias".into())?;
        let shape = store.get(out_weight).shape();
        Ok(Self {
            hidden: shape[0],
            channels: shape[1],
            layers,
            out_weight,
            out_bias,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn out_weight(&self) -> ParamId {
        self.out_weight
    }

    pub fn out_bias(&self) -> ParamId {
        self.out_bias
    }

    /// All-zero state for a map with `cells` locations.
    pub fn zero_state<T: Real>(&self, cells: usize) -> PredictorState<T> {
        PredictorState {
            hidden: vec![Tensor::zeros(vec![cells, self.hidden]); self.layers.len()],
            cell: vec![Tensor::zeros(vec![cells, self.hidden]); self.layers.len()],
            event_feature: Tensor::zeros(vec![self.hidden]),
        }
    }

    /// One recurrent step on a `[H·W, C]` input.
    pub fn step<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        input: Var,
        state: &TapeState,
    ) -> Result<PredictorStep> {
        let in_shape = tape.value(input).shape().to_vec();
        let state_rows = tape.value(state.hidden[0]).rows();
        if in_shape.len() != 2 || in_shape[1] != self.channels || in_shape[0] != state_rows {
            return Err(Error::Shape {
                op: "predict_next",
                lhs: in_shape,
                rhs: vec![state_rows, self.channels],
            });
        }
        let h = self.hidden;
        let mut x = input;
        let mut next = TapeState {
            hidden: Vec::with_capacity(self.layers.len()),
            cell: Vec::with_capacity(self.layers.len()),
        };
        for (l, layer) in self.layers.iter().enumerate() {
            let zx = tape.matmul(x, params.var(layer.w_input))?;
            let zh = tape.matmul(state.hidden[l], params.var(layer.w_hidden))?;
            let z = tape.add(zx, zh)?;
            let z = tape.add_row(z, params.var(layer.bias))?;
            let i = tape.slice_cols(z, 0, h)?;
            let f = tape.slice_cols(z, h, 2 * h)?;
            let g = tape.slice_cols(z, 2 * h, 3 * h)?;
            let o = tape.slice_cols(z, 3 * h, 4 * h)?;
            let i = tape.sigmoid(i)?;
            let f = tape.sigmoid(f)?;
            let g = tape.tanh(g)?;
            let o = tape.sigmoid(o)?;
            let keep = tape.mul(f, state.cell[l])?;
            let write = tape.mul(i, g)?;
            let c = tape.add(keep, write)?;
            let tc = tape.tanh(c)?;
            let hn = tape.mul(o, tc)?;
            next.hidden.push(hn);
            next.cell.push(c);
            x = hn;
        }
        let event = tape.mean_rows(x)?;
        let pred = tape.matmul(x, params.var(self.out_weight))?;
        let prediction = tape.add_row(pred, params.var(self.out_bias))?;
        Ok(PredictorStep {
            prediction,
            event,
            state: next,
        })
    }
}

/// Detached recurrent state carried between frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorState<T: Real = f32> {
    pub hidden: Vec<Tensor<T>>,
    pub cell: Vec<Tensor<T>>,
    pub event_feature: Tensor<T>,
}

impl<T: Real> PredictorState<T> {
    /// Places the state on `tape` as constants.
    pub fn bind(&self, tape: &mut Tape<T>) -> TapeState {
        TapeState {
            hidden: self.hidden.iter().map(|t| tape.constant(t.clone())).collect(),
            cell: self.cell.iter().map(|t| tape.constant(t.clone())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.event_feature.is_finite()
            && self.hidden.iter().all(Tensor::is_finite)
            && self.cell.iter().all(Tensor::is_finite)
    }
}

/// Recurrent state living on a tape.
#[derive(Clone, Debug)]
pub struct TapeState {
    pub hidden: Vec<Var>,
    pub cell: Vec<Var>,
}

impl TapeState {
    pub fn detach<T: Real>(&self, tape: &Tape<T>, event: Var) -> PredictorState<T> {
        PredictorState {
            hidden: self.hidden.iter().map(|&v| tape.value(v).clone()).collect(),
            cell: self.cell.iter().map(|&v| tape.value(v).clone()).collect(),
            event_feature: tape.value(event).clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PredictorStep {
    /// Anticipated next map, `[H·W, C]`.
    pub prediction: Var,
    /// Event feature, `[hidden]`.
    pub event: Var,
    pub state: TapeState,
}

/// `[C, H, W]` → `[H·W, C]`: one row per location.
pub fn map_to_locations<T: Real>(map: &Tensor<f32>) -> Result<Tensor<T>> {
    let s = map.shape();
    if s.len() != 3 {
        return Err(Error::Shape {
            op: "map_to_locations",
            lhs: s.to_vec(),
            rhs: vec![0, 0, 0],
        });
    }
    let (c, cells) = (s[0], s[1] * s[2]);
    let mut data = vec![T::zero(); c * cells];
    for ch in 0..c {
        for cell in 0..cells {
            data[cell * c + ch] = T::of(map.data()[ch * cells + cell] as f64);
        }
    }
    Tensor::new(vec![cells, c], data)
}

/// Per-location motion weight: channel mean of `|next - current|`, divided by
/// its maximum over the map. A map without motion stays all zeros.
pub fn motion_mask(current: &Tensor<f32>, next: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = current.shape();
    if s.len() != 3 || s != next.shape() {
        return Err(Error::Shape {
            op: "motion_mask",
            lhs: s.to_vec(),
            rhs: next.shape().to_vec(),
        });
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let cells = h * w;
    let mut mask = vec![0f64; cells];
    for ch in 0..c {
        for (cell, m) in mask.iter_mut().enumerate() {
            let i = ch * cells + cell;
            *m += (next.data()[i] as f64 - current.data()[i] as f64).abs();
        }
    }
    let max = mask.iter().fold(0f64, |a, &b| a.max(b / c as f64));
    let data = mask
        .into_iter()
        .map(|m| if max > 0.0 { (m / c as f64 / max) as f32 } else { 0.0 })
        .collect();
    Tensor::new(vec![h, w], data)
}

/// Masked prediction error.
///
/// `predicted` and `actual` are `[H·W, C]`, `mask` is `[H·W]`. Returns the
/// scalar loss `sum(P) / (H·W)` and the error map `P = mask ⊙ ‖actual − predicted‖₂`
/// (per location, over channels), both on the tape.
pub fn global_loss<T: Real>(tape: &mut Tape<T>, predicted: Var, actual: Var, mask: Var) -> Result<(Var, Var)> {
    let diff = tape.sub(actual, predicted)?;
    let norms = tape.row_norm(diff)?;
    let errors = tape.mul(mask, norms)?;
    let loss = tape.mean(errors)?;
    Ok((loss, errors))
}

/// Softmax over the flattened error map.
pub fn attention(errors: &Tensor<f32>) -> Tensor<f32> {
    let mut data = errors.data().to_vec();
    if !data.is_empty() {
        softmax_in_place(&mut data);
    }
    Tensor::new(errors.shape().to_vec(), data).expect("same length")
}

/// Picks actor ROIs from the `k` strongest attention cells.
///
/// Cells are ranked by attention, ties in row-major order. Each ranked cell
/// claims the first not-yet-selected ROI (in input order) that contains the
/// cell centre. The result lists claimed ROI indices in input order, so it is
/// a subset of the candidates with at most `min(k, rois.len())` entries.
pub fn select_actors(attention: &Tensor<f32>, rois: &[BBox], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("attention slot count must be at least 1"));
    }
    let s = attention.shape();
    if s.len() != 2 {
        return Err(Error::Shape {
            op: "select_actors",
            lhs: s.to_vec(),
            rhs: vec![0, 0],
        });
    }
    let (h, w) = (s[0], s[1]);
    let mut cells: Vec<usize> = (0..h * w).collect();
    cells.sort_by(|&a, &b| {
        attention.data()[b]
            .partial_cmp(&attention.data()[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; rois.len()];
    for &cell in cells.iter().take(k) {
        let x = ((cell % w) as f32 + 0.5) / w as f32;
        let y = ((cell / w) as f32 + 0.5) / h as f32;
        if let Some(i) = (0..rois.len()).find(|&i| !taken[i] && rois[i].contains(x, y)) {
            taken[i] = true;
        }
    }
    Ok((0..rois.len()).filter(|&i| taken[i]).collect())
}
