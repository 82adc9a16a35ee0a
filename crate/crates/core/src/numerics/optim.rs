use super::tape::{Gradients, Tape, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors, kept in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }

    /// Places every parameter on `tape` as a tracked leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        BoundParams {
            vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }

    /// Places every parameter on `tape` as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> BoundParams {
        BoundParams {
            vars: self.values.iter().map(|v| tape.constant(v.clone())).collect(),
        }
    }
}

/// Tape handles for each parameter of a store, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Substitutes one parameter's handle, e.g. with a probe variable.
    pub fn replace(&mut self, id: ParamId, var: Var) {
        self.vars[id.0] = var;
    }

    /// Per-parameter gradients in store order.
    pub fn collect<T: Real>(&self, grads: &mut Gradients<T>, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .zip(&store.values)
            .map(|(&v, value)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(value.shape().to_vec()))
            })
            .collect()
    }
}

/// Plain gradient descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Sgd {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        Ok(Self { learning_rate })
    }

    /// `θ ← θ − lr·g` for every parameter. Nothing changes if any gradient is
    /// non-finite.
    pub fn step<T: Real>(&self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::invalid(format!(
                "expected {} gradients, got {}",
                store.len(),
                grads.len()
            )));
        }
        for (name, (value, g)) in store.names.iter().zip(store.values.iter().zip(grads)) {
            if value.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "optimizer_step",
                    lhs: value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        let lr = T::of(self.learning_rate);
        for (value, g) in store.values.iter_mut().zip(grads) {
            for (v, &d) in value.data_mut().iter_mut().zip(g.data()) {
                *v = *v - lr * d;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("theta", Tensor::scalar(1.0));
        Sgd::new(0.1).unwrap().step(&mut store, &[Tensor::scalar(2.0)]).unwrap();
        assert!((store.get(id).item() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("theta", Tensor::vector(vec![0.3, -1.7]));
        Sgd::new(0.5).unwrap().step(&mut store, &[Tensor::zeros(vec![2])]).unwrap();
        assert_eq!(store.get(id).data(), &[0.3, -1.7]);
    }

    fn descend_square(lr: f64) -> Vec<f64> {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor::scalar(1.0));
        let sgd = Sgd::new(lr).unwrap();
        let mut seen = Vec::new();
        for _ in 0..2 {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let x = bound.var(id);
            let y = tape.mul(x, x).unwrap();
            let mut grads = tape.backward(y).unwrap();
            let g = bound.collect(&mut grads, &store);
            sgd.step(&mut store, &g).unwrap();
            seen.push(store.get(id).item());
        }
        seen
    }

    #[test]
    fn two_steps_on_square() {
        // f(x) = x², f'(x) = 2x: each step scales x by (1 - 2·lr).
        assert_eq!(descend_square(0.25), vec![0.5, 0.25]);
        assert_eq!(descend_square(0.375), vec![0.25, 0.0625]);
    }

    #[test]
    fn non_finite_gradient_refused() {
        let mut store = ParamStore::<f32>::new();
        let a = store.add("a", Tensor::scalar(1.0));
        let b = store.add("b", Tensor::scalar(1.0));
        let err = Sgd::new(0.1)
            .unwrap()
            .step(&mut store, &[Tensor::scalar(1.0), Tensor::scalar(f32::NAN)])
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(store.get(a).item(), 1.0);
        assert_eq!(store.get(b).item(), 1.0);
    }
}
