use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Largest disagreement between the tape gradient of `f` at `theta` and a
/// central difference with the given step, per coordinate:
/// `|analytic - numeric| / max(1, |numeric|)`.
///
/// `f` receives a fresh tape and the handle of `theta` on it and must return
/// a scalar.
pub fn gradient_check<F>(f: F, theta: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let eval = |point: Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(point);
        let y = f(&mut tape, x)?;
        let v = tape.value(y).item();
        if !v.is_finite() {
            return Err(Error::NonFinite("objective under gradient check".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let x = tape.leaf(theta.clone());
    let y = f(&mut tape, x)?;
    if !tape.value(y).item().is_finite() {
        return Err(Error::NonFinite("objective under gradient check".into()));
    }
    let grads = tape.backward(y)?;
    let analytic = grads
        .get(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(theta.shape().to_vec()));

    let mut worst = 0f64;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus.data_mut()[i] += step;
        let mut minus = theta.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = gradient_check(|t, x| t.mul(x, x), &Tensor::scalar(3.0), 1e-3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rejects_non_finite_objective() {
        let f = |t: &mut Tape<f64>, x: Var| t.scale(x, f64::INFINITY);
        assert!(matches!(
            gradient_check(f, &Tensor::scalar(1.0), 1e-3),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rejects_bad_step() {
        assert!(gradient_check(|t, x| t.mul(x, x), &Tensor::scalar(1.0), 0.0).is_err());
    }
}
