use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares the tape gradient of `f` at `at` against central differences.
///
/// Returns `max_i |autodiff_i - fd_i| / max(1, |fd_i|)`. `f` receives a fresh
/// tape and the leaf holding the probe point, and must return a scalar node.
pub fn grad_check<F>(f: F, at: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(at.clone())?;
    let loss = f(&mut tape, x)?;
    let analytic = tape.backward(loss, &[x])?.remove(0);

    let eval = |point: Tensor, coord: usize| -> Result<f64> {
        let mut t = Tape::new();
        let v = t
            .leaf(point)
            .map_err(|_| Error::NonFiniteProbe { coord })?;
        let out = f(&mut t, v).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFiniteProbe { coord },
            other => other,
        })?;
        let val = t.value(out).item()?;
        if !val.is_finite() {
            return Err(Error::NonFiniteProbe { coord });
        }
        Ok(val)
    };

    let mut worst: f64 = 0.0;
    for i in 0..at.len() {
        let mut plus = at.clone();
        plus.data_mut()[i] += step;
        let mut minus = at.clone();
        minus.data_mut()[i] -= step;
        let fd = (eval(plus, i)? - eval(minus, i)?) / (2.0 * step);
        let err = (analytic.data()[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
