use super::{Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};

/// Central-difference gradient checker.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    /// Finite-difference step.
    pub h: f64,
    /// Floor added to the denominator of the relative error.
    pub eps: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { h: 1e-5, eps: 1e-6 }
    }
}

/// Fixed projection weights so that non-scalar outputs reduce to a scalar
/// whose gradient exercises every output component differently.
fn projection(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 + ((i as f64 * 0.618_033_988_75).fract()))
        .collect()
}

fn project(t: &Tensor, w: &[f64]) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::NonFinite {
            index: usize::MAX,
            op: "check_gradients output",
        });
    }
    Ok(t.data().iter().zip(w).map(|(a, b)| a * b).sum())
}

/// Maximum over components of `|analytic - numeric| / (|numeric| + eps)`.
///
/// `f` builds its graph on a fresh tape from the leaf holding `x`.
pub fn check_gradients<F>(f: F, x: &Tensor, cfg: GradCheck) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(cfg.h > 0.0) {
        return invalid(format!(
            "finite-difference step must be positive, got {}",
            cfg.h
        ));
    }
    let eval = |x: Tensor| -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = tape.leaf(x)?;
        let y = f(&mut tape, v)?;
        Ok(tape.value(y).clone())
    };

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone())?;
    let y = f(&mut tape, xv)?;
    let w = projection(tape.value(y).numel());
    project(tape.value(y), &w)?;
    let seed = Tensor::new(tape.shape(y), w.clone())?;
    let grads = tape.backward(y, &seed)?;
    let analytic = match grads.wrt(xv) {
        Some(g) => g.data().to_vec(),
        None => vec![0.0; x.numel()],
    };

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += cfg.h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= cfg.h;
        let fp = project(&eval(plus)?, &w)?;
        let fm = project(&eval(minus)?, &w)?;
        let numeric = (fp - fm) / (2.0 * cfg.h);
        let rel = (analytic[i] - numeric).abs() / (numeric.abs() + cfg.eps);
        worst = worst.max(rel);
    }
    Ok(worst)
}
