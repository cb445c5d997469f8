use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Expansion terms `delta_0..=delta_gamma` about the last observed time.
///
/// `delta_0` is the latent of the last observed frame; `delta_n` is the raw
/// n-th derivative (no factorial folded in).
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorCoefficients {
    terms: Vec<Tensor>,
}

impl TaylorCoefficients {
    pub fn new(terms: Vec<Tensor>) -> Result<Self> {
        let first = match terms.first() {
            Some(t) => t,
            None => return invalid("need at least the zeroth term"),
        };
        if let Some((n, t)) = terms
            .iter()
            .enumerate()
            .find(|(_, t)| t.shape() != first.shape())
        {
            return shape_err(
                "taylor_coefficients",
                format!(
                    "term {n} has shape {:?}, term 0 {:?}",
                    t.shape(),
                    first.shape()
                ),
            );
        }
        Ok(Self { terms })
    }

    /// Scalar terms, for one-dimensional latents.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Tensor::from_vec(vec![v])).collect())
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn terms(&self) -> &[Tensor] {
        &self.terms
    }

    pub fn term(&self, n: usize) -> &Tensor {
        &self.terms[n]
    }

    /// Keeps terms `0..=order`.
    pub fn truncated(&self, order: usize) -> Self {
        Self {
            terms: self.terms[..=order.min(self.order())].to_vec(),
        }
    }
}

/// `tau^n / n!` for `n = 0..=order`.
pub fn taylor_weights(tau: f64, order: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(order + 1);
    let mut c = 1.0;
    w.push(c);
    for n in 1..=order {
        c = c * tau / n as f64;
        w.push(c);
    }
    w
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() {
        Ok(())
    } else {
        invalid(format!("tau must be finite, got {tau}"))
    }
}

/// `sum_n delta_n tau^n / n!`. Negative `tau` extrapolates into the past.
///
/// Terms with a zero weight are skipped, so `tau = 0` returns `delta_0` bit for bit.
pub fn taylor_evaluate(coeffs: &TaylorCoefficients, tau: f64) -> Result<Tensor> {
    check_tau(tau)?;
    let weights = taylor_weights(tau, coeffs.order());
    let mut acc = coeffs.terms[0].clone();
    for (d, &c) in coeffs.terms.iter().zip(&weights).skip(1) {
        if c == 0.0 {
            continue;
        }
        for (a, &v) in acc.data_mut().iter_mut().zip(d.data()) {
            *a += c * v;
        }
    }
    if !acc.is_finite() {
        return invalid(format!("taylor evaluation at tau={tau} overflowed"));
    }
    Ok(acc)
}

/// Differentiable counterpart of [`taylor_evaluate`], with identical arithmetic.
pub fn taylor_evaluate_var(tape: &mut Tape, terms: &[Var], tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let weights = taylor_weights(tau, terms.len().saturating_sub(1));
    let mut acc = *terms
        .first()
        .ok_or_else(|| crate::Error::InvalidArgument("no terms".into()))?;
    for (&d, &c) in terms.iter().zip(&weights).skip(1) {
        if c == 0.0 {
            continue;
        }
        let scaled = tape.scale(d, c)?;
        acc = tape.add(acc, scaled)?;
    }
    Ok(acc)
}
