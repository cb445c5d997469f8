use super::ParamStore;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, _, t)| vec![0.0; t.numel()])
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One update from explicit gradients; `grads[i]` pairs with `params[i]`.
    ///
    /// Fails without touching anything if a gradient is non-finite or misshapen.
    pub fn step_with(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return shape_err(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            );
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.numel() != self.m[i].len() {
                return shape_err(
                    "adam_step",
                    format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                );
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    index: i,
                    op: "adam_step gradient",
                });
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// One update using the grad buffers on the store; parameters without a
    /// gradient are treated as having a zero gradient. Buffers are cleared.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let grads: Vec<Tensor> = store
            .iter()
            .map(|(_, _, t)| match t.grad() {
                Some(g) => Tensor::new(t.shape(), g.to_vec()),
                None => Ok(Tensor::zeros(t.shape())),
            })
            .collect::<Result<_>>()?;
        self.step_with(store.tensors_mut(), &grads)?;
        store.zero_grad();
        Ok(())
    }

    /// `(first moments, second moments, step)` for checkpointing.
    pub fn state(&self) -> (&[Vec<f64>], &[Vec<f64>], u64) {
        (&self.m, &self.v, self.t)
    }

    pub fn restore(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64) -> Result<()> {
        let fits = |x: &[Vec<f64>]| {
            x.len() == self.m.len() && x.iter().zip(&self.m).all(|(a, b)| a.len() == b.len())
        };
        if !fits(&m) || !fits(&v) {
            return shape_err("adam restore", "moment shapes do not match parameters");
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }
}
