//! Comparators for the Taylor temporal model: forward Euler integration and
//! point-estimate heads that take `tau` as a network input.

use rand::Rng;

use crate::error::{invalid, shape_err, Result};
use crate::model::config::{ModelConfig, TemporalKind};
use crate::model::network::HE;
use crate::nn::{Conv3d, ConvSpec, ConvTranspose3d, Init, Linear, ParamStore, LEAKY_SLOPE};
use crate::tensor::{Tape, Tensor, Var};

/// `h + dt * dh`.
pub fn euler_step(h: &Tensor, dh: &Tensor, dt: f64) -> Result<Tensor> {
    if !(dt > 0.0) || !dt.is_finite() {
        return invalid(format!("euler step needs dt > 0, got {dt}"));
    }
    if h.shape() != dh.shape() {
        return shape_err("euler_step", format!("{:?} vs {:?}", h.shape(), dh.shape()));
    }
    let mut out = h.clone();
    for (a, &d) in out.data_mut().iter_mut().zip(dh.data()) {
        *a += dt * d;
    }
    Ok(out)
}

/// Integrates `dh/dt = derivative(t, h)` from `(t0, h0)`; returns `n_steps + 1`
/// states starting with `h0`.
pub fn euler_rollout<F>(
    h0: &Tensor,
    t0: f64,
    mut derivative: F,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<Tensor>>
where
    F: FnMut(f64, &Tensor) -> Result<Tensor>,
{
    if n_steps == 0 {
        return invalid("euler rollout needs at least one step");
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(h0.clone());
    for i in 0..n_steps {
        let h = &states[i];
        let dh = derivative(t0 + i as f64 * dt, h)?;
        let next = euler_step(h, &dh, dt)?;
        states.push(next);
    }
    Ok(states)
}

/// Temporal head that maps `(H_t, tau)` to one latent per pass.
#[derive(Clone, Debug)]
pub enum PointEstimateHead {
    Expand(ExpandHead),
    Flatten(FlattenHead),
}

#[derive(Clone, Debug)]
pub struct ExpandHead {
    tau_fc: Linear,
    squeeze: Conv3d,
    mix: Conv3d,
    reduce: Conv3d,
}

#[derive(Clone, Debug)]
pub struct FlattenHead {
    tau_fc: Linear,
    down: Vec<Conv3d>,
    up: Vec<ConvTranspose3d>,
}

/// Latent-grid extent after the flatten head's three stride-2 reductions.
pub const FLATTEN_REDUCTION: usize = 8;

impl PointEstimateHead {
    pub(crate) fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let c = cfg.latent_channels;
        let t = cfg.clip_length;
        let tau_fc = Linear::new(store, "point.tau_fc", 1, c, HE, rng);
        match cfg.temporal {
            TemporalKind::Expand => Ok(Self::Expand(ExpandHead {
                tau_fc,
                squeeze: Conv3d::new(
                    store,
                    "point.squeeze",
                    ConvSpec::new(c, c, [t, 3, 3]).with_padding([0, 1, 1]),
                    HE,
                    rng,
                ),
                mix: Conv3d::new(
                    store,
                    "point.mix",
                    ConvSpec::same(2 * c, 2 * c, [1, 3, 3]),
                    HE,
                    rng,
                ),
                reduce: Conv3d::new(
                    store,
                    "point.reduce",
                    ConvSpec::new(2 * c, c, [1, 1, 1]),
                    Init::HeUniform { slope: 1.0 },
                    rng,
                ),
            })),
            TemporalKind::Flatten => {
                let first = ConvSpec::new(c, c, [t, 3, 3])
                    .with_padding([0, 1, 1])
                    .with_stride([1, 2, 2]);
                let rest = ConvSpec::same(c, c, [1, 3, 3]).with_stride([1, 2, 2]);
                let down = [first, rest, rest]
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| Conv3d::new(store, &format!("point.down{i}"), s, HE, rng))
                    .collect();
                let up = [2 * c, c, c]
                    .into_iter()
                    .enumerate()
                    .map(|(i, cin)| {
                        let spec = ConvSpec::same(cin, c, [1, 3, 3]).with_stride([1, 2, 2]);
                        ConvTranspose3d::new(
                            store,
                            &format!("point.up{i}"),
                            spec,
                            [0, 1, 1],
                            HE,
                            rng,
                        )
                    })
                    .collect();
                Ok(Self::Flatten(FlattenHead { tau_fc, down, up }))
            }
            TemporalKind::Taylor => invalid("taylor models have no point-estimate head"),
        }
    }

    /// Latents `[K, C', 1, H', W']` for each of the `K` values in `taus`;
    /// `h` is the encoded window `[1, C', T, H', W']`.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        taus: &[f64],
    ) -> Result<Var> {
        let k = taus.len();
        let tau_in = tape.input(Tensor::new(&[k, 1], taus.to_vec())?)?;
        match self {
            Self::Expand(e) => {
                let v = e.tau_fc.forward(tape, store, tau_in)?;
                let sq = e.squeeze.forward(tape, store, h)?;
                let sq = tape.leaky_relu(sq, LEAKY_SLOPE)?;
                let grid = tape.shape(sq)[2..].to_vec();
                let tiled = tape.repeat_trailing(v, &grid)?;
                let repeated = tape.concat(&vec![sq; k], 0)?;
                let joined = tape.concat(&[repeated, tiled], 1)?;
                let y = e.mix.forward(tape, store, joined)?;
                let y = tape.leaky_relu(y, LEAKY_SLOPE)?;
                e.reduce.forward(tape, store, y)
            }
            Self::Flatten(f) => {
                let v = f.tau_fc.forward(tape, store, tau_in)?;
                let mut y = h;
                for d in &f.down {
                    y = d.forward(tape, store, y)?;
                    y = tape.leaky_relu(y, LEAKY_SLOPE)?;
                }
                let grid = tape.shape(y)[2..].to_vec();
                let tiled = tape.repeat_trailing(v, &grid)?;
                let repeated = tape.concat(&vec![y; k], 0)?;
                let mut z = tape.concat(&[repeated, tiled], 1)?;
                let last = f.up.len() - 1;
                for (i, u) in f.up.iter().enumerate() {
                    z = u.forward(tape, store, z)?;
                    if i != last {
                        z = tape.leaky_relu(z, LEAKY_SLOPE)?;
                    }
                }
                Ok(z)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![v])
    }

    #[test]
    fn euler_step_arithmetic() {
        assert_eq!(
            euler_step(&scalar(1.0), &scalar(2.0), 0.5).unwrap().data(),
            &[2.0]
        );
        assert_eq!(
            euler_step(&scalar(0.3), &scalar(0.0), 7.0).unwrap().data(),
            &[0.3]
        );
        assert!(euler_step(&scalar(1.0), &scalar(1.0), 0.0).is_err());
        assert!(euler_step(&scalar(1.0), &Tensor::zeros(&[2]), 0.1).is_err());
    }

    #[test]
    fn euler_on_sine_from_4_75() {
        let h = scalar(4.75f64.sin());
        let dh = scalar(4.75f64.cos());
        let next = euler_step(&h, &dh, 0.25).unwrap().data()[0];
        // sin(4.75) = -0.9992928, cos(4.75) = 0.0376022
        assert!((next - (-0.9898922508)).abs() < 1e-9);
        assert!(((next - 5.0f64.sin()).abs() - 0.0309679761).abs() < 1e-9);
    }

    #[test]
    fn constant_derivative_is_exact() {
        let states = euler_rollout(&scalar(1.0), 0.0, |_, _| Ok(scalar(0.5)), 0.25, 8).unwrap();
        assert_eq!(states.len(), 9);
        assert!((states[8].data()[0] - 2.0).abs() < 1e-15);
        assert!(euler_rollout(&scalar(1.0), 0.0, |_, _| Ok(scalar(0.5)), 0.25, 0).is_err());
    }
}
