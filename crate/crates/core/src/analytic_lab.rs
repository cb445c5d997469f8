//! Functions with known derivatives: windows of samples, exact Taylor terms,
//! learned derivative estimators, and the Euler-versus-Taylor comparison.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::baselines::euler_rollout;
use crate::error::{invalid, Error, Result};
use crate::model::{taylor_evaluate, taylor_weights, TaylorCoefficients};
use crate::nn::{
    Adam, AdamConfig, ConvSpec, Init, ParamStore, PlateauMode, PlateauScheduler, LEAKY_SLOPE,
};
use crate::seed;
use crate::tensor::{ParamId, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Sin,
    Cos,
    Exp,
    /// `sin(x + y + t)` on a pixel grid with unit spacing.
    Sin2D,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Sin => "sin",
            Family::Cos => "cos",
            Family::Exp => "exp",
            Family::Sin2D => "sin2d",
        })
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sin" => Ok(Family::Sin),
            "cos" => Ok(Family::Cos),
            "exp" => Ok(Family::Exp),
            "sin2d" => Ok(Family::Sin2D),
            _ => Err(format!("unknown family {s:?}")),
        }
    }
}

/// Held-out evaluation time used for the derivative table.
pub const T_STAR: f64 = 1.52;

impl Family {
    /// Value at time `t`; for `Sin2D`, at the pixel with `x + y = 0`.
    pub fn value(self, t: f64) -> f64 {
        self.derivative(t, 0)
    }

    /// n-th time derivative at `t`.
    pub fn derivative(self, t: f64, n: usize) -> f64 {
        match self {
            Family::Sin | Family::Sin2D => (t + n as f64 * PI / 2.0).sin(),
            Family::Cos => (t + n as f64 * PI / 2.0).cos(),
            Family::Exp => t.exp(),
        }
    }

    /// Range of window end times used for training.
    pub fn train_range(self) -> (f64, f64) {
        match self {
            Family::Exp => (0.0, 2.0),
            _ => (0.0, 2.0 * PI),
        }
    }
}

/// Exact derivatives `1..=n_max` at `t`.
pub fn analytic_derivatives(family: Family, t: f64, n_max: usize) -> Result<Vec<f64>> {
    if n_max < 1 {
        return invalid("n_max must be at least 1");
    }
    Ok((1..=n_max).map(|n| family.derivative(t, n)).collect())
}

/// Exact Taylor terms `0..=order` at `t`.
pub fn true_coefficients(family: Family, t: f64, order: usize) -> TaylorCoefficients {
    TaylorCoefficients::from_scalars(
        &(0..=order)
            .map(|n| family.derivative(t, n))
            .collect::<Vec<_>>(),
    )
    .expect("scalar terms")
}

/// Values at `t0 - (k - 1) dt, ..., t0`.
pub fn sample_window(family: Family, t0: f64, k: usize, dt: f64) -> Result<Vec<f64>> {
    if k == 0 || !(dt > 0.0) {
        return invalid(format!("window needs k >= 1 and dt > 0, got k={k} dt={dt}"));
    }
    Ok((0..k)
        .map(|i| family.value(t0 - (k - 1 - i) as f64 * dt))
        .collect())
}

/// `sin(x + y + t)` on a `grid` of unit-spaced pixels, `[H, W]`.
pub fn sin2d_frame(grid: (usize, usize), t: f64) -> Tensor {
    let data = (0..grid.0 * grid.1)
        .map(|i| ((i / grid.1) as f64 + (i % grid.1) as f64 + t).sin())
        .collect();
    Tensor::new(&[grid.0, grid.1], data).expect("positive grid")
}

/// Frames `[k, H, W]` of `sin(x + y + t)` at `t0 - (k - 1) dt, ..., t0`.
pub fn sample_window_2d(grid: (usize, usize), t0: f64, k: usize, dt: f64) -> Result<Tensor> {
    if k == 0 || !(dt > 0.0) {
        return invalid(format!("window needs k >= 1 and dt > 0, got k={k} dt={dt}"));
    }
    let frames: Vec<Tensor> = (0..k)
        .map(|i| sin2d_frame(grid, t0 - (k - 1 - i) as f64 * dt))
        .collect();
    Tensor::stack(&frames.iter().collect::<Vec<_>>())
}

/// Absolute error of the exact order-`order` expansion about `t0`, evaluated at `t0 + tau`.
pub fn taylor_error(family: Family, t0: f64, tau: f64, order: usize) -> Result<f64> {
    let approx = taylor_evaluate(&true_coefficients(family, t0, order), tau)?.data()[0];
    Ok((approx - family.value(t0 + tau)).abs())
}

/// [`taylor_error`] averaged over `points` expansion times spread uniformly
/// over the family's training range.
pub fn mean_taylor_error(family: Family, tau: f64, order: usize, points: usize) -> Result<f64> {
    if points == 0 {
        return invalid("need at least one expansion point");
    }
    let (lo, hi) = family.train_range();
    let mut sum = 0.0;
    for i in 0..points {
        sum += taylor_error(
            family,
            lo + (hi - lo) * i as f64 / points as f64,
            tau,
            order,
        )?;
    }
    Ok(sum / points as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    /// Number of derivative blocks; only the first four terms are reported.
    pub order: usize,
    pub width: usize,
    pub window: usize,
    pub dt: f64,
    /// Window end times in the fixed training set.
    pub train_points: usize,
    /// Targets at `tau` in `[-tau_range, tau_range]`, `tau_points` per side.
    pub tau_range: f64,
    pub tau_points: usize,
    pub steps: usize,
    pub lr: f64,
    pub plateau_patience: usize,
    /// Side length of the `Sin2D` grid.
    pub grid: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            order: 6,
            width: 16,
            window: 11,
            dt: 0.1,
            train_points: 256,
            tau_range: 1.0,
            tau_points: 20,
            steps: 20_000,
            lr: 1e-3,
            plateau_patience: 1000,
            grid: 8,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    /// `-tau_range .. -tau_range/tau_points` then `tau_range/tau_points .. tau_range`.
    pub fn target_taus(&self) -> Vec<f64> {
        let n = self.tau_points;
        let r = self.tau_range;
        let side: Vec<f64> = (0..n)
            .map(|i| {
                let lo = r / n as f64;
                if n == 1 {
                    r
                } else {
                    lo + (r - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        side.iter()
            .rev()
            .map(|t| -t)
            .chain(side.iter().copied())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.order < 4 {
            return invalid("derivative table needs order >= 4");
        }
        if self.window < 2 || self.width == 0 || self.train_points == 0 || self.tau_points == 0 {
            return invalid("estimator sizes must be positive (window >= 2)");
        }
        if !(self.dt > 0.0) || !(self.tau_range > 0.0) || !(self.lr > 0.0) {
            return invalid("dt, tau_range and lr must be positive");
        }
        Ok(())
    }
}

/// Affine layer `[N, in] -> [N, out]`, fan-in uniform init.
#[derive(Clone, Debug)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        zero: bool,
        rng: &mut R,
    ) -> Self {
        let init = if zero {
            Init::Zeros
        } else {
            Init::FanInUniform
        };
        let weight = store.add(
            format!("{name}.weight"),
            init.sample(&[inputs, outputs], inputs, rng),
        );
        let bias = store.add(format!("{name}.bias"), init.sample(&[outputs], inputs, rng));
        Self { weight, bias }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = store.var(tape, self.weight)?;
        let b = store.var(tape, self.bias)?;
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// Dense derivative chain over a window of scalar samples: a linear encoder,
/// residual blocks applied in sequence, and one linear head per block.
#[derive(Clone, Debug)]
pub struct DerivativeEstimator {
    config: EstimatorConfig,
    store: ParamStore,
    encoder: Dense,
    blocks: Vec<(Dense, Dense)>,
    heads: Vec<Dense>,
}

impl DerivativeEstimator {
    pub fn new(config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed, "lab-init", 0);
        let mut store = ParamStore::new();
        let w = config.width;
        let encoder = Dense::new(&mut store, "encoder", config.window, w, false, &mut rng);
        let mut blocks = Vec::new();
        let mut heads = Vec::new();
        for n in 1..=config.order {
            let a = Dense::new(&mut store, &format!("block{n}.a"), w, w, false, &mut rng);
            let b = Dense::new(&mut store, &format!("block{n}.b"), w, w, true, &mut rng);
            blocks.push((a, b));
            heads.push(Dense::new(
                &mut store,
                &format!("head{n}"),
                w,
                1,
                false,
                &mut rng,
            ));
        }
        Ok(Self {
            config,
            store,
            encoder,
            blocks,
            heads,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// `delta_1..=delta_order`, each `[N, 1]`, for windows `[N, k]`.
    fn derivative_vars(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        windows: Var,
    ) -> Result<Vec<Var>> {
        let mut x = self.encoder.forward(tape, store, windows)?;
        let mut out = Vec::with_capacity(self.blocks.len());
        for ((a, b), head) in self.blocks.iter().zip(&self.heads) {
            let y = a.forward(tape, store, x)?;
            let y = tape.leaky_relu(y, LEAKY_SLOPE)?;
            let y = b.forward(tape, store, y)?;
            x = tape.add(x, y)?;
            out.push(head.forward(tape, store, x)?);
        }
        Ok(out)
    }

    /// Estimated Taylor terms from one window; the zeroth term is the last sample.
    pub fn estimate(&self, window: &[f64]) -> Result<TaylorCoefficients> {
        if window.len() != self.config.window {
            return invalid(format!(
                "window of {} samples, expected {}",
                window.len(),
                self.config.window
            ));
        }
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(&[1, window.len()], window.to_vec())?)?;
        let ds = self.derivative_vars(&mut tape, &self.store, x)?;
        let mut terms = vec![window[window.len() - 1]];
        terms.extend(ds.iter().map(|&d| tape.value(d).data()[0]));
        TaylorCoefficients::from_scalars(&terms)
    }
}

/// Estimated against exact derivatives at the held-out time.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeReport {
    pub family: Family,
    pub t_star: f64,
    /// `delta_1..=delta_4`.
    pub estimated: Vec<f64>,
    pub truth: Vec<f64>,
    pub final_loss: f64,
    pub steps: usize,
}

impl DerivativeReport {
    pub fn abs_errors(&self) -> Vec<f64> {
        self.estimated
            .iter()
            .zip(&self.truth)
            .map(|(e, t)| (e - t).abs())
            .collect()
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.estimated
            .iter()
            .zip(&self.truth)
            .map(|(e, t)| (e - t).abs() / t.abs())
            .collect()
    }
}

/// Sum over `n` of `delta_n * w_n(tau)` broadcast to `[N, K]`, plus `base`.
fn expansion(tape: &mut Tape, base: Var, deltas: &[Var], taus: &[f64], rows: usize) -> Result<Var> {
    let k = taus.len();
    let mut acc = tape.repeat_trailing(base, &[k])?;
    let order = deltas.len();
    let per_tau: Vec<Vec<f64>> = taus.iter().map(|&t| taylor_weights(t, order)).collect();
    for (n, &d) in deltas.iter().enumerate() {
        let w: Vec<f64> = per_tau.iter().map(|ws| ws[n + 1]).collect();
        let w = tape.input(Tensor::from_vec(w))?;
        let d = tape.reshape(d, &[rows])?;
        let d = tape.repeat_trailing(d, &[k])?;
        let term = tape.mul(d, w)?;
        acc = tape.add(acc, term)?;
    }
    Ok(acc)
}

fn train_loop(
    store: &mut ParamStore,
    cfg: &EstimatorConfig,
    mut loss_fn: impl FnMut(&mut Tape, &ParamStore) -> Result<Var>,
) -> Result<f64> {
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        store,
    );
    let mut sched = PlateauScheduler::new(0.5, cfg.plateau_patience, PlateauMode::Minimize)
        .with_threshold(1e-4);
    let mut last = f64::NAN;
    for step in 0..cfg.steps {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store)?;
        last = tape.value(loss).item()?;
        if !last.is_finite() {
            return Err(Error::Diverged {
                step: step as u64,
                loss: last,
            });
        }
        let grads = tape.backward(loss, &Tensor::scalar(1.0))?;
        store.accumulate(&grads)?;
        adam.step(store)?;
        let lr = sched.step(last, adam.lr());
        adam.set_lr(lr);
    }
    Ok(last)
}

/// Trains a dense estimator on a fixed set of windows of `family` and reports
/// its first four derivatives at [`T_STAR`].
pub fn fit_derivative_estimator(
    family: Family,
    config: &EstimatorConfig,
) -> Result<(DerivativeEstimator, DerivativeReport)> {
    if family == Family::Sin2D {
        return invalid("use fit_sin2d_estimator for the two-dimensional family");
    }
    let mut est = DerivativeEstimator::new(config.clone())?;
    let cfg = est.config.clone();
    let mut rng = seed::rng(cfg.seed, "lab-data", 0);
    let (lo, hi) = family.train_range();
    let t0s: Vec<f64> = (0..cfg.train_points)
        .map(|_| rng.gen_range(lo..hi))
        .collect();
    let taus = cfg.target_taus();
    let n = t0s.len();
    let mut windows = Vec::with_capacity(n * cfg.window);
    let mut last = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n * taus.len());
    for &t0 in &t0s {
        let w = sample_window(family, t0, cfg.window, cfg.dt)?;
        last.push(w[cfg.window - 1]);
        windows.extend(w);
        targets.extend(taus.iter().map(|&tau| family.value(t0 + tau)));
    }
    let windows = Tensor::new(&[n, cfg.window], windows)?;
    let last = Tensor::from_vec(last);
    let targets = Tensor::new(&[n, taus.len()], targets)?;

    let mut store = std::mem::take(&mut est.store);
    let final_loss = train_loop(&mut store, &cfg, |tape, store| {
        let x = tape.input(windows.clone())?;
        let base = tape.input(last.clone())?;
        let y = tape.input(targets.clone())?;
        let ds = est.derivative_vars(tape, store, x)?;
        let pred = expansion(tape, base, &ds, &taus, n)?;
        tape.mse(pred, y)
    })?;
    est.store = store;

    let coeffs = est.estimate(&sample_window(family, T_STAR, cfg.window, cfg.dt)?)?;
    let estimated: Vec<f64> = (1..=4).map(|i| coeffs.term(i).data()[0]).collect();
    let report = DerivativeReport {
        family,
        t_star: T_STAR,
        estimated,
        truth: analytic_derivatives(family, T_STAR, 4)?,
        final_loss,
        steps: cfg.steps,
    };
    Ok((est, report))
}

/// Convolutional derivative chain for `Sin2D` windows `[N, 1, k, H, W]`: the
/// encoder folds the window into channels, blocks are residual 1x3x3 convolution
/// pairs, heads emit one channel each.
#[derive(Clone, Debug)]
pub struct ConvDerivativeEstimator {
    config: EstimatorConfig,
    store: ParamStore,
    encoder: crate::nn::Conv3d,
    blocks: Vec<(crate::nn::Conv3d, crate::nn::Conv3d)>,
    heads: Vec<crate::nn::Conv3d>,
}

impl ConvDerivativeEstimator {
    pub fn new(config: EstimatorConfig) -> Result<Self> {
        use crate::nn::Conv3d;
        config.validate()?;
        let mut rng = seed::rng(config.seed, "lab2d-init", 0);
        let mut store = ParamStore::new();
        let w = config.width;
        let encoder = Conv3d::new(
            &mut store,
            "encoder",
            ConvSpec::new(1, w, [config.window, 1, 1]),
            Init::FanInUniform,
            &mut rng,
        );
        let spec = ConvSpec::same(w, w, [1, 3, 3]);
        let mut blocks = Vec::new();
        let mut heads = Vec::new();
        for n in 1..=config.order {
            let a = Conv3d::new(
                &mut store,
                &format!("block{n}.a"),
                spec,
                Init::FanInUniform,
                &mut rng,
            );
            let b = Conv3d::new(
                &mut store,
                &format!("block{n}.b"),
                spec,
                Init::Zeros,
                &mut rng,
            );
            blocks.push((a, b));
            heads.push(Conv3d::new(
                &mut store,
                &format!("head{n}"),
                ConvSpec::same(w, 1, [1, 3, 3]),
                Init::FanInUniform,
                &mut rng,
            ));
        }
        Ok(Self {
            config,
            store,
            encoder,
            blocks,
            heads,
        })
    }

    /// `delta_1..=delta_order`, each `[N, 1, 1, H, W]`.
    fn derivative_vars(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        windows: Var,
    ) -> Result<Vec<Var>> {
        let mut x = self.encoder.forward(tape, store, windows)?;
        let mut out = Vec::with_capacity(self.blocks.len());
        for ((a, b), head) in self.blocks.iter().zip(&self.heads) {
            let y = a.forward(tape, store, x)?;
            let y = tape.leaky_relu(y, LEAKY_SLOPE)?;
            let y = b.forward(tape, store, y)?;
            x = tape.add(x, y)?;
            out.push(head.forward(tape, store, x)?);
        }
        Ok(out)
    }

    /// Estimated Taylor term maps `[H, W]` from a window `[k, H, W]`.
    pub fn estimate(&self, window: &Tensor) -> Result<Vec<Tensor>> {
        let s = window.shape();
        if s.len() != 3 || s[0] != self.config.window {
            return invalid(format!(
                "window {s:?} does not match k={}",
                self.config.window
            ));
        }
        let mut tape = Tape::new();
        let x = tape.input(window.reshape(&[1, 1, s[0], s[1], s[2]])?)?;
        let ds = self.derivative_vars(&mut tape, &self.store, x)?;
        let mut terms = vec![window.narrow(0, s[0] - 1, 1)?.reshape(&[s[1], s[2]])?];
        for d in ds {
            terms.push(tape.value(d).reshape(&[s[1], s[2]])?);
        }
        Ok(terms)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sin2dReport {
    pub t_star: f64,
    /// Mean over pixels of |estimated - true| for terms 1..=4.
    pub mean_abs_diff: Vec<f64>,
    /// Per-pixel |estimated - true| of the fourth term, `[H, W]`.
    pub fourth_term_diff: Tensor,
    pub final_loss: f64,
}

/// Trains the convolutional estimator on `sin(x + y + t)` windows.
pub fn fit_sin2d_estimator(
    config: &EstimatorConfig,
) -> Result<(ConvDerivativeEstimator, Sin2dReport)> {
    let mut est = ConvDerivativeEstimator::new(config.clone())?;
    let cfg = est.config.clone();
    let grid = (cfg.grid, cfg.grid);
    let plane = cfg.grid * cfg.grid;
    let mut rng = seed::rng(cfg.seed, "lab2d-data", 0);
    let t0s: Vec<f64> = (0..cfg.train_points)
        .map(|_| rng.gen_range(0.0..2.0 * PI))
        .collect();
    let taus = cfg.target_taus();
    let n = t0s.len();
    let mut windows = Vec::with_capacity(n * cfg.window * plane);
    let mut last = Vec::with_capacity(n * plane);
    let mut targets = Vec::with_capacity(n * plane * taus.len());
    for &t0 in &t0s {
        windows.extend_from_slice(sample_window_2d(grid, t0, cfg.window, cfg.dt)?.data());
        let f0 = sin2d_frame(grid, t0);
        last.extend_from_slice(f0.data());
        for p in 0..plane {
            let phase = (p / cfg.grid + p % cfg.grid) as f64 + t0;
            targets.extend(taus.iter().map(|&tau| (phase + tau).sin()));
        }
    }
    let rows = n * plane;
    let windows = Tensor::new(&[n, 1, cfg.window, cfg.grid, cfg.grid], windows)?;
    let last = Tensor::from_vec(last);
    let targets = Tensor::new(&[rows, taus.len()], targets)?;

    let mut store = std::mem::take(&mut est.store);
    let final_loss = train_loop(&mut store, &cfg, |tape, store| {
        let x = tape.input(windows.clone())?;
        let base = tape.input(last.clone())?;
        let y = tape.input(targets.clone())?;
        let ds = est.derivative_vars(tape, store, x)?;
        let pred = expansion(tape, base, &ds, &taus, rows)?;
        tape.mse(pred, y)
    })?;
    est.store = store;

    let terms = est.estimate(&sample_window_2d(grid, T_STAR, cfg.window, cfg.dt)?)?;
    let mut mean_abs_diff = Vec::new();
    let mut fourth_term_diff = None;
    for (n, term) in terms.iter().enumerate().take(5).skip(1) {
        let truth = sin2d_frame(grid, T_STAR + n as f64 * PI / 2.0);
        let diff = term.zip_map(&truth, |a, b| (a - b).abs())?;
        mean_abs_diff.push(diff.mean());
        if n == 4 {
            fourth_term_diff = Some(diff);
        }
    }
    Ok((
        est,
        Sin2dReport {
            t_star: T_STAR,
            mean_abs_diff,
            fourth_term_diff: fourth_term_diff.expect("order >= 4"),
            final_loss,
        },
    ))
}

/// One row of the Euler-versus-Taylor comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonRow {
    pub tau: f64,
    pub truth: f64,
    pub taylor: f64,
    pub euler: f64,
}

impl ComparisonRow {
    pub fn taylor_error(&self) -> f64 {
        (self.taylor - self.truth).abs()
    }

    pub fn euler_error(&self) -> f64 {
        (self.euler - self.truth).abs()
    }
}

/// Taylor expansion of order `order` about `t0` and forward Euler with step
/// `euler_dt`, both from exact derivatives, at `tau = 0, euler_dt, ...` up to
/// `horizon`.
pub fn compare_euler_taylor(
    family: Family,
    t0: f64,
    horizon: f64,
    order: usize,
    euler_dt: f64,
) -> Result<Vec<ComparisonRow>> {
    if !(horizon > 0.0) || !(euler_dt > 0.0) || order == 0 {
        return invalid("horizon, step and order must be positive");
    }
    let steps = (horizon / euler_dt - 1e-9).ceil() as usize;
    let coeffs = true_coefficients(family, t0, order);
    let h0 = Tensor::from_vec(vec![family.value(t0)]);
    let states = euler_rollout(
        &h0,
        t0,
        |t, _| Ok(Tensor::from_vec(vec![family.derivative(t, 1)])),
        euler_dt,
        steps,
    )?;
    states
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let tau = i as f64 * euler_dt;
            Ok(ComparisonRow {
                tau,
                truth: family.value(t0 + tau),
                taylor: taylor_evaluate(&coeffs, tau)?.data()[0],
                euler: h.data()[0],
            })
        })
        .collect()
}

/// `v` with ten significant digits.
pub fn sig10(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("tau,truth,taylor,euler,abs_err_taylor,abs_err_euler\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sig10(r.tau),
            sig10(r.truth),
            sig10(r.taylor),
            sig10(r.euler),
            sig10(r.taylor_error()),
            sig10(r.euler_error())
        ));
    }
    s
}

pub fn derivative_table_csv(reports: &[DerivativeReport]) -> String {
    let mut s = String::from("family,t_star,order,estimated,truth,abs_err,rel_err\n");
    for r in reports {
        let (abs, rel) = (r.abs_errors(), r.rel_errors());
        for i in 0..r.estimated.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.family,
                sig10(r.t_star),
                i + 1,
                sig10(r.estimated[i]),
                sig10(r.truth[i]),
                sig10(abs[i]),
                sig10(rel[i])
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_derivatives_at_zero() {
        let d = analytic_derivatives(Family::Sin, 0.0, 4).unwrap();
        let expected = [1.0, 0.0, -1.0, 0.0];
        assert!(d.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(analytic_derivatives(Family::Sin, 0.0, 0).is_err());
    }

    #[test]
    fn table_values_at_t_star() {
        let s = analytic_derivatives(Family::Sin, T_STAR, 4).unwrap();
        let expected = [0.05077, -0.99871, -0.05077, 0.99871];
        assert!(s.iter().zip(expected).all(|(a, b)| (a - b).abs() < 5e-6));
        let e = analytic_derivatives(Family::Exp, T_STAR, 4).unwrap();
        assert!(e.iter().all(|v| (v - 4.5722).abs() < 5e-5));
    }

    #[test]
    fn sine_fourth_derivative_is_itself() {
        for k in 0..50 {
            let t = -3.0 + 0.17 * k as f64;
            let d = analytic_derivatives(Family::Sin, t, 4).unwrap();
            assert!((d[3] - t.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn windows() {
        let w = sample_window(Family::Sin, 0.0, 3, PI / 2.0).unwrap();
        assert!(w
            .iter()
            .zip([0.0, -1.0, 0.0])
            .all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(
            sample_window(Family::Exp, 0.7, 1, 0.1).unwrap(),
            vec![0.7f64.exp()]
        );
        let f = sample_window_2d((8, 8), 0.3, 2, 0.1).unwrap();
        assert_eq!(f.shape(), &[2, 8, 8]);
        assert!((f.data()[64 + 8 * 2 + 5] - (2.0 + 5.0 + 0.3f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn comparison_truth_and_order_one() {
        let rows = compare_euler_taylor(Family::Sin, 4.75, 2.0, 4, 0.25).unwrap();
        assert_eq!(rows.len(), 9);
        assert!(rows
            .iter()
            .all(|r| (r.truth - (4.75 + r.tau).sin()).abs() < 1e-12));
        let one = compare_euler_taylor(Family::Sin, 4.75, 0.4, 1, 0.4).unwrap();
        assert_eq!(one[1].taylor, one[1].euler);
    }

    #[test]
    fn csv_has_ten_significant_digits() {
        assert_eq!(sig10(PI), "3.141592654e0");
        let rows = compare_euler_taylor(Family::Cos, 0.0, 0.5, 2, 0.25).unwrap();
        let csv = comparison_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("tau,truth,taylor,euler,"));
    }

    #[test]
    fn target_taus_are_symmetric() {
        let cfg = EstimatorConfig {
            tau_points: 4,
            ..EstimatorConfig::default()
        };
        let t = cfg.target_taus();
        assert_eq!(t, vec![-1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0]);
    }
}
