//! Inference strategies on a trained model: dense `tau` grids and long
//! horizons predicted in segments.

use crate::data::VideoClip;
use crate::error::{invalid, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// `start + i * step` for `i in 0..count`.
pub fn tau_grid(start: f64, step: f64, count: usize) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
        return invalid(format!("bad grid start={start} step={step}"));
    }
    if count == 0 {
        return invalid("grid needs at least one point");
    }
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Frames at `start, start + step, ...` from a single pass of the model.
pub fn predict_continuous(
    model: &Model,
    clip: &VideoClip,
    start: f64,
    step: f64,
    count: usize,
) -> Result<Vec<Tensor>> {
    model.forward(clip, &tau_grid(start, step, count)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutPlan {
    /// Total frames to predict.
    pub horizon: usize,
    /// Frames predicted from each encoding before the window is refilled.
    pub step: usize,
    /// Extra offsets in `(0, step]` to render inside every segment.
    pub grid: Option<Vec<f64>>,
}

impl RolloutPlan {
    pub fn new(horizon: usize, step: usize) -> Result<Self> {
        let plan = Self {
            horizon,
            step,
            grid: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Result<Self> {
        self.grid = Some(grid);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.step == 0 || self.step > self.horizon {
            return invalid(format!(
                "rollout step {} must lie in [1, horizon {}]",
                self.step, self.horizon
            ));
        }
        if let Some(g) = &self.grid {
            if g.iter().any(|&t| !(t > 0.0 && t <= self.step as f64)) {
                return invalid("grid offsets must lie in (0, step]");
            }
        }
        Ok(())
    }

    /// Number of encoder passes: `ceil(horizon / step)`.
    pub fn segments(&self) -> usize {
        self.horizon.div_ceil(self.step)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// Predicted frames at offsets `1..=horizon`.
    pub frames: Vec<Tensor>,
    /// `(offset from the last observation, frame)` for the plan's grid points.
    pub grid_frames: Vec<(f64, Tensor)>,
}

/// Predicts `horizon` frames in segments of `step`, appending each segment's
/// decoded frames to the observation window (dropping the oldest) and
/// re-encoding before the next segment.
pub fn rollout(model: &Model, clip: &VideoClip, plan: &RolloutPlan) -> Result<Rollout> {
    plan.validate()?;
    let t = clip.len();
    if plan.step > t {
        return invalid(format!(
            "step {} exceeds the observed window of {t} frames",
            plan.step
        ));
    }
    let mut window = clip.frame_list();
    let mut origin = clip.origin_time;
    let mut frames = Vec::with_capacity(plan.horizon);
    let mut grid_frames = Vec::new();
    while frames.len() < plan.horizon {
        let n = plan.step.min(plan.horizon - frames.len());
        let mut taus: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let grid: Vec<f64> = plan
            .grid
            .iter()
            .flatten()
            .copied()
            .filter(|&g| g <= n as f64)
            .collect();
        taus.extend(&grid);
        let current = VideoClip::from_frames(&window, clip.dt, origin)?;
        let mut out = model.forward(&current, &taus)?;
        let extra = out.split_off(n);
        let base = frames.len() as f64;
        grid_frames.extend(grid.iter().map(|g| base + g).zip(extra));
        window.extend(out.iter().cloned());
        let drop = window.len() - t;
        window.drain(..drop);
        origin += drop as f64 * clip.dt;
        frames.extend(out);
    }
    Ok(Rollout {
        frames,
        grid_frames,
    })
}
