use super::Model;
use crate::data::{ClipSource, VideoClip};
use crate::error::{invalid, shape_err, Error, Result};
use crate::metrics;
use crate::nn::{Adam, AdamConfig, PlateauMode, PlateauScheduler};
use crate::seed;
use crate::tensor::{Tape, Tensor};

/// One observed clip with target frames at the given offsets.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub clip: VideoClip,
    pub taus: Vec<f64>,
    /// `[C, H, W]` frames aligned with `taus`.
    pub targets: Vec<Tensor>,
}

impl TrainSample {
    /// Picks the future frames at integer offsets `taus` (offset 1 is the first
    /// future frame).
    pub fn from_future(clip: VideoClip, future: &VideoClip, taus: &[f64]) -> Result<Self> {
        let targets = taus
            .iter()
            .map(|&tau| {
                let i = tau.round();
                if (tau - i).abs() > 1e-9 || i < 1.0 || i as usize > future.len() {
                    return invalid(format!("no future frame at offset {tau}"));
                }
                Ok(future.frame(i as usize - 1))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            clip,
            taus: taus.to_vec(),
            targets,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Mean SSIM of the step's predictions against their targets.
    pub ssim: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub train_ssim: f64,
}

/// Model plus optimiser state; the learning rate follows a plateau schedule on
/// the training SSIM.
#[derive(Debug)]
pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub scheduler: PlateauScheduler,
    /// Completed epochs.
    pub epoch: usize,
}

impl Trainer {
    pub fn new(model: Model) -> Self {
        let cfg = model.config().clone();
        let adam = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            model.params(),
        );
        Self {
            model,
            adam,
            scheduler: PlateauScheduler::new(
                cfg.plateau_factor,
                cfg.plateau_patience,
                PlateauMode::Maximize,
            ),
            epoch: 0,
        }
    }

    /// Accumulates the gradient of the batch MSE into the parameter grad buffers.
    pub fn accumulate_gradients(&mut self, batch: &[TrainSample]) -> Result<StepStats> {
        let total: usize = batch.iter().map(|s| s.targets.len()).sum();
        if total == 0 {
            return invalid("batch has no targets");
        }
        let (mut loss, mut ssim) = (0.0, 0.0);
        for s in batch {
            if s.targets.len() != s.taus.len() {
                return shape_err(
                    "train_step",
                    format!("{} targets for {} offsets", s.targets.len(), s.taus.len()),
                );
            }
            let mut tape = Tape::new();
            let built = self.model.build(&mut tape, &s.clip, &s.taus)?;
            let pred_shape = tape.shape(built.frames).to_vec();
            let refs: Vec<&Tensor> = s.targets.iter().collect();
            let target = Tensor::stack(&refs)?.reshape(&pred_shape)?;
            let target = tape.input(target)?;
            let l = tape.mse(built.frames, target)?;
            let weight = s.targets.len() as f64 / total as f64;
            let lv = tape.value(l).item()?;
            loss += weight * lv;
            let grads = tape.backward(l, &Tensor::scalar(weight))?;
            self.model.params_mut().accumulate(&grads)?;
            let pred = self.model.split_frames(tape.value(built.frames));
            for (p, t) in pred.iter().zip(&s.targets) {
                ssim += metrics::ssim(p, t)?;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step: self.adam.steps(),
                loss,
            });
        }
        Ok(StepStats {
            loss,
            ssim: ssim / total as f64,
        })
    }

    /// MSE over every target frame of the batch, followed by one Adam update.
    pub fn train_step(&mut self, batch: &[TrainSample]) -> Result<StepStats> {
        self.model.params_mut().zero_grad();
        let stats = match self.accumulate_gradients(batch) {
            Ok(s) => s,
            Err(e) => {
                self.model.params_mut().zero_grad();
                return Err(e);
            }
        };
        self.adam
            .step(self.model.params_mut())
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged {
                    step: self.adam.steps(),
                    loss: stats.loss,
                },
                other => other,
            })?;
        Ok(stats)
    }

    /// Closes an epoch: feeds the training SSIM to the scheduler.
    pub fn end_epoch(&mut self, train_ssim: f64) -> f64 {
        let lr = self.scheduler.step(train_ssim, self.adam.lr());
        self.adam.set_lr(lr);
        self.epoch += 1;
        lr
    }

    /// Training batch `step` of `epoch`, drawn deterministically from `source`.
    pub fn batch(
        &self,
        source: &dyn ClipSource,
        epoch: usize,
        step: usize,
    ) -> Result<Vec<TrainSample>> {
        let cfg = self.model.config();
        let taus = cfg.train_taus();
        (0..cfg.batch)
            .map(|b| {
                let index = ((epoch * cfg.steps_per_epoch + step) * cfg.batch + b) as u64;
                let (clip, future) = source.sample(seed::derive(cfg.seed, "train", index))?;
                TrainSample::from_future(clip, &future, &taus)
            })
            .collect()
    }

    /// Runs one epoch of `steps_per_epoch` steps.
    pub fn run_epoch(&mut self, source: &dyn ClipSource) -> Result<EpochStats> {
        let steps = self.model.config().steps_per_epoch;
        let (mut loss, mut ssim) = (0.0, 0.0);
        for step in 0..steps {
            let batch = self.batch(source, self.epoch, step)?;
            let s = self.train_step(&batch)?;
            loss += s.loss;
            ssim += s.ssim;
        }
        let epoch = self.epoch;
        let train_ssim = ssim / steps as f64;
        let lr = self.end_epoch(train_ssim);
        Ok(EpochStats {
            epoch,
            loss: loss / steps as f64,
            lr,
            train_ssim,
        })
    }
}

/// Trains until `trainer.epoch` reaches the configured epoch count, calling
/// `on_epoch` after every epoch.
pub fn fit(
    trainer: &mut Trainer,
    source: &dyn ClipSource,
    mut on_epoch: impl FnMut(&Trainer, &EpochStats) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    let mut log = Vec::new();
    while trainer.epoch < trainer.model.config().epochs {
        let stats = trainer.run_epoch(source)?;
        on_epoch(trainer, &stats)?;
        log.push(stats);
    }
    Ok(log)
}
