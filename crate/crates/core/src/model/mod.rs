//! Continuous-time video forecaster: an encoder maps the observed window to a
//! latent sequence, a chain of derivative blocks estimates the Taylor terms of
//! the latent trajectory at the last frame, and a decoder renders the
//! trajectory at any `tau`.

pub mod config;
pub(crate) mod network;
pub mod taylor;
pub mod train;

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::baselines::PointEstimateHead;
use crate::data::VideoClip;
use crate::error::{invalid, shape_err, Result};
use crate::nn::ParamStore;
use crate::seed;
use crate::tensor::{Tape, Tensor, Var};

pub use config::{HeadInit, ModelConfig, TemporalKind};
use network::{Decoder, DerivativeChain, Encoder};
pub use taylor::{taylor_evaluate, taylor_evaluate_var, taylor_weights, TaylorCoefficients};
pub use train::{fit, EpochStats, TrainSample, Trainer};

/// Encoded observation window `[C', T, H', W']`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentWindow {
    pub latents: Tensor,
}

impl LatentWindow {
    /// Latent of the last observed frame, `[C', H', W']`.
    pub fn last(&self) -> Tensor {
        let s = self.latents.shape();
        self.latents
            .narrow(1, s[1] - 1, 1)
            .and_then(|t| t.reshape(&[s[0], s[2], s[3]]))
            .expect("window has at least one frame")
    }
}

#[derive(Clone, Debug)]
enum Temporal {
    Taylor(DerivativeChain),
    Point(PointEstimateHead),
}

/// Invocation counts, for checking how much work a call performs.
#[derive(Debug, Default)]
pub struct PassCounts {
    encoder: AtomicUsize,
    temporal: AtomicUsize,
    decoder: AtomicUsize,
}

impl PassCounts {
    pub fn encoder(&self) -> usize {
        self.encoder.load(Ordering::Relaxed)
    }

    /// Derivative-chain (or point-estimate head) invocations.
    pub fn temporal(&self) -> usize {
        self.temporal.load(Ordering::Relaxed)
    }

    /// Decoder invocations; one invocation may decode several latents.
    pub fn decoder(&self) -> usize {
        self.decoder.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.encoder.store(0, Ordering::Relaxed);
        self.temporal.store(0, Ordering::Relaxed);
        self.decoder.store(0, Ordering::Relaxed);
    }

    fn bump(counter: &AtomicUsize) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

/// Graph nodes produced by [`Model::build`].
pub(crate) struct Built {
    /// Unclamped frames `[K, C, 1, H, W]`, one per requested `tau`; the loss
    /// is taken here and callers see them clamped to `[0, 1]`.
    pub frames: Var,
}

pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    encoder: Encoder,
    temporal: Temporal,
    decoder: Decoder,
    counts: PassCounts,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            store: self.store.clone(),
            encoder: self.encoder.clone(),
            temporal: self.temporal.clone(),
            decoder: self.decoder.clone(),
            counts: PassCounts::default(),
        }
    }
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("parameters", &self.store.numel())
            .finish()
    }
}

impl Model {
    /// Builds a freshly initialised model; initialisation depends only on the config.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed, "init", 0);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, &config, &mut rng);
        let temporal = match config.temporal {
            TemporalKind::Taylor => {
                Temporal::Taylor(DerivativeChain::new(&mut store, &config, &mut rng))
            }
            _ => Temporal::Point(PointEstimateHead::new(&mut store, &config, &mut rng)?),
        };
        let decoder = Decoder::new(&mut store, &config, &mut rng);
        Ok(Self {
            config,
            store,
            encoder,
            temporal,
            decoder,
            counts: PassCounts::default(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn pass_counts(&self) -> &PassCounts {
        &self.counts
    }

    pub fn decoder_layers(&self) -> usize {
        self.decoder.layer_count()
    }

    fn check_clip(&self, clip: &VideoClip) -> Result<()> {
        let c = &self.config;
        let want = [c.in_channels, c.clip_length, c.height, c.width];
        if clip.frames().shape() != want {
            return shape_err(
                "encode",
                format!(
                    "clip {:?} does not match config {want:?}",
                    clip.frames().shape()
                ),
            );
        }
        Ok(())
    }

    fn check_taus(taus: &[f64]) -> Result<()> {
        if taus.is_empty() {
            return invalid("tau list is empty");
        }
        if let Some(t) = taus.iter().find(|t| !t.is_finite()) {
            return invalid(format!("tau must be finite, got {t}"));
        }
        Ok(())
    }

    fn clip_var(&self, tape: &mut Tape, clip: &VideoClip) -> Result<Var> {
        self.check_clip(clip)?;
        let mut shape = vec![1];
        shape.extend_from_slice(clip.frames().shape());
        tape.input(clip.frames().reshape(&shape)?)
    }

    fn encode_var(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        PassCounts::bump(&self.counts.encoder);
        self.encoder.forward(tape, &self.store, x)
    }

    /// `delta_0..=delta_gamma` as `[1, C', 1, H', W']` graph nodes.
    fn derivative_vars(
        &self,
        tape: &mut Tape,
        chain: &DerivativeChain,
        h: Var,
    ) -> Result<Vec<Var>> {
        PassCounts::bump(&self.counts.temporal);
        let t = self.config.clip_length;
        let last = tape.narrow(h, 2, t - 1, 1)?;
        let mut terms = vec![last];
        terms.extend(chain.forward(tape, &self.store, h)?);
        Ok(terms)
    }

    fn decode_var(&self, tape: &mut Tape, latents: Var) -> Result<Var> {
        PassCounts::bump(&self.counts.decoder);
        self.decoder.forward(tape, &self.store, latents)
    }

    /// Records the full prediction for every `tau` on `tape`.
    pub(crate) fn build(&self, tape: &mut Tape, clip: &VideoClip, taus: &[f64]) -> Result<Built> {
        Self::check_taus(taus)?;
        let x = self.clip_var(tape, clip)?;
        let h = self.encode_var(tape, x)?;
        let latents = match &self.temporal {
            Temporal::Taylor(chain) => {
                let terms = self.derivative_vars(tape, chain, h)?;
                let per_tau = taus
                    .iter()
                    .map(|&tau| taylor_evaluate_var(tape, &terms, tau))
                    .collect::<Result<Vec<_>>>()?;
                if per_tau.len() == 1 {
                    per_tau[0]
                } else {
                    tape.concat(&per_tau, 0)?
                }
            }
            Temporal::Point(head) => {
                PassCounts::bump(&self.counts.temporal);
                head.forward(tape, &self.store, h, taus)?
            }
        };
        let frames = self.decode_var(tape, latents)?;
        Ok(Built { frames })
    }

    /// Splits `[K, C, 1, H, W]` into `K` frames clamped to `[0, 1]`.
    fn split_frames(&self, all: &Tensor) -> Vec<Tensor> {
        let c = &self.config;
        let k = all.shape()[0];
        let plane = c.in_channels * c.height * c.width;
        (0..k)
            .map(|i| {
                Tensor::new(
                    &[c.in_channels, c.height, c.width],
                    all.data()[i * plane..(i + 1) * plane]
                        .iter()
                        .map(|v| v.clamp(0.0, 1.0))
                        .collect(),
                )
                .expect("decoder output matches config")
            })
            .collect()
    }

    pub fn encode(&self, clip: &VideoClip) -> Result<LatentWindow> {
        let mut tape = Tape::new();
        let x = self.clip_var(&mut tape, clip)?;
        let h = self.encode_var(&mut tape, x)?;
        let v = tape.value(h);
        let s = v.shape()[1..].to_vec();
        Ok(LatentWindow {
            latents: v.reshape(&s)?,
        })
    }

    /// Taylor terms at the last observed frame. Point-estimate models have none.
    pub fn estimate_derivatives(&self, window: &LatentWindow) -> Result<TaylorCoefficients> {
        let chain = match &self.temporal {
            Temporal::Taylor(c) => c,
            Temporal::Point(_) => {
                return invalid("point-estimate models do not estimate derivatives")
            }
        };
        let c = &self.config;
        let want = [
            c.latent_channels,
            c.clip_length,
            c.latent_height(),
            c.latent_width(),
        ];
        if window.latents.shape() != want {
            return shape_err(
                "estimate_derivatives",
                format!("latent {:?}, expected {want:?}", window.latents.shape()),
            );
        }
        let mut tape = Tape::new();
        let mut shape = vec![1];
        shape.extend_from_slice(&want);
        let h = tape.input(window.latents.reshape(&shape)?)?;
        let terms = self.derivative_vars(&mut tape, chain, h)?;
        let flat = [c.latent_channels, c.latent_height(), c.latent_width()];
        TaylorCoefficients::new(
            terms
                .iter()
                .map(|&v| tape.value(v).reshape(&flat))
                .collect::<Result<_>>()?,
        )
    }

    /// Decodes one latent `[C', H', W']` to a frame `[C, H, W]`.
    pub fn decode(&self, latent: &Tensor) -> Result<Tensor> {
        let c = &self.config;
        let want = [c.latent_channels, c.latent_height(), c.latent_width()];
        if latent.shape() != want {
            return shape_err(
                "decode",
                format!("latent {:?}, expected {want:?}", latent.shape()),
            );
        }
        let mut tape = Tape::new();
        let h = tape.input(latent.reshape(&[1, want[0], 1, want[1], want[2]])?)?;
        let y = self.decode_var(&mut tape, h)?;
        Ok(self.split_frames(tape.value(y)).remove(0))
    }

    /// Predicted frames at `t + tau` for every `tau` (in frame units), from one
    /// encoder pass and one temporal-model pass.
    pub fn forward(&self, clip: &VideoClip, taus: &[f64]) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let built = self.build(&mut tape, clip, taus)?;
        Ok(self.split_frames(tape.value(built.frames)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(temporal: TemporalKind) -> ModelConfig {
        ModelConfig {
            gamma: 2,
            height: 8,
            width: 8,
            clip_length: 3,
            latent_channels: 4,
            encoder_channels: 2,
            spatial_down: 2,
            encoder_depth: 1,
            temporal,
            horizon: 3,
            ..ModelConfig::default()
        }
    }

    fn clip(cfg: &ModelConfig, seed: u64) -> VideoClip {
        let n = cfg.in_channels * cfg.clip_length * cfg.height * cfg.width;
        let data = (0..n)
            .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0)
            .collect();
        let t = Tensor::new(
            &[cfg.in_channels, cfg.clip_length, cfg.height, cfg.width],
            data,
        )
        .unwrap();
        VideoClip::new(t, 1.0, 0.0).unwrap()
    }

    #[test]
    fn latent_extents_follow_config() {
        let cfg = ModelConfig {
            clip_length: 4,
            height: 16,
            width: 16,
            spatial_down: 4,
            latent_channels: 6,
            encoder_channels: 2,
            ..ModelConfig::default()
        };
        let m = Model::new(cfg.clone()).unwrap();
        let w = m.encode(&clip(&cfg, 1)).unwrap();
        assert_eq!(w.latents.shape(), &[6, 4, 4, 4]);
        assert_eq!(m.decoder_layers(), 6);
    }

    #[test]
    fn zero_clip_gives_finite_latent() {
        let cfg = tiny(TemporalKind::Taylor);
        let m = Model::new(cfg.clone()).unwrap();
        let zeros = VideoClip::new(Tensor::zeros(&[1, 3, 8, 8]), 1.0, 0.0).unwrap();
        assert!(m.encode(&zeros).unwrap().latents.is_finite());
    }

    #[test]
    fn mismatched_clip_rejected() {
        let m = Model::new(tiny(TemporalKind::Taylor)).unwrap();
        let wrong = VideoClip::new(Tensor::zeros(&[1, 4, 8, 8]), 1.0, 0.0).unwrap();
        assert!(m.encode(&wrong).is_err());
        assert!(m.forward(&wrong, &[1.0]).is_err());
        assert!(m
            .forward(&clip(&tiny(TemporalKind::Taylor), 0), &[])
            .is_err());
    }

    #[test]
    fn zero_heads_predict_decoded_last_latent() {
        let cfg = tiny(TemporalKind::Taylor);
        let m = Model::new(cfg.clone()).unwrap();
        let c = clip(&cfg, 3);
        let w = m.encode(&c).unwrap();
        let d = m.estimate_derivatives(&w).unwrap();
        assert_eq!(d.order(), 2);
        assert_eq!(d.term(0), &w.last());
        assert!(d.terms()[1..]
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0)));
        let expected = m.decode(&w.last()).unwrap();
        for f in m.forward(&c, &[0.5, 1.0, 7.25]).unwrap() {
            assert_eq!(f, expected);
        }
    }

    #[test]
    fn outputs_independent_of_other_taus() {
        for kind in [TemporalKind::Taylor, TemporalKind::Expand] {
            let cfg = ModelConfig {
                head_init: HeadInit::He,
                ..tiny(kind)
            };
            let m = Model::new(cfg.clone()).unwrap();
            let c = clip(&cfg, 5);
            let one = m.forward(&c, &[1.0]).unwrap();
            let many = m.forward(&c, &[1.0, 2.0, 3.0]).unwrap();
            assert_eq!(one[0], many[0]);
            let single_three = m.forward(&c, &[3.0]).unwrap();
            assert_eq!(single_three[0], many[2]);
        }
    }

    #[test]
    fn one_pass_per_forward() {
        let cfg = ModelConfig {
            head_init: HeadInit::He,
            ..tiny(TemporalKind::Taylor)
        };
        let m = Model::new(cfg.clone()).unwrap();
        let taus: Vec<f64> = (1..=10).map(|i| i as f64 * 0.7).collect();
        m.pass_counts().reset();
        let frames = m.forward(&clip(&cfg, 2), &taus).unwrap();
        assert_eq!(frames.len(), 10);
        assert_eq!(m.pass_counts().encoder(), 1);
        assert_eq!(m.pass_counts().temporal(), 1);
    }

    #[test]
    fn decoded_frames_in_unit_range_and_deterministic() {
        let cfg = ModelConfig {
            head_init: HeadInit::He,
            ..tiny(TemporalKind::Taylor)
        };
        let m = Model::new(cfg.clone()).unwrap();
        let a = m.forward(&clip(&cfg, 8), &[0.73, 1.39, 3.89]).unwrap();
        let b = m.forward(&clip(&cfg, 8), &[0.73, 1.39, 3.89]).unwrap();
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|f| f.shape() == [1, 8, 8] && f.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn same_config_same_parameters() {
        let cfg = tiny(TemporalKind::Flatten);
        assert!(Model::new(cfg).is_err());
        let cfg = ModelConfig {
            height: 16,
            width: 16,
            ..tiny(TemporalKind::Flatten)
        };
        let a = Model::new(cfg.clone()).unwrap();
        let b = Model::new(cfg).unwrap();
        assert!(a
            .params()
            .iter()
            .zip(b.params().iter())
            .all(|(x, y)| x.2 == y.2));
    }
}
