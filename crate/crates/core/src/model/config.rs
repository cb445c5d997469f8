use std::fmt;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::{Error, Result};

/// How the latent at `t + tau` is produced from the encoded window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemporalKind {
    /// Derivative chain plus Taylor evaluation.
    Taylor,
    /// Point estimate: `tau` vector tiled over the latent grid.
    Expand,
    /// Point estimate: bottlenecked latent joined with the `tau` vector.
    Flatten,
}

impl fmt::Display for TemporalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalKind::Taylor => "taylor",
            TemporalKind::Expand => "expand",
            TemporalKind::Flatten => "flatten",
        })
    }
}

impl FromStr for TemporalKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "taylor" => Ok(TemporalKind::Taylor),
            "expand" => Ok(TemporalKind::Expand),
            "flatten" => Ok(TemporalKind::Flatten),
            _ => Err(format!("unknown temporal model {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadInit {
    Zeros,
    He,
}

impl fmt::Display for HeadInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadInit::Zeros => "zeros",
            HeadInit::He => "he",
        })
    }
}

impl FromStr for HeadInit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zeros" => Ok(HeadInit::Zeros),
            "he" => Ok(HeadInit::He),
            _ => Err(format!("unknown head init {s:?}")),
        }
    }
}

/// Activation used throughout; recorded in configs but not selectable.
pub const ACTIVATION: &str = "leaky_relu:0.2";
/// Decoder upsampling; recorded in configs but not selectable.
pub const UPSAMPLING: &str = "transposed_conv";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Taylor order.
    pub gamma: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Observed frames per clip.
    pub clip_length: usize,
    pub latent_channels: usize,
    /// Width of the encoder stem; doubled at every downsampling stage.
    pub encoder_channels: usize,
    /// Power of two.
    pub spatial_down: usize,
    /// Residual blocks per encoder stage.
    pub encoder_depth: usize,
    pub temporal: TemporalKind,
    pub head_init: HeadInit,
    /// Derivative heads emit `delta_n = f_n(.) / derivative_scale^n`.
    pub derivative_scale: f64,
    /// Frames predicted per clip during training and evaluation.
    pub horizon: usize,
    /// Spacing of training targets in frame units.
    pub tau_unit: f64,
    pub lr: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gamma: 4,
            in_channels: 1,
            height: 32,
            width: 32,
            clip_length: 10,
            latent_channels: 32,
            encoder_channels: 16,
            spatial_down: 4,
            encoder_depth: 1,
            temporal: TemporalKind::Taylor,
            head_init: HeadInit::Zeros,
            derivative_scale: 10.0,
            horizon: 10,
            tau_unit: 1.0,
            lr: 1e-4,
            epochs: 4000,
            steps_per_epoch: 1,
            batch: 16,
            plateau_factor: 0.5,
            plateau_patience: 20,
            seed: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "gamma",
    "in_channels",
    "height",
    "width",
    "clip_length",
    "latent_channels",
    "encoder_channels",
    "spatial_down",
    "encoder_depth",
    "temporal",
    "head_init",
    "derivative_scale",
    "horizon",
    "tau_unit",
    "lr",
    "epochs",
    "steps_per_epoch",
    "batch",
    "plateau_factor",
    "plateau_patience",
    "seed",
    "activation",
    "upsampling",
];

impl ModelConfig {
    pub fn latent_height(&self) -> usize {
        self.height / self.spatial_down
    }

    pub fn latent_width(&self) -> usize {
        self.width / self.spatial_down
    }

    /// Number of stride-2 encoder stages (and decoder upsampling stages).
    pub fn stages(&self) -> usize {
        self.spatial_down.trailing_zeros() as usize
    }

    /// Training targets: `tau_unit, 2 tau_unit, ...` up to `horizon`.
    pub fn train_taus(&self) -> Vec<f64> {
        (1..)
            .map(|k| k as f64 * self.tau_unit)
            .take_while(|&t| t <= self.horizon as f64 + 1e-9)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.gamma < 1 {
            return fail("gamma must be at least 1".into());
        }
        let positive = [
            ("in_channels", self.in_channels),
            ("height", self.height),
            ("width", self.width),
            ("clip_length", self.clip_length),
            ("latent_channels", self.latent_channels),
            ("encoder_channels", self.encoder_channels),
            ("horizon", self.horizon),
            ("steps_per_epoch", self.steps_per_epoch),
            ("batch", self.batch),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{k} must be positive"));
        }
        if !self.spatial_down.is_power_of_two() {
            return fail(format!(
                "spatial_down {} is not a power of two",
                self.spatial_down
            ));
        }
        if !self.height.is_multiple_of(self.spatial_down)
            || !self.width.is_multiple_of(self.spatial_down)
        {
            return fail(format!(
                "spatial_down {} does not divide {}x{}",
                self.spatial_down, self.height, self.width
            ));
        }
        if self.temporal == TemporalKind::Flatten
            && (!self.latent_height().is_multiple_of(8) || !self.latent_width().is_multiple_of(8))
        {
            return fail(format!(
                "flatten head needs latent extents divisible by 8, got {}x{}",
                self.latent_height(),
                self.latent_width()
            ));
        }
        if !(self.tau_unit > 0.0) || self.tau_unit > self.horizon as f64 {
            return fail(format!("tau_unit {} outside (0, horizon]", self.tau_unit));
        }
        if !(self.derivative_scale > 0.0) || !self.derivative_scale.is_finite() {
            return fail("derivative_scale must be positive".into());
        }
        if !(self.lr > 0.0) {
            return fail("lr must be positive".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail("plateau_factor must lie in (0, 1)".into());
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("gamma", self.gamma);
        kv.set("in_channels", self.in_channels);
        kv.set("height", self.height);
        kv.set("width", self.width);
        kv.set("clip_length", self.clip_length);
        kv.set("latent_channels", self.latent_channels);
        kv.set("encoder_channels", self.encoder_channels);
        kv.set("spatial_down", self.spatial_down);
        kv.set("encoder_depth", self.encoder_depth);
        kv.set("temporal", self.temporal);
        kv.set("head_init", self.head_init);
        kv.set("derivative_scale", self.derivative_scale);
        kv.set("horizon", self.horizon);
        kv.set("tau_unit", self.tau_unit);
        kv.set("lr", self.lr);
        kv.set("epochs", self.epochs);
        kv.set("steps_per_epoch", self.steps_per_epoch);
        kv.set("batch", self.batch);
        kv.set("plateau_factor", self.plateau_factor);
        kv.set("plateau_patience", self.plateau_patience);
        kv.set("seed", self.seed);
        kv.set("activation", ACTIVATION);
        kv.set("upsampling", UPSAMPLING);
        kv
    }

    /// Canonical text form: sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        self.to_key_values().to_text()
    }

    /// Overlays the recognised keys of `kv` on `self`. Unknown keys are ignored.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.read("gamma", &mut self.gamma)?;
        kv.read("in_channels", &mut self.in_channels)?;
        kv.read("height", &mut self.height)?;
        kv.read("width", &mut self.width)?;
        kv.read("clip_length", &mut self.clip_length)?;
        kv.read("latent_channels", &mut self.latent_channels)?;
        kv.read("encoder_channels", &mut self.encoder_channels)?;
        kv.read("spatial_down", &mut self.spatial_down)?;
        kv.read("encoder_depth", &mut self.encoder_depth)?;
        kv.read("temporal", &mut self.temporal)?;
        kv.read("head_init", &mut self.head_init)?;
        kv.read("derivative_scale", &mut self.derivative_scale)?;
        kv.read("horizon", &mut self.horizon)?;
        kv.read("tau_unit", &mut self.tau_unit)?;
        kv.read("lr", &mut self.lr)?;
        kv.read("epochs", &mut self.epochs)?;
        kv.read("steps_per_epoch", &mut self.steps_per_epoch)?;
        kv.read("batch", &mut self.batch)?;
        kv.read("plateau_factor", &mut self.plateau_factor)?;
        kv.read("plateau_patience", &mut self.plateau_patience)?;
        kv.read("seed", &mut self.seed)?;
        for (key, fixed) in [("activation", ACTIVATION), ("upsampling", UPSAMPLING)] {
            if let Some(v) = kv.get(key) {
                if v != fixed {
                    return Err(Error::Config(format!("{key}={v} is not supported")));
                }
            }
        }
        Ok(())
    }

    /// Strict parse: every key must be known; the result is validated.
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.check_known(KEYS)?;
        let mut cfg = Self::default();
        cfg.apply(&kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn keys() -> &'static [&'static str] {
        KEYS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = ModelConfig {
            lr: 3.3e-4,
            derivative_scale: 10.0,
            temporal: TemporalKind::Expand,
            tau_unit: 2.0,
            ..ModelConfig::default()
        };
        let back = ModelConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn latent_extents() {
        let cfg = ModelConfig {
            clip_length: 4,
            height: 16,
            width: 16,
            spatial_down: 4,
            ..ModelConfig::default()
        };
        assert_eq!(
            (cfg.latent_height(), cfg.latent_width(), cfg.stages()),
            (4, 4, 2)
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            ModelConfig {
                gamma: 0,
                ..Default::default()
            },
            ModelConfig {
                spatial_down: 3,
                ..Default::default()
            },
            ModelConfig {
                height: 30,
                ..Default::default()
            },
            ModelConfig {
                temporal: TemporalKind::Flatten,
                height: 16,
                width: 16,
                ..Default::default()
            },
            ModelConfig {
                tau_unit: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(ModelConfig::from_text("gamma=2\nbogus=1\n").is_err());
        assert!(ModelConfig::from_text("activation=tanh\n").is_err());
    }

    #[test]
    fn train_taus_follow_unit() {
        let cfg = ModelConfig {
            tau_unit: 2.0,
            ..Default::default()
        };
        assert_eq!(cfg.train_taus(), vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(ModelConfig::default().train_taus().len(), 10);
    }
}
