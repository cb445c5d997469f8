use rand::Rng;

use super::config::{HeadInit, ModelConfig};
use crate::error::Result;
use crate::nn::{Conv3d, ConvSpec, ConvTranspose3d, Init, ParamStore, LEAKY_SLOPE};
use crate::tensor::{Tape, Var};

pub(crate) const HE: Init = Init::HeUniform { slope: LEAKY_SLOPE };

/// Two same-padded 3x3x3 convolutions with a skip connection.
#[derive(Clone, Debug)]
struct ResBlock {
    a: Conv3d,
    b: Conv3d,
}

impl ResBlock {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, ch: usize, rng: &mut R) -> Self {
        let spec = ConvSpec::same(ch, ch, [3, 3, 3]);
        Self {
            a: Conv3d::new(store, &format!("{name}.a"), spec, HE, rng),
            b: Conv3d::new(store, &format!("{name}.b"), spec, HE, rng),
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.a.forward(tape, store, x)?;
        let y = tape.leaky_relu(y, LEAKY_SLOPE)?;
        let y = self.b.forward(tape, store, y)?;
        let y = tape.add(x, y)?;
        tape.leaky_relu(y, LEAKY_SLOPE)
    }
}

/// Small 3-D residual network: `[N, C, T, H, W] -> [N, C', T, H', W']`.
#[derive(Clone, Debug)]
pub(crate) struct Encoder {
    stem: Conv3d,
    stages: Vec<(Option<Conv3d>, Vec<ResBlock>)>,
    project: Conv3d,
}

impl Encoder {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut ch = cfg.encoder_channels;
        let stem = Conv3d::new(
            store,
            "encoder.stem",
            ConvSpec::same(cfg.in_channels, ch, [3, 3, 3]),
            HE,
            rng,
        );
        let mut stages = Vec::new();
        let blocks = |store: &mut ParamStore, s: usize, ch: usize, rng: &mut R| -> Vec<ResBlock> {
            (0..cfg.encoder_depth)
                .map(|b| ResBlock::new(store, &format!("encoder.stage{s}.block{b}"), ch, rng))
                .collect()
        };
        if cfg.stages() == 0 {
            stages.push((None, blocks(store, 0, ch, rng)));
        }
        for s in 0..cfg.stages() {
            let next = ch * 2;
            let spec = ConvSpec::same(ch, next, [3, 3, 3]).with_stride([1, 2, 2]);
            let down = Conv3d::new(store, &format!("encoder.stage{s}.down"), spec, HE, rng);
            ch = next;
            stages.push((Some(down), blocks(store, s, ch, rng)));
        }
        let project = Conv3d::new(
            store,
            "encoder.project",
            ConvSpec::new(ch, cfg.latent_channels, [1, 1, 1]),
            HE,
            rng,
        );
        Self {
            stem,
            stages,
            project,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.stem.forward(tape, store, x)?;
        let mut y = tape.leaky_relu(y, LEAKY_SLOPE)?;
        for (down, blocks) in &self.stages {
            if let Some(d) = down {
                y = d.forward(tape, store, y)?;
                y = tape.leaky_relu(y, LEAKY_SLOPE)?;
            }
            for b in blocks {
                y = b.forward(tape, store, y)?;
            }
        }
        self.project.forward(tape, store, y)
    }
}

/// One derivative block: two 3x3x3 convolutions keeping `[C', T, H', W']`.
#[derive(Clone, Debug)]
struct DeltaBlock {
    a: Conv3d,
    b: Conv3d,
}

/// Chain of derivative blocks, each followed by a head that collapses time.
#[derive(Clone, Debug)]
pub(crate) struct DerivativeChain {
    blocks: Vec<DeltaBlock>,
    heads: Vec<Conv3d>,
    scale: f64,
}

impl DerivativeChain {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.latent_channels;
        let spec = ConvSpec::same(c, c, [3, 3, 3]);
        let head_spec = ConvSpec::new(c, c, [cfg.clip_length, 3, 3]).with_padding([0, 1, 1]);
        let head_init = match cfg.head_init {
            HeadInit::Zeros => Init::Zeros,
            HeadInit::He => HE,
        };
        let mut blocks = Vec::new();
        let mut heads = Vec::new();
        for n in 1..=cfg.gamma {
            blocks.push(DeltaBlock {
                a: Conv3d::new(store, &format!("delta{n}.a"), spec, HE, rng),
                b: Conv3d::new(store, &format!("delta{n}.b"), spec, HE, rng),
            });
            heads.push(Conv3d::new(
                store,
                &format!("delta{n}.head"),
                head_spec,
                head_init,
                rng,
            ));
        }
        Self {
            blocks,
            heads,
            scale: cfg.derivative_scale,
        }
    }

    /// `[N, C', T, H', W']` -> `delta_1..=delta_gamma`, each `[N, C', 1, H', W']`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Vec<Var>> {
        let mut x = h;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (n, (block, head)) in self.blocks.iter().zip(&self.heads).enumerate() {
            let y = block.a.forward(tape, store, x)?;
            let y = tape.leaky_relu(y, LEAKY_SLOPE)?;
            let y = block.b.forward(tape, store, y)?;
            x = tape.leaky_relu(y, LEAKY_SLOPE)?;
            let d = head.forward(tape, store, x)?;
            let d = if self.scale == 1.0 {
                d
            } else {
                tape.scale(d, self.scale.powi(-(n as i32 + 1)))?
            };
            out.push(d);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
enum UpLayer {
    Conv(Conv3d),
    Up(ConvTranspose3d),
}

/// 1x3x3 convolutions with stride-2 transposed convolutions for upsampling;
/// `[N, C', 1, H', W'] -> [N, C, 1, H, W]`, linear output.
#[derive(Clone, Debug)]
pub(crate) struct Decoder {
    layers: Vec<UpLayer>,
}

impl Decoder {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let k = [1, 3, 3];
        let mut ch = cfg.latent_channels;
        let mut layers = vec![UpLayer::Conv(Conv3d::new(
            store,
            "decoder.in",
            ConvSpec::same(ch, ch, k),
            HE,
            rng,
        ))];
        for s in 0..cfg.stages() {
            let next = (ch / 2).max(4);
            let spec = ConvSpec::same(ch, next, k).with_stride([1, 2, 2]);
            layers.push(UpLayer::Up(ConvTranspose3d::new(
                store,
                &format!("decoder.up{s}"),
                spec,
                [0, 1, 1],
                HE,
                rng,
            )));
            layers.push(UpLayer::Conv(Conv3d::new(
                store,
                &format!("decoder.conv{s}"),
                ConvSpec::same(next, next, k),
                HE,
                rng,
            )));
            ch = next;
        }
        layers.push(UpLayer::Conv(Conv3d::new(
            store,
            "decoder.out",
            ConvSpec::same(ch, cfg.in_channels, k),
            Init::HeUniform { slope: 1.0 },
            rng,
        )));
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        let mut y = h;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            y = match layer {
                UpLayer::Conv(c) => c.forward(tape, store, y)?,
                UpLayer::Up(u) => u.forward(tape, store, y)?,
            };
            if i != last {
                y = tape.leaky_relu(y, LEAKY_SLOPE)?;
            }
        }
        Ok(y)
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}
