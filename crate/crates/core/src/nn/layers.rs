use rand::Rng;

use super::{ConvSpec, Init, ParamStore};
use crate::error::{shape_err, Result};
use crate::tensor::{ParamId, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct Conv3d {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv3d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        spec: ConvSpec,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let fan_in = spec.in_channels * spec.kernel.iter().product::<usize>();
        let weight = store.add(
            format!("{name}.weight"),
            init.sample(&spec.weight_shape(), fan_in, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]));
        Self { spec, weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = store.var(tape, self.weight)?;
        let b = store.var(tape, self.bias)?;
        tape.conv3d(x, w, Some(b), &self.spec)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose3d {
    pub spec: ConvSpec,
    pub output_padding: [usize; 3],
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvTranspose3d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        spec: ConvSpec,
        output_padding: [usize; 3],
        init: Init,
        rng: &mut R,
    ) -> Self {
        // each output receives contributions from in_channels * taps / stride volume
        let taps: usize = spec.kernel.iter().product();
        let stride: usize = spec.stride.iter().product();
        let fan_in = (spec.in_channels * taps / stride).max(1);
        let weight = store.add(
            format!("{name}.weight"),
            init.sample(&spec.transposed_weight_shape(), fan_in, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]));
        Self {
            spec,
            output_padding,
            weight,
            bias,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = store.var(tape, self.weight)?;
        let b = store.var(tape, self.bias)?;
        tape.conv_transpose3d(x, w, Some(b), &self.spec, self.output_padding)
    }
}

/// `y = x W + b` on `[N, in]` rows.
#[derive(Clone, Debug)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init.sample(&[inputs, outputs], inputs, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[outputs]));
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 2 || shape[1] != self.inputs {
            return shape_err(
                "linear",
                format!("expected [N, {}], got {shape:?}", self.inputs),
            );
        }
        let w = store.var(tape, self.weight)?;
        let b = store.var(tape, self.bias)?;
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }
}
