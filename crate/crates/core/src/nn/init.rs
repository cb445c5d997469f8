use rand::Rng;

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Fan-in scaled uniform for a leaky ReLU with the given negative slope.
    HeUniform {
        slope: f64,
    },
    /// Uniform in `+-1/sqrt(fan_in)`.
    FanInUniform,
}

impl Init {
    pub fn sample<R: Rng + ?Sized>(self, shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::HeUniform { slope } => {
                let gain2 = 2.0 / (1.0 + slope * slope);
                let bound = (3.0 * gain2 / fan_in.max(1) as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor::new(shape, data).expect("positive extents")
            }
            Init::FanInUniform => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor::new(shape, data).expect("positive extents")
            }
        }
    }
}
