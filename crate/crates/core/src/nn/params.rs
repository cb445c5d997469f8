use crate::error::{invalid, Result};
use crate::tensor::{Gradients, ParamId, Tape, Tensor, Var};

/// Named trainable tensors, addressed by [`ParamId`] in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        tensor.set_requires_grad(true);
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Puts the parameter on the tape.
    pub fn var(&self, tape: &mut Tape, id: ParamId) -> Result<Var> {
        tape.param(id, self.get(id))
    }

    /// Adds every parameter gradient in `grads` to the parameters' grad buffers.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.params() {
            if id.0 >= self.tensors.len() {
                return invalid(format!("gradient for unknown parameter {}", id.0));
            }
            self.tensors[id.0].accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn scale_grads(&mut self, c: f64) {
        for t in &mut self.tensors {
            if let Some(g) = t.take_grad() {
                let g = Tensor::new(t.shape(), g.into_iter().map(|v| v * c).collect())
                    .expect("grad shape matches parameter");
                t.accumulate_grad(&g).expect("same shape");
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Replaces the value of `name`, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let slot = &mut self.tensors[id.0];
        if slot.shape() != value.shape() {
            return invalid(format!(
                "parameter {} has shape {:?}, got {:?}",
                self.names[id.0],
                slot.shape(),
                value.shape()
            ));
        }
        let mut value = value;
        value.set_requires_grad(slot.requires_grad());
        *slot = value;
        Ok(())
    }
}
