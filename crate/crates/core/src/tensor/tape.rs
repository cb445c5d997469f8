use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{invalid, shape_err, Error, Result};
use crate::nn::conv::{self, ConvGeom, ConvSpec};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Stable identifier of a trainable parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug)]
enum Unary {
    Sin,
    Tanh,
    Sigmoid,
    Exp,
    LeakyRelu(f64),
    Square,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Sin => "sin",
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Exp => "exp",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::Square => "square",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sin => x.sin(),
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Unary::Exp => x.exp(),
            Unary::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Unary::Square => x * x,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sin => x.cos(),
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => y,
            Unary::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Unary::Square => 2.0 * x,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Leaf,
    Param(ParamId),
    /// `b` is either the same shape as `a`, a trailing suffix of it, or a scalar.
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    Unary(Unary, Var),
    Sum(Var),
    Mean(Var),
    MatMul(Var, Var),
    Reshape(Var),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    RepeatTrailing(Var),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    ConvTranspose {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::Binary(Binary::Add, ..) => "add",
            Op::Binary(Binary::Sub, ..) => "sub",
            Op::Binary(Binary::Mul, ..) => "mul",
            Op::Scale(..) => "scale",
            Op::Unary(u, _) => u.name(),
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MatMul(..) => "matmul",
            Op::Reshape(_) => "reshape",
            Op::Narrow { .. } => "narrow",
            Op::Concat { .. } => "concat",
            Op::RepeatTrailing(_) => "repeat_trailing",
            Op::Conv { .. } => "conv3d",
            Op::ConvTranspose { .. } => "conv_transpose3d",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Per-forward-pass record of primitive ops.
///
/// Nodes are appended in execution order, so every op's inputs precede it.
/// A tape is confined to one thread; independent tapes may run in parallel.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient with respect to a leaf or intermediate node, if it was reached.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.nodes.get(var.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }
}

fn check_finite(index: usize, op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { index, op })
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        let index = self.nodes.len();
        check_finite(index, op.name(), value.data())?;
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(index))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant: no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, false)
    }

    /// A differentiable leaf; its gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId, t: &Tensor) -> Result<Var> {
        let needs = t.requires_grad();
        self.push(t.clone(), Op::Param(id), needs)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa == sb || sb.iter().product::<usize>() == 1 || sa.ends_with(sb);
        if !ok {
            let name = Op::Binary(kind, a, b).name();
            return shape_err(name, format!("cannot broadcast {sb:?} onto {sa:?}"));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let m = bv.len();
        let data: Vec<f64> = if m == av.len() {
            let z = av.iter().zip(bv);
            match kind {
                Binary::Add => z.map(|(x, y)| x + y).collect(),
                Binary::Sub => z.map(|(x, y)| x - y).collect(),
                Binary::Mul => z.map(|(x, y)| x * y).collect(),
            }
        } else {
            match kind {
                Binary::Add => av.iter().enumerate().map(|(i, x)| x + bv[i % m]).collect(),
                Binary::Sub => av.iter().enumerate().map(|(i, x)| x - bv[i % m]).collect(),
                Binary::Mul => av.iter().enumerate().map(|(i, x)| x * bv[i % m]).collect(),
            }
        };
        let out = Tensor::from_parts(sa.to_vec(), data);
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Binary(kind, a, b), needs)
    }

    /// Elementwise `a + b`; `b` may be a trailing suffix of `a` or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| c * x);
        let needs = self.needs(a);
        self.push(out, Op::Scale(a, c), needs)
    }

    fn unary(&mut self, u: Unary, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| u.apply(x));
        let needs = self.needs(a);
        self.push(out, Op::Unary(u, a), needs)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sin, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary(Unary::LeakyRelu(slope), a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Square, a)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        let needs = self.needs(a);
        self.push(out, Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).mean());
        let needs = self.needs(a);
        self.push(out, Op::Mean(a), needs)
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err("mse", format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        self.mean(sq)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err("matmul", format!("{sa:?} x {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), needs)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        let needs = self.needs(a);
        self.push(out, Op::Reshape(a), needs)
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).narrow(axis, start, len)?;
        let needs = self.needs(x);
        self.push(out, Op::Narrow { x, axis, start }, needs)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat(&values, axis)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        )
    }

    /// `[s..] -> [s.., extra..]`, each element repeated over the new axes.
    pub fn repeat_trailing(&mut self, x: Var, extra: &[usize]) -> Result<Var> {
        if extra.contains(&0) {
            return invalid("repeat_trailing with zero extent");
        }
        let reps: usize = extra.iter().product();
        let src = self.value(x);
        let mut shape = src.shape().to_vec();
        shape.extend_from_slice(extra);
        let data = src
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, reps))
            .collect();
        let needs = self.needs(x);
        self.push(
            Tensor::from_parts(shape, data),
            Op::RepeatTrailing(x),
            needs,
        )
    }

    fn check_conv_params(
        &self,
        op: &'static str,
        w: Var,
        b: Option<Var>,
        weight_shape: [usize; 5],
        bias_len: usize,
    ) -> Result<()> {
        if self.shape(w) != weight_shape {
            return shape_err(
                op,
                format!("weight {:?}, expected {weight_shape:?}", self.shape(w)),
            );
        }
        if let Some(b) = b {
            if self.shape(b) != [bias_len] {
                return shape_err(
                    op,
                    format!("bias {:?}, expected [{bias_len}]", self.shape(b)),
                );
            }
        }
        Ok(())
    }

    /// Cross-correlation of `[N, Cin, T, H, W]` with `[Cout, Cin, kT, kH, kW]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        let geom = ConvGeom::forward(spec, self.shape(x))?;
        self.check_conv_params("conv3d", w, b, spec.weight_shape(), spec.out_channels)?;
        let y_shape = geom.y_shape();
        let mut y = vec![0.0; y_shape.iter().product()];
        conv::conv_forward(&geom, self.value(x).data(), self.value(w).data(), &mut y);
        if let Some(b) = b {
            let plane = geom.output.iter().product();
            conv::add_channel_bias(&mut y, self.value(b).data(), geom.batch, plane);
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            Tensor::from_parts(y_shape, y),
            Op::Conv { x, w, b, geom },
            needs,
        )
    }

    /// Adjoint of [`Tape::conv3d`]; weights are `[Cin, Cout, kT, kH, kW]`.
    pub fn conv_transpose3d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: &ConvSpec,
        output_padding: [usize; 3],
    ) -> Result<Var> {
        let geom = ConvGeom::transposed(spec, self.shape(x), output_padding)?;
        self.check_conv_params(
            "conv_transpose3d",
            w,
            b,
            spec.transposed_weight_shape(),
            spec.out_channels,
        )?;
        let y_shape = geom.x_shape();
        let mut y = vec![0.0; y_shape.iter().product()];
        conv::conv_backward_input(&geom, self.value(x).data(), self.value(w).data(), &mut y);
        if let Some(b) = b {
            let plane = geom.input.iter().product();
            conv::add_channel_bias(&mut y, self.value(b).data(), geom.batch, plane);
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            Tensor::from_parts(y_shape, y),
            Op::ConvTranspose { x, w, b, geom },
            needs,
        )
    }

    /// Reverse sweep from `output`, seeded with `seed` (same shape as the output).
    ///
    /// Does not consume the tape; calling it twice gives identical results.
    pub fn backward(&self, output: Var, seed: &Tensor) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        if output.0 >= self.nodes.len() {
            return invalid(format!("output node {} not on tape", output.0));
        }
        if seed.shape() != self.shape(output) {
            return shape_err(
                "backward",
                format!("seed {:?} vs output {:?}", seed.shape(), self.shape(output)),
            );
        }
        check_finite(output.0, "seed", seed.data())?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed.data().to_vec());

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            check_finite(i, node.op.name(), &g)?;
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let mut params = BTreeMap::new();
        let mut nodes = Vec::with_capacity(grads.len());
        for (i, g) in grads.into_iter().enumerate() {
            let node = &self.nodes[i];
            let t = g.map(|g| Tensor::from_parts(node.value.shape().to_vec(), g));
            if let (Op::Param(id), Some(t)) = (&node.op, &t) {
                params
                    .entry(*id)
                    .and_modify(|acc: &mut Tensor| {
                        add_into(acc.data_mut(), t.data());
                    })
                    .or_insert_with(|| t.clone());
            }
            nodes.push(t);
        }
        Ok(Gradients { nodes, params })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: Var, g: Vec<f64>) {
        if !self.needs(target) {
            return;
        }
        match &mut grads[target.0] {
            Some(acc) => add_into(acc, &g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Returns a zeroed buffer for `target`'s gradient, or `None` if it needs none.
    fn slot<'a>(&self, grads: &'a mut [Option<Vec<f64>>], target: Var) -> Option<&'a mut Vec<f64>> {
        if !self.needs(target) {
            return None;
        }
        let n = self.value(target).numel();
        Some(grads[target.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        match &node.op {
            Op::Input | Op::Leaf | Op::Param(_) => {}
            Op::Binary(kind, a, b) => {
                let (a, b) = (*a, *b);
                let bv = self.value(b).data();
                let m = bv.len();
                if self.needs(a) {
                    let ga = match kind {
                        Binary::Add | Binary::Sub => g.to_vec(),
                        Binary::Mul => g.iter().enumerate().map(|(i, x)| x * bv[i % m]).collect(),
                    };
                    self.accumulate(grads, a, ga);
                }
                if self.needs(b) {
                    let av = self.value(a).data();
                    let mut gb = vec![0.0; m];
                    match kind {
                        Binary::Add => g.iter().enumerate().for_each(|(i, x)| gb[i % m] += x),
                        Binary::Sub => g.iter().enumerate().for_each(|(i, x)| gb[i % m] -= x),
                        Binary::Mul => g
                            .iter()
                            .enumerate()
                            .for_each(|(i, x)| gb[i % m] += x * av[i]),
                    }
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.iter().map(|x| c * x).collect()),
            Op::Unary(u, a) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                let ga = g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(gv, (&xv, &yv))| gv * u.derivative(xv, yv))
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![g[0] / n as f64; n]);
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.needs(*a) {
                    // dA = G B^T
                    let bt = transpose_raw(self.value(*b).data(), k, n);
                    self.accumulate(grads, *a, matmul_raw(g, &bt, m, n, k));
                }
                if self.needs(*b) {
                    // dB = A^T G
                    let at = transpose_raw(self.value(*a).data(), m, k);
                    self.accumulate(grads, *b, matmul_raw(&at, g, k, m, n));
                }
            }
            Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Narrow { x, axis, start } => {
                if let Some(gx) = self.slot(grads, *x) {
                    let src = self.value(*x).shape();
                    let outer: usize = src[..*axis].iter().product();
                    let inner: usize = src[axis + 1..].iter().product();
                    let len = node.value.shape()[*axis];
                    let ext = src[*axis];
                    for o in 0..outer {
                        let dst = (o * ext + start) * inner;
                        add_into(
                            &mut gx[dst..dst + len * inner],
                            &g[o * len * inner..][..len * inner],
                        );
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let out_shape = node.value.shape();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let total = out_shape[*axis];
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[*axis];
                    if self.needs(p) {
                        let mut gp = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            gp.extend_from_slice(&g[src..src + len * inner]);
                        }
                        self.accumulate(grads, p, gp);
                    }
                    offset += len;
                }
            }
            Op::RepeatTrailing(x) => {
                let n = self.value(*x).numel();
                let reps = g.len() / n;
                let gx = g.chunks_exact(reps).map(|c| c.iter().sum()).collect();
                self.accumulate(grads, *x, gx);
            }
            Op::Conv { x, w, b, geom } => {
                if let Some(gx) = self.slot(grads, *x) {
                    conv::conv_backward_input(geom, g, self.value(*w).data(), gx);
                }
                let xv = self.value(*x).data();
                if let Some(gw) = self.slot(grads, *w) {
                    conv::conv_backward_weight(geom, xv, g, gw);
                }
                if let Some(b) = b {
                    let plane = geom.output.iter().product();
                    let gb = conv::channel_bias_grad(g, geom.cout, geom.batch, plane);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::ConvTranspose { x, w, b, geom } => {
                // forward was y = conv^T(x): x plays the role of the conv output
                if let Some(gx) = self.slot(grads, *x) {
                    conv::conv_forward(geom, g, self.value(*w).data(), gx);
                }
                let xv = self.value(*x).data();
                if let Some(gw) = self.slot(grads, *w) {
                    conv::conv_backward_weight(geom, g, xv, gw);
                }
                if let Some(b) = b {
                    let plane = geom.input.iter().product();
                    let gb = conv::channel_bias_grad(g, geom.cin, geom.batch, plane);
                    self.accumulate(grads, *b, gb);
                }
            }
        }
        Ok(())
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
