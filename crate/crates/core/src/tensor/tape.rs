//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends a node holding its forward value; [`Tape::backward`]
//! replays the tape in reverse. Parameters are registered by name, and a name
//! registered twice resolves to the same node so its gradient accumulates
//! over every use.

use std::collections::BTreeMap;

use super::kernels::{self, ChannelLayout, ConvGeometry};
use super::{conv_input_geometry, Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a> {
    /// Normalize with the batch's own statistics.
    Train,
    /// Normalize with running statistics.
    Eval { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel statistics of one train-mode batch norm call.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased variance.
    pub var: Vec<f64>,
    /// Elements per channel the statistics were computed over.
    pub count: usize,
}

enum Op {
    Leaf,
    Param,
    Conv {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeometry,
        batch: usize,
        transposed: bool,
    },
    BatchNorm {
        input: Var,
        scale: Var,
        shift: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
        layout: ChannelLayout,
        batch_stats: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Reshape(Var),
    Rows {
        input: Var,
        indices: Vec<usize>,
    },
    Mix {
        a: Var,
        b: Var,
        weights: Vec<f64>,
    },
    Bce {
        pred: Var,
        target: Tensor,
    },
    SquaredError {
        pred: Var,
        target: Tensor,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(TensorError::State(format!(
                "variable {} is not on this tape",
                v.0
            )));
        }
        Ok(())
    }

    /// Registers a trainable leaf. Re-registering a name returns the first node.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param, true);
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn conv3d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        self.conv(input, kernel, bias, stride, padding, false)
    }

    pub fn conv3d_transposed(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        self.conv(input, kernel, bias, stride, padding, true)
    }

    fn conv(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        transposed: bool,
    ) -> Result<Var> {
        for v in [input, kernel, bias] {
            self.check(v)?;
        }
        let x = self.value(input);
        if x.rank() != 5 {
            return Err(TensorError::Dimension(format!(
                "tape conv expects [B, C, D, H, W], got {:?}",
                x.shape()
            )));
        }
        let ((batch, _), geom) = conv_input_geometry(
            x,
            self.value(kernel),
            self.value(bias),
            stride,
            padding,
            transposed,
        )?;
        let (w, b) = (self.value(kernel).data(), self.value(bias).data());
        let (data, ch, spatial) = if transposed {
            (
                kernels::conv3d_transposed(x.data(), w, b, &geom, batch),
                geom.big_ch,
                geom.big,
            )
        } else {
            (
                kernels::conv3d(x.data(), w, b, &geom, batch),
                geom.small_ch,
                geom.small,
            )
        };
        let value = Tensor::new(vec![batch, ch, spatial[0], spatial[1], spatial[2]], data)?;
        let rg = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            value,
            Op::Conv {
                input,
                kernel,
                bias,
                geom,
                batch,
                transposed,
            },
            rg,
        ))
    }

    /// Batch normalization over axis 1. Train mode returns the batch statistics.
    pub fn batchnorm(
        &mut self,
        input: Var,
        scale: Var,
        shift: Var,
        mode: BatchNormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        for v in [input, scale, shift] {
            self.check(v)?;
        }
        let x = self.value(input);
        let layout = ChannelLayout::of(x.shape())?;
        for p in [scale, shift] {
            if self.value(p).shape() != [layout.channels] {
                return Err(TensorError::Dimension(format!(
                    "batch norm affine shape {:?} does not match {} channels",
                    self.value(p).shape(),
                    layout.channels
                )));
            }
        }
        let (g, b) = (self.value(scale).data(), self.value(shift).data());
        let (out, stats, batch_stats) = match mode {
            BatchNormMode::Train => {
                if layout.batch < 2 {
                    return Err(TensorError::Dimension(
                        "train-mode batch norm needs a batch of at least 2".into(),
                    ));
                }
                let out = kernels::batchnorm_train(x.data(), layout, g, b);
                let stats = BatchStats {
                    mean: out.mean.clone(),
                    var: out.var.clone(),
                    count: layout.batch * layout.spatial,
                };
                (out, Some(stats), true)
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != layout.channels || var.len() != layout.channels {
                    return Err(TensorError::Dimension(
                        "running statistics do not match channel count".into(),
                    ));
                }
                (
                    kernels::batchnorm_eval(x.data(), layout, g, b, mean, var),
                    None,
                    false,
                )
            }
        };
        let value = Tensor::new(x.shape().to_vec(), out.output)?;
        let rg = self.needs(input) || self.needs(scale) || self.needs(shift);
        let v = self.push(
            value,
            Op::BatchNorm {
                input,
                scale,
                shift,
                normalized: out.normalized,
                inv_std: out.inv_std,
                layout,
                batch_stats,
            },
            rg,
        );
        Ok((v, stats))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.needs(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.needs(x);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// `input [B, in] · weightᵀ [in, out] + bias [out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        for v in [input, weight, bias] {
            self.check(v)?;
        }
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (batch, fan_in) = match x.shape() {
            [b, i] => (*b, *i),
            s => {
                return Err(TensorError::Dimension(format!(
                    "linear input must be [B, in], got {s:?}"
                )))
            }
        };
        let fan_out = match w.shape() {
            [o, i] if *i == fan_in => *o,
            s => {
                return Err(TensorError::Dimension(format!(
                    "linear weight {s:?} incompatible with {fan_in} inputs"
                )))
            }
        };
        if b.shape() != [fan_out] {
            return Err(TensorError::Dimension(format!(
                "linear bias {:?} does not match {fan_out} outputs",
                b.shape()
            )));
        }
        let mut out = vec![0.0; batch * fan_out];
        kernels::gemm(batch, fan_in, fan_out, x.data(), false, w.data(), true, &mut out, false);
        for row in out.chunks_mut(fan_out) {
            for (o, bias) in row.iter_mut().zip(b.data()) {
                *o += bias;
            }
        }
        let value = Tensor::new(vec![batch, fan_out], out)?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            value,
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).reshape(shape)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Gathers rows along axis 0.
    pub fn rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        self.check(x)?;
        let src = self.value(x);
        let n = src.shape().first().copied().unwrap_or(0);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::Dimension(format!(
                "row index {bad} out of range for {n} rows"
            )));
        }
        let row = src.len() / n;
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            data.extend_from_slice(&src.data()[i * row..(i + 1) * row]);
        }
        let mut shape = src.shape().to_vec();
        shape[0] = indices.len();
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(x);
        Ok(self.push(
            value,
            Op::Rows {
                input: x,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Row-wise convex mix: `out[i] = w[i]·a[i] + (1 − w[i])·b[i]`.
    pub fn mix(&mut self, a: Var, b: Var, weights: &[f64]) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        ta.check_same_shape(tb, "mix")?;
        if ta.shape().first() != Some(&weights.len()) {
            return Err(TensorError::Dimension(format!(
                "mix has {} weights for {:?}",
                weights.len(),
                ta.shape()
            )));
        }
        let row = ta.len() / weights.len();
        let data = (0..ta.len())
            .map(|i| {
                let w = weights[i / row];
                w * ta.data()[i] + (1.0 - w) * tb.data()[i]
            })
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(
            value,
            Op::Mix {
                a,
                b,
                weights: weights.to_vec(),
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy against a constant target.
    pub fn bce(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.check(pred)?;
        let p = self.value(pred);
        p.check_same_shape(target, "bce")?;
        let value = Tensor::scalar(kernels::bce(p.data(), target.data()));
        let rg = self.needs(pred);
        Ok(self.push(
            value,
            Op::Bce {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// Mean over elements of `(pred − target)²`.
    pub fn squared_error(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.check(pred)?;
        let p = self.value(pred);
        p.check_same_shape(target, "squared_error")?;
        let n = p.len() as f64;
        let s: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let rg = self.needs(pred);
        Ok(self.push(
            Tensor::scalar(s / n),
            Op::SquaredError {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        ta.check_same_shape(tb, "add")?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        ta.check_same_shape(tb, "mul")?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.needs(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Gradients of a scalar `loss` with respect to every node that needs one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(TensorError::State("backward on an empty tape".into()));
        }
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(TensorError::Dimension(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let mut params = BTreeMap::new();
        for (name, &v) in &self.params {
            let g = grads
                .get(v.0)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
            params.insert(name.clone(), g);
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut send = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let shaped = |v: Var, data: Vec<f64>| Tensor::new(self.value(v).shape().to_vec(), data);

        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Conv {
                input,
                kernel,
                bias,
                geom,
                batch,
                transposed,
            } => {
                let need = [self.needs(*input), self.needs(*kernel), self.needs(*bias)];
                let x = self.value(*input).data();
                let w = self.value(*kernel).data();
                let r = if *transposed {
                    kernels::conv3d_transposed_backward(x, w, g.data(), geom, *batch, need)
                } else {
                    kernels::conv3d_backward(x, w, g.data(), geom, *batch, need)
                };
                if let Some(d) = r.input {
                    send(*input, shaped(*input, d)?);
                }
                if let Some(d) = r.kernel {
                    send(*kernel, shaped(*kernel, d)?);
                }
                if let Some(d) = r.bias {
                    send(*bias, shaped(*bias, d)?);
                }
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                normalized,
                inv_std,
                layout,
                batch_stats,
            } => {
                let (dx, dscale, dshift) = kernels::batchnorm_backward(
                    g.data(),
                    normalized,
                    inv_std,
                    self.value(*scale).data(),
                    *layout,
                    *batch_stats,
                );
                send(*input, shaped(*input, dx)?);
                send(*scale, shaped(*scale, dscale)?);
                send(*shift, shaped(*shift, dshift)?);
            }
            Op::Relu(x) => {
                let src = self.value(*x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(src)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                send(*x, shaped(*x, d)?);
            }
            Op::Sigmoid(x) => {
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                send(*x, shaped(*x, d)?);
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let (batch, fan_in) = (self.value(*input).shape()[0], self.value(*input).shape()[1]);
                let fan_out = self.value(*weight).shape()[0];
                if self.needs(*input) {
                    let mut dx = vec![0.0; batch * fan_in];
                    let w = self.value(*weight).data();
                    kernels::gemm(batch, fan_out, fan_in, g.data(), false, w, false, &mut dx, false);
                    send(*input, shaped(*input, dx)?);
                }
                if self.needs(*weight) {
                    let mut dw = vec![0.0; fan_out * fan_in];
                    let x = self.value(*input).data();
                    kernels::gemm(fan_out, batch, fan_in, g.data(), true, x, false, &mut dw, false);
                    send(*weight, shaped(*weight, dw)?);
                }
                if self.needs(*bias) {
                    let mut db = vec![0.0; fan_out];
                    for row in g.data().chunks(fan_out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    send(*bias, shaped(*bias, db)?);
                }
            }
            Op::Reshape(x) => send(*x, shaped(*x, g.data().to_vec())?),
            Op::Rows { input, indices } => {
                let src = self.value(*input);
                let row = src.len() / src.shape()[0];
                let mut d = vec![0.0; src.len()];
                for (k, &i) in indices.iter().enumerate() {
                    for j in 0..row {
                        d[i * row + j] += g.data()[k * row + j];
                    }
                }
                send(*input, shaped(*input, d)?);
            }
            Op::Mix { a, b, weights } => {
                let row = g.len() / weights.len();
                let da = (0..g.len()).map(|i| weights[i / row] * g.data()[i]).collect();
                let db = (0..g.len())
                    .map(|i| (1.0 - weights[i / row]) * g.data()[i])
                    .collect();
                send(*a, shaped(*a, da)?);
                send(*b, shaped(*b, db)?);
            }
            Op::Bce { pred, target } => {
                let d = kernels::bce_grad(self.value(*pred).data(), target.data(), g.data()[0]);
                send(*pred, shaped(*pred, d)?);
            }
            Op::SquaredError { pred, target } => {
                let p = self.value(*pred).data();
                let n = p.len() as f64;
                let d = p
                    .iter()
                    .zip(target.data())
                    .map(|(a, b)| g.data()[0] * 2.0 * (a - b) / n)
                    .collect();
                send(*pred, shaped(*pred, d)?);
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                let db = g.data().iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                send(*a, shaped(*a, da)?);
                send(*b, shaped(*b, db)?);
            }
            Op::Scale(x, f) => send(*x, g.map(|v| v * f)),
            Op::Sum(x) => {
                let v = g.data()[0];
                send(*x, Tensor::full(self.value(*x).shape(), v));
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: BTreeMap<String, Tensor>,
}

impl Gradients {
    /// Gradient of a named parameter (zeros if it did not reach the loss).
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.params
    }

    /// Gradient of any node that required one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn sum_gives_ones() {
        let mut t = Tape::new();
        let p = t.param("p", &Tensor::new(vec![3], vec![1.0, -2.0, 5.0]).unwrap());
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.param("p").unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_sum_of_squares_gives_value() {
        let v = Tensor::new(vec![4], vec![0.5, -1.5, 2.0, 3.25]).unwrap();
        let mut t = Tape::new();
        let p = t.param("p", &v);
        let sq = t.mul(p, p).unwrap();
        let s = t.sum(sq);
        let loss = t.scale(s, 0.5);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.param("p").unwrap(), &v);
    }

    #[test]
    fn backward_on_empty_tape_is_state_error() {
        let mut other = Tape::new();
        let v = other.constant(Tensor::scalar(1.0));
        let empty = Tape::new();
        assert!(matches!(empty.backward(v), Err(TensorError::State(_))));
    }

    #[test]
    fn backward_needs_scalar() {
        let mut t = Tape::new();
        let p = t.param("p", &Tensor::zeros(&[2]));
        assert!(matches!(t.backward(p), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn repeated_param_accumulates() {
        let mut t = Tape::new();
        let a = t.param("w", &Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let b = t.param("w", &Tensor::zeros(&[2]));
        assert_eq!(a, b);
        let s = t.add(a, b).unwrap();
        let l = t.sum(s);
        assert_eq!(t.backward(l).unwrap().param("w").unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn train_batchnorm_rejects_single_sample() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[1, 2, 3]));
        let g = t.constant(Tensor::full(&[2], 1.0));
        let b = t.constant(Tensor::zeros(&[2]));
        assert!(t.batchnorm(x, g, b, BatchNormMode::Train).is_err());
    }

    /// Central-difference check of a small conv → bn → relu → linear → sigmoid → bce graph.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = BTreeMap::new();
        params.insert("k", rand_tensor(&[2, 1, 2, 2, 2], &mut rng));
        params.insert("kb", rand_tensor(&[2], &mut rng));
        params.insert("g", Tensor::from_fn(&[2], |_| rng.random_range(0.5..1.5)));
        params.insert("s", rand_tensor(&[2], &mut rng));
        params.insert("tk", rand_tensor(&[2, 1, 2, 2, 2], &mut rng));
        params.insert("tb", rand_tensor(&[1], &mut rng));
        params.insert("w", rand_tensor(&[3, 16], &mut rng));
        params.insert("b", rand_tensor(&[3], &mut rng));
        let x = rand_tensor(&[3, 1, 4, 4, 4], &mut rng);
        let target = Tensor::from_fn(&[3, 1, 4, 4, 4], |i| (i % 3 == 0) as u8 as f64);
        let lin_target = rand_tensor(&[3, 3], &mut rng);

        let run = |params: &BTreeMap<&str, Tensor>| -> (f64, Option<BTreeMap<String, Tensor>>) {
            let mut t = Tape::new();
            let p = |t: &mut Tape, n: &str| t.param(n, &params[n]);
            let xin = t.constant(x.clone());
            let (k, kb, g, s) = (p(&mut t, "k"), p(&mut t, "kb"), p(&mut t, "g"), p(&mut t, "s"));
            let h = t.conv3d(xin, k, kb, 2, 0).unwrap();
            let (h, _) = t.batchnorm(h, g, s, BatchNormMode::Train).unwrap();
            let h = t.relu(h);
            let (tk, tb) = (p(&mut t, "tk"), p(&mut t, "tb"));
            let up = t.conv3d_transposed(h, tk, tb, 2, 0).unwrap();
            let up = t.sigmoid(up);
            let l1 = t.bce(up, &target).unwrap();
            let flat = t.reshape(h, &[3, 16]).unwrap();
            let (w, b) = (p(&mut t, "w"), p(&mut t, "b"));
            let y = t.linear(flat, w, b).unwrap();
            let l2 = t.squared_error(y, &lin_target).unwrap();
            let loss = t.add(l1, l2).unwrap();
            let value = t.value(loss).item().unwrap();
            (value, Some(t.backward(loss).unwrap().into_params()))
        };

        let (_, grads) = run(&params);
        let grads = grads.unwrap();
        let h = 1e-5;
        let names: Vec<&str> = params.keys().copied().collect();
        for name in names {
            for i in 0..params[name].len() {
                let mut plus = params.clone();
                plus.get_mut(name).unwrap().data_mut()[i] += h;
                let mut minus = params.clone();
                minus.get_mut(name).unwrap().data_mut()[i] -= h;
                let fd = (run(&plus).0 - run(&minus).0) / (2.0 * h);
                let an = grads[name].data()[i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(rel < 1e-4, "{name}[{i}]: analytic {an} vs fd {fd}");
            }
        }
    }
}
