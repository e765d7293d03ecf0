//! Dense `f64` tensors, 3D convolution kernels, a reverse-mode tape and Adam.
//!
//! All arithmetic is 64-bit and every reduction runs in a fixed order, so
//! identical inputs give bit-identical outputs.

mod adam;
mod checkpoint;
pub mod kernels;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{is_buffer_name, ParameterSet};
pub use tape::{BatchNormMode, BatchStats, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("state error: {0}")]
    State(String),
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major dense tensor of 64-bit reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Dimension(format!(
                "shape {shape:?} has a zero-sized dimension"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Dimension(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(TensorError::Dimension(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::Dimension(format!(
                "{what}: shape {:?} does not match {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(prediction: &Tensor, target: &Tensor) -> Result<f64> {
    prediction.check_same_shape(target, "bce_loss")?;
    Ok(kernels::bce(prediction.data(), target.data()))
}

/// Single-sample or batched 3D cross-correlation.
///
/// `input` is `[C, D, H, W]` or `[B, C, D, H, W]`; `kernel` is
/// `[C_out, C_in, k, k, k]`.
pub fn conv3d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (batched, geom) = conv_input_geometry(input, kernel, bias, stride, padding, false)?;
    let out = kernels::conv3d(input.data(), kernel.data(), bias.data(), &geom, batched.0);
    let shape = output_shape(batched, geom.small_ch, geom.small);
    Tensor::new(shape, out)
}

/// Transposed 3D convolution (the adjoint of [`conv3d_forward`] plus bias).
///
/// `kernel` is `[C_in, C_out, k, k, k]`; output spatial size is
/// `(in - 1) * stride - 2 * padding + k`.
pub fn conv3d_transposed_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (batched, geom) = conv_input_geometry(input, kernel, bias, stride, padding, true)?;
    let out = kernels::conv3d_transposed(input.data(), kernel.data(), bias.data(), &geom, batched.0);
    let shape = output_shape(batched, geom.big_ch, geom.big);
    Tensor::new(shape, out)
}

fn output_shape(batched: (usize, bool), channels: usize, spatial: [usize; 3]) -> Vec<usize> {
    let mut shape = Vec::with_capacity(5);
    if batched.1 {
        shape.push(batched.0);
    }
    shape.push(channels);
    shape.extend_from_slice(&spatial);
    shape
}

/// Validates a (possibly unbatched) conv input and returns `((batch, was_batched), geometry)`.
pub(crate) fn conv_input_geometry(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    transposed: bool,
) -> Result<((usize, bool), kernels::ConvGeometry)> {
    let (batch, batched, dims) = match input.shape() {
        [c, d, h, w] => (1, false, [*c, *d, *h, *w]),
        [b, c, d, h, w] => (*b, true, [*c, *d, *h, *w]),
        s => {
            return Err(TensorError::Dimension(format!(
                "conv input must be rank 4 or 5, got {s:?}"
            )))
        }
    };
    let geom = kernels::ConvGeometry::from_shapes(
        dims,
        kernel.shape(),
        bias.shape(),
        stride,
        padding,
        transposed,
    )?;
    Ok(((batch, batched), geom))
}
