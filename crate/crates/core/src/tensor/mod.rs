//! Dense NCHW tensors and a reverse-mode tape covering the operations the
//! segmentation network needs.

mod gradcheck;
pub mod kernels;
mod tape;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

use crate::error::{shape_err, Result};

pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use tape::{Op, Tape, Var};

/// Floating-point element type of a tape. Training runs in `f32`; gradient
/// checks run in `f64`.
pub trait Real: Float + Default + Debug + Sum + Send + Sync + 'static {
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

/// Dense row-major array of rank at most 4 with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.len() > 4 {
            return Err(shape_err("tensor", format!("rank {} exceeds 4", shape.len())));
        }
        if shape.contains(&0) && !data.is_empty() {
            return Err(shape_err("tensor", format!("zero extent in {shape:?} with data")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape: shape.to_vec(), data, grad: None, requires_grad: false })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); n], grad: None, requires_grad: false }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![v; n], grad: None, requires_grad: false }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: Vec::new(), data: vec![v], grad: None, requires_grad: false }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn with_requires_grad(mut self, on: bool) -> Self {
        self.requires_grad = on;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, g: Vec<T>) {
        debug_assert_eq!(g.len(), self.data.len());
        self.grad = Some(g);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(shape_err("item", format!("tensor of shape {:?} is not scalar", self.shape)));
        }
        Ok(self.data[0])
    }

    /// Shape as `(N, C, H, W)`; errors unless rank is exactly 4.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(shape_err(op, format!("expected rank-4 NCHW tensor, got {:?}", self.shape))),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            grad: self.grad.as_ref().map(|g| g.iter().map(|v| U::from_f64(v.as_f64())).collect()),
            requires_grad: self.requires_grad,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channels `[start, start + len)` of an NCHW tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let (n, c, h, w) = self.dims4("slice_channels")?;
        if start + len > c {
            return Err(shape_err(
                "slice_channels",
                format!("range {start}..{} exceeds {c} channels", start + len),
            ));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * len * plane);
        for b in 0..n {
            let off = (b * c + start) * plane;
            data.extend_from_slice(&self.data[off..off + len * plane]);
        }
        Ok(Self { shape: vec![n, len, h, w], data, grad: None, requires_grad: false })
    }

    /// Sample `n` of an NCHW tensor, keeping a batch axis of 1.
    pub fn batch_item(&self, n: usize) -> Result<Self> {
        let (bn, c, h, w) = self.dims4("batch_item")?;
        if n >= bn {
            return Err(shape_err("batch_item", format!("index {n} out of {bn}")));
        }
        let len = c * h * w;
        Ok(Self {
            shape: vec![1, c, h, w],
            data: self.data[n * len..(n + 1) * len].to_vec(),
            grad: None,
            requires_grad: false,
        })
    }

    /// Stack rank-4 tensors with identical `(C, H, W)` along the batch axis.
    pub fn stack_batch(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or_else(|| shape_err("stack_batch", "no tensors"))?;
        let (_, c, h, w) = first.dims4("stack_batch")?;
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            let (tn, tc, th, tw) = t.dims4("stack_batch")?;
            if (tc, th, tw) != (c, h, w) {
                return Err(shape_err(
                    "stack_batch",
                    format!("{:?} does not match {:?}", t.shape, first.shape),
                ));
            }
            n += tn;
            data.extend_from_slice(&t.data);
        }
        Ok(Self { shape: vec![n, c, h, w], data, grad: None, requires_grad: false })
    }
}
