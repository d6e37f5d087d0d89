//! Dense `(n, c, h, w)` tensors of `f32` and the kernels the networks and
//! losses are built from.
//!
//! Every operation allocates a fresh output; inputs are never aliased or
//! mutated.

mod activation;
mod conv;
mod gemm;
mod gram;
mod norm;
mod resize;
mod spectral;

pub use activation::{apply_activation, Activation};
pub use conv::{conv2d, conv_output_len, conv_transpose2d, transpose_output_len, ConvParams, PaddingMode};
pub use gram::gram_matrix;
pub use norm::instance_norm;
pub use resize::bilinear_resize;
pub use spectral::{frozen_sigma, spectral_normalize, SpectralNormalized, SpectralState};

use std::fmt;

use crate::error::{Error, Result};

/// Rank-4 tensor stored as one contiguous row-major buffer, batch-major,
/// then channel, row and column.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.dims;
        write!(f, "Tensor({n}x{c}x{h}x{w})")
    }
}

impl Tensor {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "buffer of {} values cannot back a {:?} tensor ({} values)",
                data.len(),
                dims,
                expected
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: [usize; 4], value: f32) -> Self {
        Tensor {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every position.
    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let [n, c, h, w] = dims;
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(b, ch, y, x));
                    }
                }
            }
        }
        Tensor { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn c(&self) -> usize {
        self.dims[1]
    }

    pub fn h(&self) -> usize {
        self.dims[2]
    }

    pub fn w(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.dims;
        ((n * cs + c) * hs + y) * ws + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f32) {
        let i = self.index(n, c, y, x);
        self.data[i] = value;
    }

    /// The `h * w` values of one (sample, channel) plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let size = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * size;
        &self.data[start..start + size]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let size = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * size;
        &mut self.data[start..start + size]
    }

    /// Reinterprets the buffer under new dimensions with the same element count.
    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        Tensor::new(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.check_same_dims(other)?;
        Ok(Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_dims(&self, other: &Tensor) -> Result<()> {
        const AXES: [&str; 4] = ["batch", "channel", "height", "width"];
        for (axis, (&a, &b)) in AXES.iter().zip(self.dims.iter().zip(&other.dims)) {
            if a != b {
                return Err(Error::dim(axis, a, b));
            }
        }
        Ok(())
    }

    /// Stacks tensors along the channel axis. All parts must share batch and spatial dims.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("concat_channels needs at least one tensor".into()))?;
        let [n, _, h, w] = first.dims;
        for p in parts {
            if p.n() != n {
                return Err(Error::dim("batch", n, p.n()));
            }
            if p.h() != h {
                return Err(Error::dim("height", h, p.h()));
            }
            if p.w() != w {
                return Err(Error::dim("width", w, p.w()));
            }
        }
        let c_total: usize = parts.iter().map(|p| p.c()).sum();
        let mut data = Vec::with_capacity(n * c_total * h * w);
        for b in 0..n {
            for p in parts {
                let chunk = p.c() * h * w;
                data.extend_from_slice(&p.data[b * chunk..(b + 1) * chunk]);
            }
        }
        Ok(Tensor {
            dims: [n, c_total, h, w],
            data,
        })
    }

    /// Copies out a contiguous range of channels.
    pub fn channels(&self, range: std::ops::Range<usize>) -> Result<Tensor> {
        if range.end > self.c() || range.start >= range.end {
            return Err(Error::Shape(format!(
                "channel range {:?} outside 0..{}",
                range,
                self.c()
            )));
        }
        let [n, c, h, w] = self.dims;
        let plane = h * w;
        let mut data = Vec::with_capacity(n * range.len() * plane);
        for b in 0..n {
            let start = (b * c + range.start) * plane;
            let end = (b * c + range.end) * plane;
            data.extend_from_slice(&self.data[start..end]);
        }
        Ok(Tensor {
            dims: [n, range.len(), h, w],
            data,
        })
    }

    /// Sum of absolute values, accumulated in `f64`.
    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v).abs()).sum()
    }

    /// Flat inner product, accumulated in `f64`.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
