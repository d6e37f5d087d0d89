//! Grayscale conversion, Canny edge detection and mask composition.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Gaussian width and hysteresis ratios for [`canny`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams {
    /// Standard deviation of the smoothing Gaussian in pixels. Zero disables smoothing.
    pub sigma: f32,
    /// Weak threshold as a fraction of the largest gradient magnitude.
    pub low_ratio: f32,
    /// Strong threshold as a fraction of the largest gradient magnitude.
    pub high_ratio: f32,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 2.0,
            low_ratio: 0.1,
            high_ratio: 0.2,
        }
    }
}

impl CannyParams {
    pub fn with_sigma(sigma: f32) -> Self {
        CannyParams {
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be a non-negative number, got {}", self.sigma)));
        }
        let in_unit = |r: f32| r > 0.0 && r < 1.0;
        if !in_unit(self.low_ratio) || !in_unit(self.high_ratio) || self.low_ratio >= self.high_ratio {
            return Err(Error::Parameter(format!(
                "hysteresis ratios must satisfy 0 < low < high < 1, got low {} high {}",
                self.low_ratio, self.high_ratio
            )));
        }
        Ok(())
    }
}

/// A single-channel map of edge strengths in `[0, 1]`.
///
/// Canny output is binary; generator output is a probability map until it
/// is thresholded with [`EdgeMap::binarize`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    h: usize,
    w: usize,
    values: Vec<f32>,
    binary: bool,
}

impl EdgeMap {
    pub fn empty(h: usize, w: usize) -> Self {
        EdgeMap {
            h,
            w,
            values: vec![0.0; h * w],
            binary: true,
        }
    }

    /// Wraps values in `[0, 1]`; the binary flag is derived from the contents.
    pub fn from_values(h: usize, w: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::Shape(format!("{} values cannot form a {h}x{w} edge map", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("edge strength {v} outside [0, 1]")));
        }
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(EdgeMap { h, w, values, binary })
    }

    /// Takes plane `(0, 0)` of a single-channel tensor, clamping into `[0, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.n() != 1 || t.c() != 1 {
            return Err(Error::Shape(format!("edge map needs a 1x1xHxW tensor, got {:?}", t.dims())));
        }
        let values = t.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::from_values(t.h(), t.w(), values)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 1, self.h, self.w], self.values.clone()).expect("edge map buffer matches dims")
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.w + x]
    }

    /// `v ≥ threshold → 1`, else 0.
    pub fn binarize(&self, threshold: f32) -> EdgeMap {
        EdgeMap {
            h: self.h,
            w: self.w,
            values: self.values.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect(),
            binary: true,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    /// Fraction of pixels that are edges (non-zero).
    pub fn density(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.edge_count() as f64 / self.values.len() as f64
        }
    }
}

/// BT.601 luma of an RGB tensor: `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(rgb: &Tensor) -> Result<Tensor> {
    if rgb.c() != 3 {
        return Err(Error::dim("channel", 3, rgb.c()));
    }
    let [n, _, h, w] = rgb.dims();
    let mut out = Tensor::zeros([n, 1, h, w]);
    for b in 0..n {
        let (r, g, bl) = (rgb.plane(b, 0), rgb.plane(b, 1), rgb.plane(b, 2));
        for (i, o) in out.plane_mut(b, 0).iter_mut().enumerate() {
            *o = LUMA_WEIGHTS[0] * r[i] + LUMA_WEIGHTS[1] * g[i] + LUMA_WEIGHTS[2] * bl[i];
        }
    }
    Ok(out)
}

/// Normalised 1-D Gaussian with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * f64::from(sigma)).ceil() as isize;
    let s2 = 2.0 * f64::from(sigma).powi(2);
    let raw: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / s2).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

/// Mirror index into `0..n` without repeating the border sample; folds
/// repeatedly for offsets wider than the image.
#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

fn blur(plane: &[f32], h: usize, w: usize, sigma: f32) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return plane.to_vec();
    }
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f32; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += f64::from(kv) * f64::from(row[reflect_index(x as isize + k as isize - r, w)]);
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += f64::from(kv) * f64::from(tmp[reflect_index(y as isize + k as isize - r, h) * w + x]);
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

/// Sobel derivatives (x to the right, y downwards) with reflected borders.
fn sobel(plane: &[f32], h: usize, w: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |y: isize, x: isize| plane[reflect_index(y, h) * w + reflect_index(x, w)];
    let mut gx = vec![0.0f32; h * w];
    let mut gy = vec![0.0f32; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            gy[i] = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
        }
    }
    (gx, gy)
}

/// Neighbour offsets `(dy, dx)` along the gradient direction quantised to
/// 0°, 45°, 90° or 135°.
pub(crate) fn gradient_neighbours(gx: f32, gy: f32) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (0, 1)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}

fn non_maximum_suppression(mag: &[f32], gx: &[f32], gy: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; h * w];
    let at = |y: isize, x: isize| -> f32 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (dy, dx) = gradient_neighbours(gx[i], gy[i]);
            let ahead = at(y as isize + dy, x as isize + dx);
            let behind = at(y as isize - dy, x as isize - dx);
            // Strict on one side so a two-pixel plateau keeps exactly one pixel.
            if m > ahead && m >= behind {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(thin: &[f32], h: usize, w: usize, low: f32, high: f32) -> Vec<f32> {
    let mut out = vec![0.0f32; h * w];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m > 0.0 && m >= high {
            out[i] = 1.0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] > 0.0 && thin[j] >= low {
                    out[j] = 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    out
}

/// Canny edge detection on plane `(0, 0)` of a grayscale tensor.
///
/// Gaussian blur (reflect borders) → Sobel → four-direction non-maximum
/// suppression → double threshold at `(low, high)·max|∇|` → hysteresis with
/// 8-connectivity. A constant image yields an empty map.
pub fn canny(gray: &Tensor, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    if gray.c() != 1 {
        return Err(Error::dim("channel", 1, gray.c()));
    }
    if gray.n() != 1 {
        return Err(Error::dim("batch", 1, gray.n()));
    }
    let (h, w) = (gray.h(), gray.w());
    if h == 0 || w == 0 {
        return Ok(EdgeMap::empty(h, w));
    }
    let smooth = blur(gray.plane(0, 0), h, w, params.sigma);
    let (gx, gy) = sobel(&smooth, h, w);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = mag.iter().copied().fold(0.0f32, f32::max);
    // Relative to the unit intensity range, anything below this is round-off.
    if max <= 1e-6 {
        return Ok(EdgeMap::empty(h, w));
    }
    let thin = non_maximum_suppression(&mag, &gx, &gy, h, w);
    let values = hysteresis(&thin, h, w, params.low_ratio * max, params.high_ratio * max);
    Ok(EdgeMap {
        h,
        w,
        values,
        binary: true,
    })
}

/// Types that can have the missing region of a [`Mask`] zeroed out.
pub trait Maskable: Sized {
    /// `x ⊙ (1 − M)`, broadcast over batch and channels.
    fn mask_out(&self, mask: &Mask) -> Result<Self>;
}

fn check_spatial(h: usize, w: usize, mask: &Mask) -> Result<()> {
    if mask.h() != h {
        return Err(Error::dim("height", h, mask.h()));
    }
    if mask.w() != w {
        return Err(Error::dim("width", w, mask.w()));
    }
    Ok(())
}

impl Maskable for Tensor {
    fn mask_out(&self, mask: &Mask) -> Result<Self> {
        check_spatial(self.h(), self.w(), mask)?;
        let keep = mask.keep_weights();
        let mut out = self.clone();
        for b in 0..self.n() {
            for c in 0..self.c() {
                for (v, &k) in out.plane_mut(b, c).iter_mut().zip(&keep) {
                    *v *= k;
                }
            }
        }
        Ok(out)
    }
}

impl Maskable for EdgeMap {
    fn mask_out(&self, mask: &Mask) -> Result<Self> {
        check_spatial(self.h, self.w, mask)?;
        let values = self
            .values
            .iter()
            .zip(mask.keep_weights())
            .map(|(&v, k)| v * k)
            .collect();
        Ok(EdgeMap {
            h: self.h,
            w: self.w,
            values,
            binary: self.binary,
        })
    }
}

pub fn mask_out<T: Maskable>(x: &T, mask: &Mask) -> Result<T> {
    x.mask_out(mask)
}

/// `C_comp = C_gt ⊙ (1 − M) + C_pred ⊙ M`.
pub fn composite_edges(c_gt: &EdgeMap, c_pred: &EdgeMap, mask: &Mask) -> Result<EdgeMap> {
    check_spatial(c_gt.h, c_gt.w, mask)?;
    check_spatial(c_pred.h, c_pred.w, mask)?;
    let values = c_gt
        .values
        .iter()
        .zip(&c_pred.values)
        .zip(mask.values())
        .map(|((&g, &p), &m)| {
            let m = f32::from(m);
            g * (1.0 - m) + p * m
        })
        .collect();
    Ok(EdgeMap {
        h: c_gt.h,
        w: c_gt.w,
        values,
        binary: c_gt.binary && c_pred.binary,
    })
}

/// `I_comp = I_gt ⊙ (1 − M) + I_pred ⊙ M`, broadcast over batch and channels.
pub fn composite_image(i_gt: &Tensor, i_pred: &Tensor, mask: &Mask) -> Result<Tensor> {
    i_gt.check_same_dims(i_pred)?;
    if i_gt.c() != 3 {
        return Err(Error::dim("channel", 3, i_gt.c()));
    }
    check_spatial(i_gt.h(), i_gt.w(), mask)?;
    let mut out = Tensor::zeros(i_gt.dims());
    for b in 0..i_gt.n() {
        for c in 0..3 {
            let (g, p) = (i_gt.plane(b, c), i_pred.plane(b, c));
            for (i, o) in out.plane_mut(b, c).iter_mut().enumerate() {
                let m = f32::from(mask.values()[i]);
                *o = g[i] * (1.0 - m) + p[i] * m;
            }
        }
    }
    Ok(out)
}
