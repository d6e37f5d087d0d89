//! Binary inpainting masks: generation, dihedral augmentation, coverage
//! buckets and PNG ingestion.
//!
//! Convention: `1` marks a missing pixel, `0` known background.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    h: usize,
    w: usize,
    values: Vec<u8>,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({}x{}, coverage {:.4})", self.h, self.w, self.coverage())
    }
}

impl Mask {
    pub fn zeros(h: usize, w: usize) -> Self {
        Mask {
            h,
            w,
            values: vec![0; h * w],
        }
    }

    pub fn ones(h: usize, w: usize) -> Self {
        Mask {
            h,
            w,
            values: vec![1; h * w],
        }
    }

    pub fn from_values(h: usize, w: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::Shape(format!("{} values cannot form a {h}x{w} mask", values.len())));
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Parameter(format!("mask values must be 0 or 1, found {v}")));
        }
        Ok(Mask { h, w, values })
    }

    /// Builds a mask from `f(y, x)`, true meaning missing.
    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let values = (0..h * w).map(|i| u8::from(f(i / w, i % w))).collect();
        Mask { h, w, values }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.values[y * self.w + x]
    }

    /// Number of missing pixels.
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// Fraction of missing pixels.
    pub fn coverage(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.values.len() as f64
        }
    }

    /// `1 − M` as `f32`, the weight applied to known content.
    pub fn keep_weights(&self) -> Vec<f32> {
        self.values.iter().map(|&v| 1.0 - f32::from(v)).collect()
    }

    /// The mask as a `1×1×h×w` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 1, self.h, self.w], self.values.iter().map(|&v| f32::from(v)).collect())
            .expect("mask buffer matches dims")
    }

    /// Quarter turn clockwise: `(y, x) ↦ (x, h − 1 − y)`.
    pub fn rotate90(&self) -> Mask {
        let (h, w) = (self.h, self.w);
        let mut values = vec![0; h * w];
        for y in 0..h {
            for x in 0..w {
                // new dims are w × h
                values[x * h + (h - 1 - y)] = self.values[y * w + x];
            }
        }
        Mask { h: w, w: h, values }
    }

    /// Mirror across the vertical axis.
    pub fn flip_horizontal(&self) -> Mask {
        let mut values = self.values.clone();
        for row in values.chunks_mut(self.w.max(1)) {
            row.reverse();
        }
        Mask {
            h: self.h,
            w: self.w,
            values,
        }
    }

    /// Writes the mask as an 8-bit grayscale PNG (missing = 255).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf: Vec<u8> = self.values.iter().map(|&v| v * 255).collect();
        image::save_buffer(path, &buf, self.w as u32, self.h as u32, image::ExtendedColorType::L8).map_err(|source| {
            Error::Image {
                path: path.to_path_buf(),
                source,
            }
        })
    }
}

/// Where a regular square is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// The square's top-left corner is centred (floor division).
    #[default]
    Centered,
    /// Uniform over all positions that keep the square inside the image.
    Random,
}

fn square_side(h: usize, w: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Parameter(format!("mask ratio must lie in (0, 1], got {ratio}")));
    }
    let side = (ratio * (h * w) as f64).sqrt().round() as usize;
    if side == 0 {
        return Err(Error::Parameter(format!("ratio {ratio} gives an empty square on a {h}x{w} image")));
    }
    if side > h.min(w) {
        return Err(Error::Parameter(format!(
            "a {side}x{side} square (ratio {ratio}) does not fit in {h}x{w}"
        )));
    }
    Ok(side)
}

fn square_at(h: usize, w: usize, side: usize, top: usize, left: usize) -> Mask {
    Mask::from_fn(h, w, |y, x| (top..top + side).contains(&y) && (left..left + side).contains(&x))
}

/// A `side × side` square with `side = round(sqrt(ratio·h·w))`, placed
/// uniformly at random (fully inside the image) from `seed`.
pub fn regular_mask(h: usize, w: usize, ratio: f64, seed: u64) -> Result<Mask> {
    let side = square_side(h, w, ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = rng.random_range(0..=h - side);
    let left = rng.random_range(0..=w - side);
    Ok(square_at(h, w, side, top, left))
}

/// The same square as [`regular_mask`], centred.
pub fn centered_mask(h: usize, w: usize, ratio: f64) -> Result<Mask> {
    let side = square_side(h, w, ratio)?;
    Ok(square_at(h, w, side, (h - side) / 2, (w - side) / 2))
}

pub fn square_mask(h: usize, w: usize, ratio: f64, placement: Placement, seed: u64) -> Result<Mask> {
    match placement {
        Placement::Centered => centered_mask(h, w, ratio),
        Placement::Random => regular_mask(h, w, ratio, seed),
    }
}

/// The eight dihedral variants: rotations by 0°, 90°, 180°, 270°, then the
/// same four of the horizontally flipped mask.
pub fn augment_mask(m: &Mask) -> Result<Vec<Mask>> {
    if m.h != m.w {
        return Err(Error::Parameter(format!("augmentation needs a square mask, got {}x{}", m.h, m.w)));
    }
    let mut out = Vec::with_capacity(8);
    for base in [m.clone(), m.flip_horizontal()] {
        let mut cur = base;
        for _ in 0..4 {
            let next = cur.rotate90();
            out.push(cur);
            cur = next;
        }
    }
    Ok(out)
}

/// A 10 %-wide coverage bucket `[k/10, (k+1)/10)`, with 100 % folded into the top bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoverageBucket(u8);

impl CoverageBucket {
    pub const COUNT: u8 = 10;

    pub fn new(index: u8) -> Result<Self> {
        if index >= Self::COUNT {
            return Err(Error::Parameter(format!("bucket index {index} out of range")));
        }
        Ok(CoverageBucket(index))
    }

    pub fn from_coverage(coverage: f64) -> Self {
        let k = (coverage.clamp(0.0, 1.0) * 10.0).floor() as u8;
        CoverageBucket(k.min(Self::COUNT - 1))
    }

    /// Exact integer bucketing of `missing / total`.
    pub fn from_counts(missing: usize, total: usize) -> Self {
        if total == 0 {
            return CoverageBucket(0);
        }
        let k = (10 * missing / total) as u8;
        CoverageBucket(k.min(Self::COUNT - 1))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Buckets 0–10 % through 50–60 %, the range masks are usually reported over.
    pub fn in_reporting_range(self) -> bool {
        self.0 <= 5
    }

    pub fn parse(label: &str) -> Option<Self> {
        (0..Self::COUNT).map(CoverageBucket).find(|b| b.to_string() == label)
    }
}

impl fmt::Display for CoverageBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = u32::from(self.0) * 10;
        write!(f, "{}-{}%", lo, lo + 10)
    }
}

pub fn coverage_class(m: &Mask) -> CoverageBucket {
    CoverageBucket::from_counts(m.count(), m.values.len())
}

/// Reads a raster mask; pixels with luma ≥ 128 are missing.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let values = img.into_raw().into_iter().map(|v| u8::from(v >= 128)).collect();
    Mask::from_values(h as usize, w as usize, values)
}
