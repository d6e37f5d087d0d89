//! Gaussian fits of feature embeddings and the Fréchet distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::losses::ActivationStack;
use crate::tensor::{apply_activation, conv2d, Activation, ConvParams, PaddingMode, Tensor};

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Shape(format!(
                "covariance is {}x{} for a {d}-dimensional mean",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        Ok(GaussianStats { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Sample mean and unbiased (n − 1) covariance of the rows of `features`.
pub fn fit_gaussian(features: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Parameter(format!("a Gaussian fit needs at least 2 samples, got {n}")));
    }
    let d = features[0].len();
    if let Some(row) = features.iter().find(|r| r.len() != d) {
        return Err(Error::dim("feature", d, row.len()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mu = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mu[j]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let sigma = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mu, sigma })
}

fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa^½ Σb Σa^½)^½)`, clamped at zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "cannot compare {}- and {}-dimensional Gaussians",
            a.dim(),
            b.dim()
        )));
    }
    let diff = (&a.mu - &b.mu).norm_squared();
    let root_a = symmetric_sqrt(&a.sigma);
    let inner = &root_a * &b.sigma * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((diff + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_cross).max(0.0))
}

/// Maps image batches to feature vectors (for distribution metrics) and to
/// intermediate activations (for perceptual and style losses).
pub trait FeatureExtractor {
    /// Length of each feature vector.
    fn dim(&self) -> usize;

    fn activations(&self, images: &Tensor) -> Result<ActivationStack>;

    /// One row per image: the spatial mean of the deepest activation.
    fn features(&self, images: &Tensor) -> Result<Vec<Vec<f64>>> {
        let stack = self.activations(images)?;
        let last = &stack
            .entries()
            .last()
            .ok_or_else(|| Error::Shape("extractor produced no activations".into()))?
            .tensor;
        let [n, c, h, w] = last.dims();
        Ok((0..n)
            .map(|i| {
                (0..c)
                    .map(|j| last.plane(i, j).iter().map(|&v| f64::from(v)).sum::<f64>() / (h * w) as f64)
                    .collect()
            })
            .collect())
    }
}

/// A fixed-seed stack of three stride-2 3×3 convolutions with ReLU
/// (3 → 16 → 32 → 64 channels), standing in for a pretrained classifier.
#[derive(Debug, Clone)]
pub struct SurrogateExtractor {
    layers: Vec<(Tensor, Vec<f32>)>,
}

const SURROGATE_WIDTHS: [usize; 4] = [3, 16, 32, 64];

impl SurrogateExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = SURROGATE_WIDTHS
            .windows(2)
            .map(|w| {
                let std = (2.0 / (w[0] * 9) as f32).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let kernel = Tensor::from_fn([w[1], w[0], 3, 3], |_, _, _, _| normal.sample(&mut rng));
                (kernel, vec![0.0; w[1]])
            })
            .collect();
        SurrogateExtractor { layers }
    }
}

impl Default for SurrogateExtractor {
    fn default() -> Self {
        SurrogateExtractor::new(0)
    }
}

impl FeatureExtractor for SurrogateExtractor {
    fn dim(&self) -> usize {
        SURROGATE_WIDTHS[SURROGATE_WIDTHS.len() - 1]
    }

    fn activations(&self, images: &Tensor) -> Result<ActivationStack> {
        if images.c() != SURROGATE_WIDTHS[0] {
            return Err(Error::dim("channel", SURROGATE_WIDTHS[0], images.c()));
        }
        let mut stack = ActivationStack::default();
        let mut x = images.clone();
        for (i, (kernel, bias)) in self.layers.iter().enumerate() {
            let params = ConvParams::new(kernel).bias(bias).stride(2).padding(1, PaddingMode::Zero);
            x = apply_activation(&conv2d(&x, &params)?, Activation::Relu);
            stack.push(format!("relu{}", i + 1), x.clone());
        }
        Ok(stack)
    }
}
