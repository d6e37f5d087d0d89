//! Spectral normalisation by power iteration.
//!
//! A weight tensor `(out_c, in_c, kh, kw)` is viewed as an `out_c × (in_c·kh·kw)`
//! matrix `W`. The state carries the left singular vector estimate `u`; each
//! iteration computes `v = Wᵀu / ‖Wᵀu‖`, `u = Wv / ‖Wv‖` and the estimate
//! `σ̂ = uᵀWv`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Tensor;
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    u: Vec<f32>,
    pub iterations_per_step: usize,
}

impl SpectralState {
    /// A random unit vector of length `rows`, one iteration per step.
    pub fn random(rows: usize, rng: &mut impl Rng) -> Self {
        let raw: Vec<f64> = (0..rows).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        SpectralState {
            u: normalized(&raw).into_iter().map(|v| v as f32).collect(),
            iterations_per_step: 1,
        }
    }

    /// Wraps an existing vector, normalising it to unit length.
    pub fn from_vec(u: Vec<f32>, iterations_per_step: usize) -> Result<Self> {
        if iterations_per_step == 0 {
            return Err(Error::Parameter("iterations_per_step must be positive".into()));
        }
        let raw: Vec<f64> = u.iter().map(|&v| f64::from(v)).collect();
        if raw.iter().map(|v| v * v).sum::<f64>().sqrt() <= NORM_EPS {
            return Err(Error::Degenerate("spectral state vector has zero norm".into()));
        }
        Ok(SpectralState {
            u: normalized(&raw).into_iter().map(|v| v as f32).collect(),
            iterations_per_step,
        })
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations_per_step = iterations.max(1);
        self
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }
}

/// Result of one normalisation call.
#[derive(Debug, Clone)]
pub struct SpectralNormalized {
    pub weight: Tensor,
    pub state: SpectralState,
    /// The singular value estimate the weight was divided by.
    pub sigma: f64,
    /// Set when `W` is (numerically) zero; the weight is then returned unchanged.
    pub degenerate: bool,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / (norm + NORM_EPS)).collect()
}

struct MatrixView<'a> {
    data: &'a [f32],
    rows: usize,
    cols: usize,
}

impl MatrixView<'_> {
    fn of(weight: &Tensor) -> MatrixView<'_> {
        let rows = weight.n();
        let cols = if rows == 0 { 0 } else { weight.len() / rows };
        MatrixView {
            data: weight.data(),
            rows,
            cols,
        }
    }

    fn mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(&w, &x)| f64::from(w) * x)
                    .sum()
            })
            .collect()
    }

    fn mul_transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &ur) in u.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += f64::from(w) * ur;
            }
        }
        out
    }
}

fn check_state(weight: &Tensor, u: &[f32]) -> Result<()> {
    if u.len() != weight.n() {
        return Err(Error::dim("spectral u", weight.n(), u.len()));
    }
    Ok(())
}

fn scale(weight: &Tensor, sigma: f64) -> Tensor {
    weight.map(|w| (f64::from(w) / sigma) as f32)
}

/// Runs `state.iterations_per_step` power-iteration updates and divides the
/// weight by the resulting estimate of its largest singular value.
pub fn spectral_normalize(weight: &Tensor, state: &SpectralState) -> Result<SpectralNormalized> {
    check_state(weight, &state.u)?;
    let mat = MatrixView::of(weight);
    let mut u: Vec<f64> = state.u.iter().map(|&v| f64::from(v)).collect();
    let mut sigma = 0.0;
    for _ in 0..state.iterations_per_step.max(1) {
        let wt_u = mat.mul_transpose(&u);
        if wt_u.iter().map(|x| x * x).sum::<f64>().sqrt() <= NORM_EPS {
            return Ok(SpectralNormalized {
                weight: weight.clone(),
                state: state.clone(),
                sigma: 0.0,
                degenerate: true,
            });
        }
        let v = normalized(&wt_u);
        let wv = mat.mul(&v);
        u = normalized(&wv);
        sigma = u.iter().zip(&wv).map(|(a, b)| a * b).sum();
    }
    if sigma <= NORM_EPS {
        return Ok(SpectralNormalized {
            weight: weight.clone(),
            state: state.clone(),
            sigma,
            degenerate: true,
        });
    }
    Ok(SpectralNormalized {
        weight: scale(weight, sigma),
        state: SpectralState {
            u: u.iter().map(|&v| v as f32).collect(),
            iterations_per_step: state.iterations_per_step,
        },
        sigma,
        degenerate: false,
    })
}

/// The singular value estimate implied by a stored `u` without updating it:
/// `σ̂ = ‖Wᵀu‖`, which equals `uᵀWv` for `v = Wᵀu / ‖Wᵀu‖`.
///
/// Returns `None` for a zero matrix.
pub fn frozen_sigma(weight: &Tensor, state: &SpectralState) -> Result<Option<f64>> {
    check_state(weight, &state.u)?;
    let u: Vec<f64> = state.u.iter().map(|&v| f64::from(v)).collect();
    let wt_u = MatrixView::of(weight).mul_transpose(&u);
    let sigma = wt_u.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((sigma > NORM_EPS).then_some(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn largest_singular_value(t: &Tensor) -> f64 {
        let rows = t.n();
        let cols = t.len() / rows;
        let m = DMatrix::from_row_iterator(rows, cols, t.data().iter().map(|&v| f64::from(v)));
        m.singular_values().max()
    }

    fn matrix(rows: usize, cols: usize, values: &[f32]) -> Tensor {
        Tensor::new([rows, cols, 1, 1], values.to_vec()).unwrap()
    }

    #[test]
    fn identity_is_unchanged() {
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 5] = 1.0;
        }
        let w = matrix(4, 4, &eye);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = SpectralState::random(4, &mut rng).with_iterations(5);
        let out = spectral_normalize(&w, &state).unwrap();
        assert!(!out.degenerate);
        for (a, b) in out.weight.data().iter().zip(&eye) {
            assert!((a - b).abs() < 1e-6);
        }
        let norm: f64 = out.state.u().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn diagonal_three_one() {
        let w = matrix(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = SpectralState::random(2, &mut rng).with_iterations(50);
        let out = spectral_normalize(&w, &state).unwrap();
        let expected = [1.0, 0.0, 0.0, 1.0 / 3.0];
        for (a, b) in out.weight.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-3, "{:?}", out.weight.data());
        }
    }

    #[test]
    fn random_square_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = Tensor::from_fn([8, 8, 1, 1], |_, _, _, _| rng.sample::<f32, _>(StandardNormal));
        let state = SpectralState::random(8, &mut rng).with_iterations(50);
        let out = spectral_normalize(&w, &state).unwrap();
        let sv = largest_singular_value(&out.weight);
        assert!((sv - 1.0).abs() < 1e-3, "largest singular value {sv}");
    }

    #[test]
    fn zero_weight_is_flagged_and_untouched() {
        let w = Tensor::zeros([3, 2, 2, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = SpectralState::random(3, &mut rng);
        let out = spectral_normalize(&w, &state).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.weight, w);
        assert_eq!(frozen_sigma(&w, &state).unwrap(), None);
    }

    #[test]
    fn frozen_sigma_matches_estimate_after_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = Tensor::from_fn([6, 3, 2, 2], |_, _, _, _| rng.sample::<f32, _>(StandardNormal));
        let state = SpectralState::random(6, &mut rng).with_iterations(200);
        let out = spectral_normalize(&w, &state).unwrap();
        let frozen = frozen_sigma(&w, &out.state).unwrap().unwrap();
        let oracle = largest_singular_value(&w);
        assert!((frozen - oracle).abs() / oracle < 1e-5);
    }

    #[test]
    fn state_length_must_match_rows() {
        let w = Tensor::zeros([3, 2, 1, 1]);
        let state = SpectralState::from_vec(vec![1.0, 0.0], 1).unwrap();
        assert!(spectral_normalize(&w, &state).is_err());
    }
}
