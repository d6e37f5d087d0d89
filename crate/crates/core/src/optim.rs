//! Adam with `β1 = 0, β2 = 0.9`, the three-phase learning-rate schedule and
//! a central-difference gradient checker.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.0;
pub const ADAM_BETA2: f64 = 0.9;
pub const ADAM_EPS: f64 = 1e-8;
pub const BATCH_SIZE: usize = 8;
/// Generator learning rates of the three training phases.
pub const GENERATOR_LRS: [f64; 3] = [1e-4, 1e-5, 1e-6];
/// Discriminators train at this fraction of the generator rate.
pub const DISCRIMINATOR_LR_RATIO: f64 = 0.1;

/// Optimizer state for one parameter list. Accumulators are created on the
/// first step with the parameters' shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Parameter(format!("learning rate must be positive, got {lr}")));
        }
        Ok(AdamState {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// First-moment accumulators, one per parameter tensor.
    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    /// Second-moment accumulators, one per parameter tensor.
    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        p.check_same_dims(g)?;
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
        return Err(Error::Shape("parameter shapes changed since the previous step".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (theta, &grad)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let grad = f64::from(grad);
            m[j] = b1 * m[j] + (1.0 - b1) * grad;
            v[j] = b2 * v[j] + (1.0 - b2) * grad * grad;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta = (f64::from(*theta) - state.lr * m_hat / (v_hat.sqrt() + state.eps)) as f32;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub generator_lr: f64,
    pub discriminator_lr: f64,
}

/// The training schedule: three phases with decreasing rates, batch size 8.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    phases: Vec<Phase>,
    pub batch_size: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::from_generator_rates(&GENERATOR_LRS)
    }
}

impl Schedule {
    pub fn from_generator_rates(rates: &[f64]) -> Self {
        Schedule {
            phases: rates
                .iter()
                .map(|&g| Phase {
                    generator_lr: g,
                    discriminator_lr: g * DISCRIMINATOR_LR_RATIO,
                })
                .collect(),
            batch_size: BATCH_SIZE,
        }
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn phase(&self, index: usize) -> Option<Phase> {
        self.phases.get(index).copied()
    }
}

/// Central differences `(f(x + h·eᵢ) − f(x − h·eᵢ)) / (x⁺ − x⁻)` per element,
/// where the divisor is the step actually realised in f32.
pub fn finite_diff_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f32) -> Result<Tensor> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.dims());
    for i in 0..x.len() {
        let orig = x.data()[i];
        let (hi, lo) = (orig + h, orig - h);
        probe.data_mut()[i] = hi;
        let f_hi = f(&probe);
        probe.data_mut()[i] = lo;
        let f_lo = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = ((f_hi - f_lo) / (f64::from(hi) - f64::from(lo))) as f32;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::l1_masked;
    use crate::mask::Mask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f32) -> Tensor {
        Tensor::full([1, 1, 1, 1], v)
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = [scalar(1.0)];
        let mut s = AdamState::new(0.1).unwrap();
        adam_step(&mut p, &[scalar(2.0)], &mut s).unwrap();
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((f64::from(p[0].data()[0]) - expected).abs() < 1e-6);
        assert!((p[0].data()[0] - 0.9).abs() < 1e-6);
        assert_eq!(s.step_count(), 1);
        assert_eq!(s.first_moments()[0][0], 2.0);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let orig = Tensor::from_fn([1, 2, 3, 3], |_, _, _, _| rng.random_range(-1.0..1.0));
        let mut p = [orig.clone()];
        let mut s = AdamState::new(0.01).unwrap();
        for _ in 0..3 {
            adam_step(&mut p, &[Tensor::zeros(orig.dims())], &mut s).unwrap();
        }
        assert_eq!(p[0], orig);
        assert!(s.second_moments()[0].iter().all(|&v| v == 0.0));
        assert_eq!(s.step_count(), 3);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = [scalar(1.0)];
        let mut s = AdamState::new(0.1).unwrap();
        let mut steps = 0;
        while p[0].data()[0].abs() >= 1e-3 {
            let g = scalar(2.0 * p[0].data()[0]);
            adam_step(&mut p, &[g], &mut s).unwrap();
            steps += 1;
            assert!(steps <= 500, "no convergence, theta = {}", p[0].data()[0]);
        }
    }

    #[test]
    fn step_magnitude_bounded_by_lr() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let orig = Tensor::from_fn([1, 1, 4, 4], |_, _, _, _| rng.random_range(-1.0..1.0));
        let g = Tensor::from_fn([1, 1, 4, 4], |_, _, _, _| rng.random_range(-5.0..5.0));
        let mut p = [orig.clone()];
        let mut s = AdamState::new(0.05).unwrap();
        adam_step(&mut p, &[g.clone()], &mut s).unwrap();
        for i in 0..16 {
            let d = f64::from(p[0].data()[i]) - f64::from(orig.data()[i]);
            assert!(d.abs() <= 0.05 * (1.0 + 1e-6));
            assert!(d * f64::from(g.data()[i]) < 0.0);
        }
    }

    #[test]
    fn random_quadratics_decrease_after_burn_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let d = 2 + trial;
            let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut q = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    q[i * d + j] = (0..d).map(|k| a[k * d + i] * a[k * d + j]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
                }
            }
            let f = |x: &[f32]| -> f64 {
                (0..d)
                    .map(|i| (0..d).map(|j| 0.5 * q[i * d + j] * f64::from(x[i]) * f64::from(x[j])).sum::<f64>())
                    .sum()
            };
            let mut p = [Tensor::from_fn([1, d, 1, 1], |_, _, _, _| rng.random_range(-2.0..2.0))];
            let mut s = AdamState::new(1e-3).unwrap();
            let mut prev = f64::INFINITY;
            for step in 0..300 {
                let x = p[0].data().to_vec();
                let g = Tensor::from_fn([1, d, 1, 1], |_, i, _, _| {
                    (0..d).map(|j| q[i * d + j] * f64::from(x[j])).sum::<f64>() as f32
                });
                adam_step(&mut p, &[g], &mut s).unwrap();
                let cur = f(p[0].data());
                if step >= 10 {
                    assert!(cur <= prev, "trial {trial} step {step}: {cur} > {prev}");
                }
                prev = cur;
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = [scalar(1.0)];
        let mut s = AdamState::new(0.1).unwrap();
        assert!(adam_step(&mut p, &[Tensor::zeros([1, 1, 1, 2])], &mut s).is_err());
        assert!(adam_step(&mut p, &[], &mut s).is_err());
        assert!(AdamState::new(0.0).is_err());
    }

    #[test]
    fn schedule_phases() {
        let s = Schedule::default();
        assert_eq!(s.phases().len(), 3);
        assert_eq!(s.batch_size, 8);
        for (ph, g) in s.phases().iter().zip(GENERATOR_LRS) {
            assert_eq!(ph.generator_lr, g);
            assert!((ph.discriminator_lr - g / 10.0).abs() <= 1e-20);
        }
        assert!(s.phase(3).is_none());
    }

    #[test]
    fn finite_differences() {
        let x = Tensor::new([1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let sq = |t: &Tensor| t.data().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>();
        let g = finite_diff_grad(sq, &x, 1e-4).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-5);
        assert!((g.data()[1] - 4.0).abs() < 1e-5);
        let c = finite_diff_grad(|_| 3.5, &x, 1e-3).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
        assert!(finite_diff_grad(sq, &x, 0.0).is_err());
    }

    #[test]
    fn finite_differences_match_l1_subgradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = Tensor::from_fn([1, 2, 4, 4], |_, _, _, _| rng.random_range(0.0..1.0));
        let pred = Tensor::from_fn([1, 2, 4, 4], |n, c, y, x| {
            let off: f32 = rng.random_range(0.05..0.3);
            gt.get(n, c, y, x) + if rng.random_bool(0.5) { off } else { -off }
        });
        let m = Mask::from_fn(4, 4, |y, x| (x + y) % 3 != 0);
        let f = |t: &Tensor| l1_masked(t, &gt, &m).unwrap().value;
        let g = finite_diff_grad(f, &pred, 1e-3).unwrap();
        let denom = (m.count() * 2) as f64;
        for i in 0..pred.len() {
            let sign = (pred.data()[i] - gt.data()[i]).signum() as f64;
            assert!((f64::from(g.data()[i]) - sign / denom).abs() < 1e-4);
        }
    }
}
