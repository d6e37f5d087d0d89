use super::Tensor;
use crate::error::{Error, Result};

/// Per-(sample, channel) standardisation over spatial positions using the
/// population variance, followed by the affine map `gamma · x̂ + beta`.
pub fn instance_norm(input: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor> {
    let [n, c, h, w] = input.dims();
    if gamma.len() != c {
        return Err(Error::dim("gamma", c, gamma.len()));
    }
    if beta.len() != c {
        return Err(Error::dim("beta", c, beta.len()));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let count = (h * w) as f64;
    let mut out = Tensor::zeros(input.dims());
    if count == 0.0 {
        return Ok(out);
    }
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let mean = src.iter().map(|&v| f64::from(v)).sum::<f64>() / count;
            let var = src
                .iter()
                .map(|&v| {
                    let d = f64::from(v) - mean;
                    d * d
                })
                .sum::<f64>()
                / count;
            let scale = f64::from(gamma[ch]) / (var + f64::from(eps)).sqrt();
            let shift = f64::from(beta[ch]);
            for (o, &v) in out.plane_mut(b, ch).iter_mut().zip(src) {
                *o = ((f64::from(v) - mean) * scale + shift) as f32;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_channel_maps_to_zero() {
        let t = Tensor::full([1, 2, 3, 3], 4.5);
        let out = instance_norm(&t, &[1.0, 1.0], &[0.0, 0.0], 1e-5).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_values_standardise_to_plus_minus_one() {
        let t = Tensor::new([1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        let out = instance_norm(&t, &[1.0], &[0.0], 1e-12).unwrap();
        assert!((out.data()[0] + 1.0).abs() < 1e-6);
        assert!((out.data()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn affine_shift_of_input_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::from_fn([2, 3, 6, 5], |_, _, _, _| rng.random_range(-1.0f32..1.0));
        let y = x.map(|v| 5.0 * v - 2.0);
        let g = [1.0; 3];
        let bz = [0.0; 3];
        let a = instance_norm(&x, &g, &bz, 1e-12).unwrap();
        let b = instance_norm(&y, &g, &bz, 1e-12).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-4);
        }
    }

    #[test]
    fn gamma_beta_applied_after_standardisation() {
        let t = Tensor::new([1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        let out = instance_norm(&t, &[2.0], &[0.5], 1e-12).unwrap();
        assert!((out.data()[0] + 1.5).abs() < 1e-6);
        assert!((out.data()[1] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn rejects_wrong_affine_lengths() {
        let t = Tensor::zeros([1, 2, 2, 2]);
        assert!(instance_norm(&t, &[1.0], &[0.0, 0.0], 1e-5).is_err());
        assert!(instance_norm(&t, &[1.0, 1.0], &[0.0, 0.0], 0.0).is_err());
    }
}
