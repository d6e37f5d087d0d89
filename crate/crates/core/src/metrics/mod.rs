//! Image quality, edge accuracy and distribution metrics.

mod fid;
mod report;

pub use fid::{fit_gaussian, frechet_distance, FeatureExtractor, GaussianStats, SurrogateExtractor};
pub use report::{aggregate, BucketAggregate, MetricRecord, MetricsReport, CSV_HEADER};

use crate::edge::EdgeMap;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;
use crate::Flagged;

/// Value returned by [`psnr`] for identical images.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// `‖pred − gt‖₁ / ‖gt‖₁` as a fraction.
pub fn relative_l1(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    pred.check_same_dims(gt)?;
    let denom = gt.abs_sum();
    if denom == 0.0 {
        return Err(Error::Degenerate("relative l1 of an all-zero reference".into()));
    }
    let num: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (f64::from(p) - f64::from(g)).abs())
        .sum();
    Ok(num / denom)
}

pub fn mse(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    pred.check_same_dims(gt)?;
    if gt.is_empty() {
        return Err(Error::Shape("mean squared error of empty tensors".into()));
    }
    let s: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (f64::from(p) - f64::from(g)).powi(2))
        .sum();
    Ok(s / gt.len() as f64)
}

/// `10·log10(peak² / MSE)` in dB, capped at [`PSNR_CAP`].
pub fn psnr(pred: &Tensor, gt: &Tensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Parameter(format!("psnr peak must be positive, got {peak}")));
    }
    let e = mse(pred, gt)?;
    if e == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / e).log10()).min(PSNR_CAP))
}

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable valid-region filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, kv) in k.iter().enumerate() {
            let src = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += kv * s;
            }
        }
    }
    out
}

fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize, peak: f64, k: &[f64; SSIM_WINDOW]) -> f64 {
    let a: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let b: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let [mu_a, mu_b, e_aa, e_bb, e_ab] = [&a, &b, &aa, &bb, &ab].map(|p| filter_valid(p, h, w, k));
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / mu_a.len() as f64
}

/// Mean SSIM with peak 1.
pub fn ssim(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    ssim_with_peak(pred, gt, 1.0)
}

/// Mean local SSIM over an 11×11 Gaussian window (σ = 1.5), evaluated only
/// where the window fits and averaged over every channel of every image.
pub fn ssim_with_peak(pred: &Tensor, gt: &Tensor, peak: f64) -> Result<f64> {
    pred.check_same_dims(gt)?;
    if !(peak > 0.0) {
        return Err(Error::Parameter(format!("ssim peak must be positive, got {peak}")));
    }
    let [n, c, h, w] = gt.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Parameter(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    if n * c == 0 {
        return Err(Error::Shape("ssim of an empty tensor".into()));
    }
    let k = ssim_kernel();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..c {
            total += ssim_plane(pred.plane(i, j), gt.plane(i, j), h, w, peak, &k);
        }
    }
    Ok(total / (n * c) as f64)
}

/// Edge precision and recall; an empty denominator yields a flagged zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: Flagged<f64>,
    pub recall: Flagged<f64>,
}

/// Pixel-exact precision/recall over mask-1 pixels.
pub fn edge_precision_recall(pred: &EdgeMap, gt: &EdgeMap, mask: &Mask) -> Result<PrecisionRecall> {
    edge_precision_recall_with_tolerance(pred, gt, mask, 0)
}

/// Precision/recall over mask-1 pixels where an edge pixel counts as matched
/// if the other map has an edge within Chebyshev distance `tolerance`
/// (searched over the whole image).
pub fn edge_precision_recall_with_tolerance(
    pred: &EdgeMap,
    gt: &EdgeMap,
    mask: &Mask,
    tolerance: usize,
) -> Result<PrecisionRecall> {
    let (h, w) = (gt.h(), gt.w());
    if pred.h() != h {
        return Err(Error::dim("height", h, pred.h()));
    }
    if pred.w() != w {
        return Err(Error::dim("width", w, pred.w()));
    }
    if mask.h() != h {
        return Err(Error::dim("height", h, mask.h()));
    }
    if mask.w() != w {
        return Err(Error::dim("width", w, mask.w()));
    }
    if !pred.is_binary() || !gt.is_binary() {
        return Err(Error::Parameter("precision/recall needs binary edge maps".into()));
    }
    let near = |map: &EdgeMap, y: usize, x: usize| {
        let (y0, y1) = (y.saturating_sub(tolerance), (y + tolerance).min(h - 1));
        let (x0, x1) = (x.saturating_sub(tolerance), (x + tolerance).min(w - 1));
        (y0..=y1).any(|yy| (x0..=x1).any(|xx| map.get(yy, xx) == 1.0))
    };
    let (mut pred_n, mut pred_hit, mut gt_n, mut gt_hit) = (0usize, 0usize, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) == 0 {
                continue;
            }
            if pred.get(y, x) == 1.0 {
                pred_n += 1;
                pred_hit += usize::from(near(gt, y, x));
            }
            if gt.get(y, x) == 1.0 {
                gt_n += 1;
                gt_hit += usize::from(near(pred, y, x));
            }
        }
    }
    let ratio = |hit: usize, n: usize| {
        if n == 0 {
            Flagged::degenerate(0.0)
        } else {
            Flagged::ok(hit as f64 / n as f64)
        }
    };
    Ok(PrecisionRecall {
        precision: ratio(pred_hit, pred_n),
        recall: ratio(gt_hit, gt_n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(dims, |_, _, _, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn relative_l1_values() {
        let gt = random([1, 3, 8, 8], 1);
        assert_eq!(relative_l1(&gt, &gt).unwrap(), 0.0);
        let scaled = Tensor::new(gt.dims(), gt.data().iter().map(|&v| (f64::from(v) * 1.1) as f32).collect()).unwrap();
        assert!((relative_l1(&scaled, &gt).unwrap() - 0.1).abs() < 1e-6);
        assert!(matches!(
            relative_l1(&gt, &Tensor::zeros(gt.dims())),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn relative_l1_loop_oracle() {
        let a = random([2, 3, 5, 7], 2);
        let b = random([2, 3, 5, 7], 3);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for i in 0..a.len() {
            num += (a.data()[i] as f64 - b.data()[i] as f64).abs();
            den += (b.data()[i] as f64).abs();
        }
        assert!((relative_l1(&a, &b).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn psnr_values() {
        let gt = random([1, 1, 4, 4], 4);
        assert_eq!(psnr(&gt, &gt, 1.0).unwrap(), PSNR_CAP);
        let zero = Tensor::zeros([1, 1, 4, 4]);
        let one = Tensor::full([1, 1, 4, 4], 1.0);
        assert!(psnr(&zero, &one, 1.0).unwrap().abs() < 1e-12);
        let tenth = Tensor::full([1, 1, 4, 4], 0.1);
        assert!((psnr(&tenth, &zero, 1.0).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&gt, &gt, 0.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let gt = random([1, 3, 16, 16], 5);
        let mut prev = f64::INFINITY;
        for step in 1..=8 {
            let amp = 0.01 * step as f32;
            let noisy = Tensor::from_fn(gt.dims(), |n, c, y, x| {
                gt.get(n, c, y, x) + if (x + y) % 2 == 0 { amp } else { -amp }
            });
            let p = psnr(&noisy, &gt, 1.0).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = random([1, 3, 20, 24], 6);
        let b = random([1, 3, 20, 24], 7);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let ab = ssim(&a, &b).unwrap();
        assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-9);
        assert!((-1.0..=1.0).contains(&ab) && ab < 1.0);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let a = Tensor::full([1, 1, 16, 16], 0.5);
        let b = Tensor::full([1, 1, 16, 16], 0.6);
        let expected = (2.0 * 0.5 * 0.6 + 1e-4) / (0.25 + 0.36 + 1e-4);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        assert!((got - 0.983609).abs() < 1e-6);
    }

    #[test]
    fn ssim_direct_window_oracle() {
        let a = random([1, 1, 12, 13], 8);
        let b = random([1, 1, 12, 13], 9);
        let k = ssim_kernel();
        let mut total = 0.0;
        let mut count = 0;
        for y0 in 0..2 {
            for x0 in 0..3 {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let g = k[i] * k[j];
                        let va = a.get(0, 0, y0 + i, x0 + j) as f64;
                        let vb = b.get(0, 0, y0 + i, x0 + j) as f64;
                        ma += g * va;
                        mb += g * vb;
                        aa += g * va * va;
                        bb += g * vb * vb;
                        ab += g * va * vb;
                    }
                }
                let (c1, c2) = (1e-4, 9e-4);
                total += (2.0 * ma * mb + c1) * (2.0 * (ab - ma * mb) + c2)
                    / ((ma * ma + mb * mb + c1) * (aa - ma * ma + bb - mb * mb + c2));
                count += 1;
            }
        }
        assert!((ssim(&a, &b).unwrap() - total / count as f64).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Tensor::zeros([1, 1, 10, 32]);
        assert!(matches!(ssim(&a, &a), Err(Error::Parameter(_))));
    }

    fn edges(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> EdgeMap {
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                v.push(if f(y, x) { 1.0 } else { 0.0 });
            }
        }
        EdgeMap::from_values(h, w, v).unwrap()
    }

    #[test]
    fn precision_recall_trivial_cases() {
        let gt = edges(8, 8, |y, x| x == 3 || y == 5);
        let m = Mask::ones(8, 8);
        let pr = edge_precision_recall(&gt, &gt, &m).unwrap();
        assert_eq!((pr.precision.value, pr.recall.value), (1.0, 1.0));
        let pr = edge_precision_recall(&EdgeMap::empty(8, 8), &gt, &m).unwrap();
        assert!(pr.precision.degenerate);
        assert_eq!(pr.precision.value, 0.0);
        assert!(!pr.recall.degenerate);
        assert_eq!(pr.recall.value, 0.0);
    }

    #[test]
    fn precision_recall_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut bits = || -> Vec<bool> { (0..64).map(|_| rng.random_bool(0.3)).collect() };
        let (p, g, mv) = (bits(), bits(), bits());
        let pred = edges(8, 8, |y, x| p[y * 8 + x]);
        let gt = edges(8, 8, |y, x| g[y * 8 + x]);
        let m = Mask::from_fn(8, 8, |y, x| mv[y * 8 + x]);
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for i in 0..64 {
            if !mv[i] {
                continue;
            }
            match (p[i], g[i]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let pr = edge_precision_recall(&pred, &gt, &m).unwrap();
        assert!((pr.precision.value - tp as f64 / (tp + fp) as f64).abs() < 1e-12);
        assert!((pr.recall.value - tp as f64 / (tp + fn_) as f64).abs() < 1e-12);
    }

    #[test]
    fn tolerance_matches_shifted_edges() {
        let gt = edges(10, 10, |_, x| x == 4);
        let pred = edges(10, 10, |_, x| x == 5);
        let m = Mask::ones(10, 10);
        let exact = edge_precision_recall(&pred, &gt, &m).unwrap();
        assert_eq!(exact.precision.value, 0.0);
        let tol = edge_precision_recall_with_tolerance(&pred, &gt, &m, 1).unwrap();
        assert_eq!((tol.precision.value, tol.recall.value), (1.0, 1.0));
    }

    #[test]
    fn precision_recall_rejects_soft_maps() {
        let soft = EdgeMap::from_values(2, 2, vec![0.5, 0.0, 1.0, 0.0]).unwrap();
        let hard = EdgeMap::empty(2, 2);
        assert!(matches!(
            edge_precision_recall(&soft, &hard, &Mask::ones(2, 2)),
            Err(Error::Parameter(_))
        ));
    }
}
