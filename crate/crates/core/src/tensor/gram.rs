use super::Tensor;

/// Per-sample Gram matrix `F·Fᵀ / (c·h·w)` of the `c × (h·w)` unfolding.
///
/// The result has dims `(n, 1, c, c)` and is exactly symmetric.
pub fn gram_matrix(features: &Tensor) -> Tensor {
    let [n, c, h, w] = features.dims();
    let norm = (c * h * w).max(1) as f64;
    let mut out = Tensor::zeros([n, 1, c, c]);
    for b in 0..n {
        for i in 0..c {
            let fi = features.plane(b, i);
            for j in i..c {
                let fj = features.plane(b, j);
                let dot: f64 = fi.iter().zip(fj).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
                let g = (dot / norm) as f32;
                out.set(b, 0, i, j, g);
                out.set(b, 0, j, i, g);
            }
        }
    }
    out
}
