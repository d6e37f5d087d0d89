use super::Tensor;
use crate::error::{Error, Result};

/// Source coordinate and blend weight for each output index under the
/// half-pixel-centre convention, clamped at the borders.
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, (src - lo as f64) as f32)
        })
        .collect()
}

/// Bilinear resampling of every plane to `out_h × out_w`.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Parameter(format!("resize target must be non-empty, got {out_h}x{out_w}")));
    }
    let [n, c, h, w] = input.dims();
    if h == 0 || w == 0 {
        return Err(Error::Parameter("cannot resize an empty image".into()));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(input.clone());
    }
    let ys = taps(h, out_h);
    let xs = taps(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                    let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                    dst[oy * out_w + ox] = top * (1.0 - fy) + bottom * fy;
                }
            }
        }
    }
    Ok(out)
}
