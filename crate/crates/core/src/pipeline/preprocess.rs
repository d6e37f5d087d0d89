//! Dataset crops and resizing to the 256×256 network resolution.

use crate::error::{Error, Result};
use crate::tensor::{bilinear_resize, Tensor};

pub const TARGET_SIZE: usize = 256;
pub const CELEBA_CROP: usize = 178;
pub const PSV_CROP: usize = 537;

/// Copies the `height × width` window at `(top, left)` of every plane.
pub fn crop(img: &Tensor, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
    let [n, c, h, w] = img.dims();
    if top + height > h || left + width > w {
        return Err(Error::Parameter(format!(
            "crop {height}x{width} at ({top}, {left}) exceeds {h}x{w}"
        )));
    }
    Ok(Tensor::from_fn([n, c, height, width], |b, ch, y, x| {
        img.get(b, ch, top + y, left + x)
    }))
}

/// Centre 178×178 crop (offsets floored), bilinearly resized to 256×256.
pub fn preprocess_celeba(img: &Tensor) -> Result<Tensor> {
    let (h, w) = (img.h(), img.w());
    if h < CELEBA_CROP || w < CELEBA_CROP {
        return Err(Error::Parameter(format!(
            "face images must be at least {CELEBA_CROP}x{CELEBA_CROP}, got {h}x{w}"
        )));
    }
    let cropped = crop(img, (h - CELEBA_CROP) / 2, (w - CELEBA_CROP) / 2, CELEBA_CROP, CELEBA_CROP)?;
    bilinear_resize(&cropped, TARGET_SIZE, TARGET_SIZE)
}

/// Left, middle and right crop offsets for a panorama of width `w`.
pub fn psv_offsets(w: usize) -> [usize; 3] {
    [0, (w - PSV_CROP) / 2, w - PSV_CROP]
}

/// Three 537×537 crops of a 537-high panorama, each resized to 256×256.
pub fn preprocess_psv(img: &Tensor) -> Result<[Tensor; 3]> {
    let (h, w) = (img.h(), img.w());
    if h != PSV_CROP {
        return Err(Error::Parameter(format!("panoramas must be {PSV_CROP} pixels high, got {h}")));
    }
    if w < PSV_CROP {
        return Err(Error::Parameter(format!("panoramas must be at least {PSV_CROP} wide, got {w}")));
    }
    let [a, b, c] = psv_offsets(w).map(|left| {
        crop(img, 0, left, PSV_CROP, PSV_CROP).and_then(|t| bilinear_resize(&t, TARGET_SIZE, TARGET_SIZE))
    });
    Ok([a?, b?, c?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_constant(t: &Tensor, v: f32) {
        assert!(t.data().iter().all(|&x| (x - v).abs() < 1e-6));
    }

    #[test]
    fn celeba_shapes() {
        let tall = Tensor::full([1, 3, 218, 178], 0.3);
        let out = preprocess_celeba(&tall).unwrap();
        assert_eq!(out.dims(), [1, 3, 256, 256]);
        assert_constant(&out, 0.3);
        let square = Tensor::from_fn([1, 1, 178, 178], |_, _, y, x| (y + x) as f32 / 400.0);
        assert_eq!(
            preprocess_celeba(&square).unwrap(),
            bilinear_resize(&square, 256, 256).unwrap()
        );
        assert!(preprocess_celeba(&Tensor::zeros([1, 3, 177, 300])).is_err());
    }

    #[test]
    fn celeba_crop_is_centred() {
        let img = Tensor::from_fn([1, 1, 218, 178], |_, _, y, _| y as f32);
        let c = crop(&img, 20, 0, 178, 178).unwrap();
        assert_eq!(c.get(0, 0, 0, 0), 20.0);
        assert_eq!(c.get(0, 0, 177, 5), 197.0);
    }

    #[test]
    fn psv_offsets_and_shapes() {
        assert_eq!(psv_offsets(936), [0, 199, 399]);
        assert_eq!(psv_offsets(3 * 537), [0, 537, 1074]);
        let img = Tensor::full([1, 3, 537, 936], 0.7);
        for t in preprocess_psv(&img).unwrap() {
            assert_eq!(t.dims(), [1, 3, 256, 256]);
            assert_constant(&t, 0.7);
        }
        assert!(preprocess_psv(&Tensor::zeros([1, 3, 537, 536])).is_err());
        assert!(preprocess_psv(&Tensor::zeros([1, 3, 536, 936])).is_err());
    }

    #[test]
    fn psv_tiling_is_disjoint() {
        let w = 3 * 537;
        let img = Tensor::from_fn([1, 1, 537, w], |_, _, _, x| (x / 537) as f32);
        let crops = preprocess_psv(&img).unwrap();
        for (i, c) in crops.iter().enumerate() {
            assert_constant(c, i as f32);
        }
    }
}
