//! 8-bit PNG decoding and encoding of `[0, 1]` tensors.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::edge::EdgeMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decodes any supported image as RGB into a `1×3×H×W` tensor scaled by 1/255.
/// Grayscale inputs are replicated across the three channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let raw = img.into_raw();
    Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        f32::from(raw[(y * w + x) * 3 + c]) / 255.0
    }))
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_error(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes image 0 of a 1- or 3-channel tensor as an 8-bit PNG, rounding
/// `v · 255` after clamping to `[0, 1]`.
pub fn save_image(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let [n, c, h, w] = t.dims();
    if n == 0 {
        return Err(Error::Shape("cannot save an empty batch".into()));
    }
    let (wu, hu) = (w as u32, h as u32);
    match c {
        1 => {
            let buf: Vec<u8> = t.plane(0, 0).iter().map(|&v| quantize(v)).collect();
            GrayImage::from_raw(wu, hu, buf)
                .expect("buffer sized from dims")
                .save(path)
                .map_err(|e| encode_error(path, e))
        }
        3 => {
            let mut buf = vec![0u8; h * w * 3];
            for ch in 0..3 {
                for (i, &v) in t.plane(0, ch).iter().enumerate() {
                    buf[i * 3 + ch] = quantize(v);
                }
            }
            RgbImage::from_raw(wu, hu, buf)
                .expect("buffer sized from dims")
                .save(path)
                .map_err(|e| encode_error(path, e))
        }
        _ => Err(Error::Shape(format!("can only save 1- or 3-channel images, got {c}"))),
    }
}

pub fn save_edges(e: &EdgeMap, path: impl AsRef<Path>) -> Result<()> {
    save_image(&e.to_tensor(), path)
}
