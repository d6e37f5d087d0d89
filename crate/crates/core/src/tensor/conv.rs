//! 2-D convolution and transposed convolution via im2col / col2im and SGEMM.

use super::gemm::{matmul_into, MatRef};
use super::Tensor;
use crate::error::{Error, Result};

/// Upper bound on the number of floats held by one im2col buffer. Larger
/// problems are processed in bands of output rows.
const COLUMN_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PaddingMode {
    #[default]
    Zero,
    /// Mirror padding without repeating the border sample (`[2,1 | 0,1,2 | 1,0]`).
    Reflect,
}

/// Hyperparameters and weights of one convolution.
///
/// `kernel` is `(out_c, in_c, kh, kw)` for [`conv2d`]. [`conv_transpose2d`]
/// uses the same tensor as the adjoint map, so it consumes `out_c` channels and
/// produces `in_c`.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a> {
    pub kernel: &'a Tensor,
    pub bias: Option<&'a [f32]>,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub padding_mode: PaddingMode,
}

impl<'a> ConvParams<'a> {
    pub fn new(kernel: &'a Tensor) -> Self {
        ConvParams {
            kernel,
            bias: None,
            stride: 1,
            dilation: 1,
            padding: 0,
            padding_mode: PaddingMode::Zero,
        }
    }

    pub fn bias(mut self, bias: &'a [f32]) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn padding(mut self, padding: usize, mode: PaddingMode) -> Self {
        self.padding = padding;
        self.padding_mode = mode;
        self
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.n()
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.c()
    }

    fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Parameter("stride must be positive".into()));
        }
        if self.dilation == 0 {
            return Err(Error::Parameter("dilation must be positive".into()));
        }
        if self.kernel.h() == 0 || self.kernel.w() == 0 {
            return Err(Error::Parameter("kernel must have a non-empty window".into()));
        }
        Ok(())
    }
}

/// Output length of a convolution along one axis, or `None` when the window
/// does not fit.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, dilation: usize, padding: usize) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = input + 2 * padding;
    if padded < span || stride == 0 {
        return None;
    }
    Some((padded - span) / stride + 1)
}

/// Output length of a transposed convolution along one axis.
pub fn transpose_output_len(input: usize, kernel: usize, stride: usize, dilation: usize, padding: usize) -> Option<usize> {
    if input == 0 {
        return None;
    }
    let full = (input - 1) * stride + dilation * (kernel - 1) + 1;
    full.checked_sub(2 * padding).filter(|&v| v > 0)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Copies every plane of `input` into a buffer padded by `pad` on each side.
fn pad_input(input: &Tensor, pad: usize, mode: PaddingMode) -> Tensor {
    if pad == 0 {
        return input.clone();
    }
    let [n, c, h, w] = input.dims();
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = Tensor::zeros([n, c, hp, wp]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            match mode {
                PaddingMode::Zero => {
                    for y in 0..h {
                        let row = (y + pad) * wp + pad;
                        dst[row..row + w].copy_from_slice(&src[y * w..(y + 1) * w]);
                    }
                }
                PaddingMode::Reflect => {
                    for yp in 0..hp {
                        let y = reflect(yp as isize - pad as isize, h);
                        for xp in 0..wp {
                            let x = reflect(xp as isize - pad as isize, w);
                            dst[yp * wp + xp] = src[y * w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

fn check_bias(bias: Option<&[f32]>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != channels => Err(Error::dim("bias", channels, b.len())),
        _ => Ok(()),
    }
}

fn add_bias(out: &mut Tensor, bias: Option<&[f32]>) {
    if let Some(bias) = bias {
        for b in 0..out.n() {
            for (ch, &beta) in bias.iter().enumerate() {
                out.plane_mut(b, ch).iter_mut().for_each(|v| *v += beta);
            }
        }
    }
}

/// Cross-correlation of `input` with `params.kernel`, plus optional bias.
///
/// Output extent per axis is `floor((in + 2·pad − dilation·(k − 1) − 1) / stride) + 1`.
pub fn conv2d(input: &Tensor, params: &ConvParams<'_>) -> Result<Tensor> {
    params.validate()?;
    let [n, in_c, h, w] = input.dims();
    let [out_c, k_in, kh, kw] = params.kernel.dims();
    if in_c != k_in {
        return Err(Error::dim("channel", k_in, in_c));
    }
    check_bias(params.bias, out_c)?;
    let (stride, dil, pad) = (params.stride, params.dilation, params.padding);
    if params.padding_mode == PaddingMode::Reflect && (pad >= h || pad >= w) {
        return Err(Error::Parameter(format!(
            "reflect padding {pad} requires an input larger than {pad} on both axes, got {h}x{w}"
        )));
    }
    let oh = conv_output_len(h, kh, stride, dil, pad)
        .ok_or_else(|| Error::Shape(format!("kernel does not fit along height (input {h}, kernel {kh}, dilation {dil}, padding {pad})")))?;
    let ow = conv_output_len(w, kw, stride, dil, pad)
        .ok_or_else(|| Error::Shape(format!("kernel does not fit along width (input {w}, kernel {kw}, dilation {dil}, padding {pad})")))?;

    let padded = pad_input(input, pad, params.padding_mode);
    let (hp, wp) = (padded.h(), padded.w());
    let k_len = in_c * kh * kw;
    let out_plane = oh * ow;
    let band_rows = (COLUMN_BUDGET / (k_len * ow).max(1)).clamp(1, oh);
    let mut cols = vec![0.0f32; k_len * band_rows * ow];
    let mut out = Tensor::zeros([n, out_c, oh, ow]);
    let kernel = MatRef::row_major(params.kernel.data(), out_c, k_len);

    for b in 0..n {
        let sample_in = &padded.data()[b * in_c * hp * wp..(b + 1) * in_c * hp * wp];
        let sample_out = &mut out.data_mut()[b * out_c * out_plane..(b + 1) * out_c * out_plane];
        let mut r0 = 0;
        while r0 < oh {
            let rows = band_rows.min(oh - r0);
            let band = rows * ow;
            for ci in 0..in_c {
                let plane = &sample_in[ci * hp * wp..(ci + 1) * hp * wp];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let k = (ci * kh + ky) * kw + kx;
                        let dst = &mut cols[k * band..(k + 1) * band];
                        for r in 0..rows {
                            let sy = (r0 + r) * stride + ky * dil;
                            let src_row = &plane[sy * wp..(sy + 1) * wp];
                            let dst_row = &mut dst[r * ow..(r + 1) * ow];
                            if stride == 1 {
                                dst_row.copy_from_slice(&src_row[kx * dil..kx * dil + ow]);
                            } else {
                                for (ox, d) in dst_row.iter_mut().enumerate() {
                                    *d = src_row[ox * stride + kx * dil];
                                }
                            }
                        }
                    }
                }
            }
            let columns = MatRef::row_major(&cols[..k_len * band], k_len, band);
            matmul_into(kernel, columns, &mut sample_out[r0 * ow..], out_plane);
            r0 += rows;
        }
    }
    add_bias(&mut out, params.bias);
    Ok(out)
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same kernel,
/// stride, dilation and zero padding.
///
/// Output extent per axis is `(in − 1)·stride − 2·pad + dilation·(k − 1) + 1`.
pub fn conv_transpose2d(input: &Tensor, params: &ConvParams<'_>) -> Result<Tensor> {
    params.validate()?;
    if params.padding_mode == PaddingMode::Reflect {
        return Err(Error::Unsupported("reflect padding in transposed convolution".into()));
    }
    let [n, c_in, h, w] = input.dims();
    let [k_out, c_out, kh, kw] = params.kernel.dims();
    if c_in != k_out {
        return Err(Error::dim("channel", k_out, c_in));
    }
    check_bias(params.bias, c_out)?;
    let (stride, dil, pad) = (params.stride, params.dilation, params.padding);
    let oh = transpose_output_len(h, kh, stride, dil, pad)
        .ok_or_else(|| Error::Shape(format!("transposed convolution output along height is empty (input {h}, padding {pad})")))?;
    let ow = transpose_output_len(w, kw, stride, dil, pad)
        .ok_or_else(|| Error::Shape(format!("transposed convolution output along width is empty (input {w}, padding {pad})")))?;

    let k_len = c_out * kh * kw;
    let in_plane = h * w;
    let band_rows = (COLUMN_BUDGET / (k_len * w).max(1)).clamp(1, h);
    let mut cols = vec![0.0f32; k_len * band_rows * w];
    let mut out = Tensor::zeros([n, c_out, oh, ow]);
    let kernel_t = MatRef::transposed(params.kernel.data(), k_len, k_out);
    let pad = pad as isize;

    for b in 0..n {
        let sample_in = &input.data()[b * c_in * in_plane..(b + 1) * c_in * in_plane];
        let mut r0 = 0;
        while r0 < h {
            let rows = band_rows.min(h - r0);
            let band = rows * w;
            let src = MatRef {
                data: &sample_in[r0 * w..],
                rows: c_in,
                cols: band,
                row_stride: in_plane,
                col_stride: 1,
            };
            matmul_into(kernel_t, src, &mut cols[..k_len * band], band);
            for co in 0..c_out {
                let dst = out.plane_mut(b, co);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let k = (co * kh + ky) * kw + kx;
                        let col = &cols[k * band..(k + 1) * band];
                        for r in 0..rows {
                            let oy = ((r0 + r) * stride + ky * dil) as isize - pad;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let dst_row = &mut dst[oy as usize * ow..(oy as usize + 1) * ow];
                            for ix in 0..w {
                                let ox = (ix * stride + kx * dil) as isize - pad;
                                if ox >= 0 && ox < ow as isize {
                                    dst_row[ox as usize] += col[r * w + ix];
                                }
                            }
                        }
                    }
                }
            }
            r0 += rows;
        }
    }
    add_bias(&mut out, params.bias);
    Ok(out)
}
