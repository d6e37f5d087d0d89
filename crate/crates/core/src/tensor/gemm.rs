//! Thin safe wrapper over `matrixmultiply::sgemm` for the strided layouts the
//! convolution kernels need.

/// A read-only strided matrix view.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn row_major(data: &'a [f32], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// The transpose of a row-major `cols x rows` buffer.
    pub fn transposed(data: &'a [f32], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            row_stride: 1,
            col_stride: rows,
        }
    }

    fn max_offset(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride
    }
}

/// `out = a · b`, where `out` is row-major with the given row stride and unit
/// column stride.
pub(crate) fn matmul_into(a: MatRef<'_>, b: MatRef<'_>, out: &mut [f32], out_row_stride: usize) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(out_row_stride >= n);
    assert!(out.len() >= (m - 1) * out_row_stride + n, "output view out of bounds");
    if k == 0 {
        for r in 0..m {
            out[r * out_row_stride..r * out_row_stride + n].fill(0.0);
        }
        return;
    }
    assert!(a.max_offset() < a.data.len(), "lhs view out of bounds");
    assert!(b.max_offset() < b.data.len(), "rhs view out of bounds");
    // SAFETY: every index touched by sgemm is bounded by the asserts above, and
    // `out` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            0.0,
            out.as_mut_ptr(),
            out_row_stride as isize,
            1,
        );
    }
}
