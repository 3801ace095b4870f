//! Dense row-major matrices over `f32`/`f64` and a strided gemm wrapper.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of the numeric core. `f32` trains; `f64` exists for
/// gradient checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    /// `C = alpha · A · B + beta · C` with explicit element strides.
    ///
    /// # Safety
    /// Every addressed element must lie inside the respective allocation.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Row-major operand view: `rows × cols` logical matrix at `data[offset..]`
/// with leading dimension `ld`, optionally transposed.
#[derive(Clone, Copy)]
pub struct View<'a, F> {
    pub data: &'a [F],
    pub offset: usize,
    pub ld: usize,
    pub trans: bool,
}

impl<'a, F> View<'a, F> {
    pub fn new(data: &'a [F], offset: usize, ld: usize) -> Self {
        View {
            data,
            offset,
            ld,
            trans: false,
        }
    }

    pub fn t(self) -> Self {
        View {
            trans: !self.trans,
            ..self
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.ld as isize)
        } else {
            (self.ld as isize, 1)
        }
    }

    /// Last element addressed by an `r × c` logical block.
    fn extent(&self, r: usize, c: usize) -> usize {
        if r == 0 || c == 0 {
            return self.offset;
        }
        let (rs, cs) = self.strides();
        self.offset + (r - 1) * rs as usize + (c - 1) * cs as usize
    }
}

/// `C[m×n] = alpha · A[m×k] · B[k×n] + beta · C`, where `C` lives at
/// `c[c_off..]` with leading dimension `ldc`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: F,
    a: View<'_, F>,
    b: View<'_, F>,
    beta: F,
    c: &mut [F],
    c_off: usize,
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.extent(m, k) < a.data.len().max(1) || k == 0, "gemm: A out of bounds");
    assert!(b.extent(k, n) < b.data.len().max(1) || k == 0, "gemm: B out of bounds");
    assert!(c_off + (m - 1) * ldc + n - 1 < c.len(), "gemm: C out of bounds");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            rsa,
            csa,
            b.data.as_ptr().add(b.offset),
            rsb,
            csb,
            beta,
            c.as_mut_ptr().add(c_off),
            ldc as isize,
            1,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn view(&self) -> View<'_, F> {
        View::new(&self.data, 0, self.cols)
    }

    pub fn add_assign(&mut self, other: &Matrix<F>) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| G::from_f64_lossy(x.to_f64_lossy()))
                .collect(),
        }
    }
}

/// `A · B` for whole matrices.
pub fn matmul<F: Scalar>(a: &Matrix<F>, b: &Matrix<F>) -> Matrix<F> {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(a.rows, a.cols, b.cols, F::one(), a.view(), b.view(), F::zero(), &mut c.data, 0, b.cols);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        let mut c = Matrix::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for p in 0..a.cols {
                    s += a.data[i * a.cols + p] * b.data[p * b.cols + j];
                }
                c.data[i * b.cols + j] = s;
            }
        }
        c
    }

    fn seq(rows: usize, cols: usize, k: f64) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|i| ((i as f64) * k).sin()).collect())
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a = seq(5, 3, 0.7);
        let b = seq(3, 4, 1.3);
        let c = matmul(&a, &b);
        let expect = naive(&a, &b);
        for (x, y) in c.data.iter().zip(&expect.data) {
            assert!((x - y).abs() < 1e-12);
        }
        // Aᵀ stored as 3×5, Bᵀ stored as 4×3
        let at = Matrix::from_vec(3, 5, (0..15).map(|i| a.data[(i % 5) * 3 + i / 5]).collect());
        let bt = Matrix::from_vec(4, 3, (0..12).map(|i| b.data[(i % 3) * 4 + i / 3]).collect());
        let mut c2 = Matrix::zeros(5, 4);
        gemm(5, 3, 4, 1.0, at.view().t(), bt.view().t(), 0.0, &mut c2.data, 0, 4);
        for (x, y) in c2.data.iter().zip(&expect.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn strided_block_write() {
        let a = seq(2, 2, 0.3);
        let b = seq(2, 2, 0.9);
        let mut big = vec![0.0f64; 4 * 6];
        gemm(2, 2, 2, 1.0, a.view(), b.view(), 0.0, &mut big, 6 + 3, 6);
        let c = naive(&a, &b);
        assert!((big[9] - c.data[0]).abs() < 1e-12);
        assert!((big[16] - c.data[3]).abs() < 1e-12);
        assert_eq!(big[0], 0.0);
    }

    #[test]
    fn le_bytes_round_trip() {
        let mut buf = Vec::new();
        1.5f32.write_le(&mut buf);
        (-2.25f64).write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), 1.5);
        assert_eq!(f64::read_le(&buf[4..]), -2.25);
    }
}
