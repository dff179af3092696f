//! Dense row-major matrices and the scalar trait shared by both numeric modes.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar type of the engine. Implemented for `f32` (training) and `f64`
/// (verification).
pub trait Real: Float + Debug + Default + Send + Sync + core::iter::Sum + 'static {
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self;
    /// Widening conversion to `f64`.
    fn as_f64(self) -> f64;
    const BITS: u32;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    const BITS: u32 = 32;
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    const BITS: u32 = 64;
}

/// A dense `rows x cols` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Contract(alloc::format!(
                "tensor dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Contract(alloc::format!(
                "{} values cannot fill a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a tensor from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend(r.iter().map(|&x| F::of(x)));
        }
        Self::new(rows.len(), cols, data).expect("non-empty rows")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, F::zero())
    }

    pub fn full(rows: usize, cols: usize, value: F) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: F) -> Self {
        Self::full(1, 1, value)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a `1x1` tensor.
    pub fn item(&self) -> Result<F> {
        if self.data.len() != 1 {
            return Err(Error::Contract(alloc::format!(
                "expected a scalar, got shape {:?}",
                self.shape()
            )));
        }
        Ok(self.data[0])
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts between numeric modes.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| G::of(x.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// `c += a * b` for row-major `a: m x k`, `b: k x n`, `c: m x n`.
pub(crate) fn gemm_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        axpy_rows(&a[i * k..(i + 1) * k], b, c_row, n);
    }
}

/// `c_row += sum_p coef[p] * b[p, ..]`, four rows of `b` per pass so each
/// element of `c_row` is loaded and stored once per four terms.
#[inline]
fn axpy_rows<F: Real>(coef: &[F], b: &[F], c_row: &mut [F], n: usize) {
    let zero = F::zero();
    let mut blocks = coef.chunks_exact(4);
    let mut p = 0;
    for q in blocks.by_ref() {
        if q.iter().all(|&x| x == zero) {
            p += 4;
            continue;
        }
        let b0 = &b[p * n..(p + 1) * n];
        let b1 = &b[(p + 1) * n..(p + 2) * n];
        let b2 = &b[(p + 2) * n..(p + 3) * n];
        let b3 = &b[(p + 3) * n..(p + 4) * n];
        for j in 0..n {
            c_row[j] = c_row[j] + (q[0] * b0[j] + q[1] * b1[j]) + (q[2] * b2[j] + q[3] * b3[j]);
        }
        p += 4;
    }
    for &x in blocks.remainder() {
        if x != zero {
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + x * bv;
            }
        }
        p += 1;
    }
}

/// `c += a * b^T` for `a: m x k`, `b: n x k`, `c: m x n`.
pub(crate) fn gemm_bt_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            c[i * n + j] = c[i * n + j] + dot(a_row, b_row);
        }
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
fn dot<F: Real>(x: &[F], y: &[F]) -> F {
    const LANES: usize = 8;
    let mut acc = [F::zero(); LANES];
    let (xc, yc) = (x.chunks_exact(LANES), y.chunks_exact(LANES));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for l in 0..LANES {
            acc[l] = acc[l] + xs[l] * ys[l];
        }
    }
    let mut s = F::zero();
    for (&p, &q) in xr.iter().zip(yr) {
        s = s + p * q;
    }
    acc.iter().fold(s, |t, &v| t + v)
}

/// `c += a^T * b` for `a: m x k`, `b: m x n`, `c: k x n`.
pub(crate) fn gemm_at_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    let mut coef = Vec::with_capacity(m);
    for p in 0..k {
        coef.clear();
        coef.extend((0..m).map(|i| a[i * k + p]));
        axpy_rows(&coef, b, &mut c[p * n..(p + 1) * n], n);
    }
}
