//! Dense layers with exact reverse-mode gradients.
//!
//! Matrices are row-major with one sample per row. A layer maps an `n x in`
//! batch to `n x out` through `y = f(x W^T + b)`, with `W` stored `out x in`.

mod checkpoint;
mod dense;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use dense::{Activation, Dense, Mlp, MlpCache};
pub use params::{Adam, AdamConfig, ParamVector, Parameterized, Slot};

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Scalar type of network parameters and activations.
pub trait Real:
    num_traits::Float + Default + Debug + Send + Sync + AddAssign + MulAssign + std::iter::Sum + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha * A B + beta * C` over strided views (see
    /// `matrixmultiply::dgemm`).
    ///
    /// # Safety
    /// The pointers and strides must describe valid, non-overlapping
    /// `m x k`, `k x n` and `m x n` views.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
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

    /// Hyperbolic tangent used by activations.
    fn tanh_act(self) -> Self {
        self.tanh()
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
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

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    /// Rational fit on `[-9, 9]`, within 1e-6 of the exact value.
    fn tanh_act(self) -> Self {
        let x = self.clamp(-9.0, 9.0);
        if x.abs() < 4e-4 {
            return x;
        }
        let x2 = x * x;
        let p = ((((((-2.760_768_5e-16 * x2 + 2.000_187_9e-13) * x2 - 8.604_671_5e-11) * x2 + 5.122_297e-8) * x2
            + 1.485_722_4e-5)
            * x2
            + 6.372_619_3e-4)
            * x2
            + 4.893_524_6e-3)
            * x;
        let q = ((1.198_258_4e-6 * x2 + 1.185_347e-4) * x2 + 2.268_434_6e-3) * x2 + 4.893_525e-3;
        (p / q).clamp(-1.0, 1.0)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Real> Mat<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![R::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<R>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stack fixed-width `f64` rows, converting to `R`.
    pub fn from_rows<const K: usize>(rows: &[[f64; K]]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * K);
        for r in rows {
            data.extend(r.iter().map(|&v| R::from_f64(v)));
        }
        Self {
            rows: rows.len(),
            cols: K,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<R> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [R] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: R) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out = x w^T`, with `x: n x k`, `w: m x k`, `out: n x m`.
pub fn matmul_nt<R: Real>(x: &Mat<R>, w: &Mat<R>, out: &mut Mat<R>) {
    matmul_nt_cols(x, w, 0..w.cols, out);
}

/// `out = x w[:, cols]^T`, with `x: n x |cols|`, `out: n x m`.
pub fn matmul_nt_cols<R: Real>(x: &Mat<R>, w: &Mat<R>, cols: Range<usize>, out: &mut Mat<R>) {
    assert!(cols.end <= w.cols);
    assert_eq!(x.cols, cols.len());
    assert_eq!(out.shape(), (x.rows, w.rows));
    if x.rows == 0 || w.rows == 0 {
        return;
    }
    if x.cols == 0 {
        out.fill(R::zero());
        return;
    }
    unsafe {
        R::gemm(
            x.rows,
            x.cols,
            w.rows,
            R::one(),
            x.data.as_ptr(),
            x.cols as isize,
            1,
            w.data.as_ptr().add(cols.start),
            1,
            w.cols as isize,
            R::zero(),
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        )
    }
}

/// `acc += dy^T x`, with `dy: n x m`, `x: n x k`, `acc: m x k`.
pub fn matmul_tn_acc<R: Real>(dy: &Mat<R>, x: &Mat<R>, acc: &mut Mat<R>) {
    let cols = 0..acc.cols;
    matmul_tn_acc_cols(dy, x, acc, cols);
}

/// `acc[:, cols] += dy^T x`, with `dy: n x m`, `x: n x |cols|`.
pub fn matmul_tn_acc_cols<R: Real>(dy: &Mat<R>, x: &Mat<R>, acc: &mut Mat<R>, cols: Range<usize>) {
    assert!(cols.end <= acc.cols);
    assert_eq!(dy.rows, x.rows);
    assert_eq!((acc.rows, cols.len()), (dy.cols, x.cols));
    if dy.rows == 0 || acc.rows == 0 || cols.is_empty() {
        return;
    }
    unsafe {
        R::gemm(
            dy.cols,
            dy.rows,
            x.cols,
            R::one(),
            dy.data.as_ptr(),
            1,
            dy.cols as isize,
            x.data.as_ptr(),
            x.cols as isize,
            1,
            R::one(),
            acc.data.as_mut_ptr().add(cols.start),
            acc.cols as isize,
            1,
        )
    }
}

/// `out = dy w`, with `dy: n x m`, `w: m x k`, `out: n x k`.
pub fn matmul_nn<R: Real>(dy: &Mat<R>, w: &Mat<R>, out: &mut Mat<R>) {
    matmul_nn_cols(dy, w, 0..w.cols, out);
}

/// `out = dy w[:, cols]`, with `dy: n x m`, `out: n x |cols|`.
pub fn matmul_nn_cols<R: Real>(dy: &Mat<R>, w: &Mat<R>, cols: Range<usize>, out: &mut Mat<R>) {
    assert!(cols.end <= w.cols);
    assert_eq!(dy.cols, w.rows);
    assert_eq!(out.shape(), (dy.rows, cols.len()));
    if out.data.is_empty() {
        return;
    }
    if dy.cols == 0 {
        out.fill(R::zero());
        return;
    }
    unsafe {
        R::gemm(
            dy.rows,
            dy.cols,
            out.cols,
            R::one(),
            dy.data.as_ptr(),
            dy.cols as isize,
            1,
            w.data.as_ptr().add(cols.start),
            w.cols as isize,
            1,
            R::zero(),
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        )
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_helpers_agree_with_naive_products() {
        let x = Mat::<f64>::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5 - 2.0);
        let w = Mat::<f64>::from_fn(2, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let mut y = Mat::zeros(3, 2);
        matmul_nt(&x, &w, &mut y);
        for i in 0..3 {
            for j in 0..2 {
                let e: f64 = (0..4).map(|k| x.get(i, k) * w.get(j, k)).sum();
                assert!((y.get(i, j) - e).abs() < 1e-12);
            }
        }
        let mut acc = Mat::from_fn(2, 4, |_, _| 1.0);
        matmul_tn_acc(&y, &x, &mut acc);
        for i in 0..2 {
            for j in 0..4 {
                let e: f64 = 1.0 + (0..3).map(|k| y.get(k, i) * x.get(k, j)).sum::<f64>();
                assert!((acc.get(i, j) - e).abs() < 1e-9);
            }
        }
        let mut dx = Mat::zeros(3, 4);
        matmul_nn(&y, &w, &mut dx);
        for i in 0..3 {
            for j in 0..4 {
                let e: f64 = (0..2).map(|k| y.get(i, k) * w.get(k, j)).sum();
                assert!((dx.get(i, j) - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn column_block_products_match_full_ones() {
        let x = Mat::<f64>::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.25 - 1.0);
        let w = Mat::<f64>::from_fn(2, 5, |i, j| (i as f64 - 0.5) * (j as f64 + 1.0));
        let mut full = Mat::zeros(3, 2);
        matmul_nt(&x, &w, &mut full);
        let left = Mat::from_fn(3, 2, |i, j| x.get(i, j));
        let right = Mat::from_fn(3, 3, |i, j| x.get(i, j + 2));
        let (mut a, mut b) = (Mat::zeros(3, 2), Mat::zeros(3, 2));
        matmul_nt_cols(&left, &w, 0..2, &mut a);
        matmul_nt_cols(&right, &w, 2..5, &mut b);
        for (f, (p, q)) in full.data().iter().zip(a.data().iter().zip(b.data())) {
            assert!((f - p - q).abs() < 1e-12);
        }

        let mut acc = Mat::zeros(2, 5);
        matmul_tn_acc(&full, &x, &mut acc);
        let mut split = Mat::zeros(2, 5);
        matmul_tn_acc_cols(&full, &left, &mut split, 0..2);
        matmul_tn_acc_cols(&full, &right, &mut split, 2..5);
        assert_eq!(acc, split);

        let mut dx = Mat::zeros(3, 5);
        matmul_nn(&full, &w, &mut dx);
        let mut tail = Mat::zeros(3, 3);
        matmul_nn_cols(&full, &w, 2..5, &mut tail);
        for i in 0..3 {
            assert_eq!(&dx.row(i)[2..], tail.row(i));
        }
    }

    #[test]
    fn empty_batches_are_no_ops() {
        let x = Mat::<f32>::zeros(0, 4);
        let w = Mat::<f32>::from_fn(2, 4, |_, _| 1.0);
        let mut y = Mat::zeros(0, 2);
        matmul_nt(&x, &w, &mut y);
        let mut acc = Mat::zeros(2, 4);
        matmul_tn_acc(&y, &x, &mut acc);
        assert!(acc.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts() {
        let s = [0.3, -1.2, 4.0, 2.5];
        let p = softmax(&s);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = s.iter().map(|v| v + 123.0).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let lp = log_softmax(&s);
        for (a, b) in p.iter().zip(lp) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_f32_tanh_tracks_the_exact_one() {
        let mut worst: f64 = 0.0;
        for i in -20_000..=20_000 {
            let x = i as f64 * 6e-4;
            let err = ((x as f32).tanh_act() as f64 - x.tanh()).abs();
            worst = worst.max(err);
        }
        assert!(worst < 1e-6, "max abs error {worst}");
        assert_eq!(1e-5f32.tanh_act(), 1e-5);
        assert_eq!(50f32.tanh_act(), 1.0);
        assert_eq!((-50f32).tanh_act(), -1.0);
        assert_eq!(0.3f64.tanh_act(), 0.3f64.tanh());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(matches!(
            Mat::<f64>::from_vec(2, 2, vec![1.0; 3]),
            Err(Error::Shape(_))
        ));
    }
}
