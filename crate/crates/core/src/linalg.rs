//! Small dense-matrix helpers.
//!
//! Every kernel here computes each output element with a fixed summation
//! order that does not depend on how many rows are processed together, so a
//! sentence produces bit-identical scores whether it is decoded alone or in a
//! padded batch.

use serde::{Deserialize, Serialize};

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec: bad length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "Mat::from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self · other`, written row by row.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for (k, &a) in self.row(r).iter().enumerate() {
                if a != 0.0 {
                    axpy(dst, a, other.row(k));
                }
            }
        }
        out
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha · x`
#[inline]
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y += W · x` for `W` of shape `[y.len() × x.len()]`.
#[inline]
pub fn gemv_add(w: &Mat, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.cols(), x.len());
    debug_assert_eq!(w.rows(), y.len());
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += dot(w.row(i), x);
    }
}

/// `y += W[rows] · x`, restricted to a contiguous block of rows of `W`.
#[inline]
pub fn gemv_rows_add(w: &Mat, row0: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.cols(), x.len());
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += dot(w.row(row0 + i), x);
    }
}

/// `y += W[rows]ᵀ · v` where the block starts at `row0` and has `v.len()` rows.
#[inline]
pub fn gemv_t_rows_add(w: &Mat, row0: usize, v: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.cols(), y.len());
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            axpy(y, vi, w.row(row0 + i));
        }
    }
}

/// `G[row0 + i] += v[i] · x` (rank-one update on a block of rows).
#[inline]
pub fn outer_rows_add(g: &mut Mat, row0: usize, v: &[f64], x: &[f64]) {
    debug_assert_eq!(g.cols(), x.len());
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            axpy(g.row_mut(row0 + i), vi, x);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-sum-exp over the finite entries of `xs`; `-inf` for an empty or
/// all-`-inf` input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn l2_norm_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn transpose_product_matches_matmul() {
        let w = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 4.0]]);
        let v = [2.0, -3.0];
        let mut y = vec![0.0; 3];
        gemv_t_rows_add(&w, 0, &v, &mut y);
        assert_eq!(y, vec![5.0, 2.5, -6.0]);

        let x = Mat::from_rows(&[vec![2.0, -3.0]]);
        assert_eq!(x.matmul(&w).row(0), &[5.0, 2.5, -6.0]);
    }

    #[test]
    fn logsumexp_handles_infinities() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = logsumexp(&[0.0, f64::NEG_INFINITY]);
        assert!(v.abs() < 1e-15);
        let big = logsumexp(&[1000.0, 1000.0]);
        assert!((big - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
