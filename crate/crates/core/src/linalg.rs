//! Dense Cholesky factorization of symmetric positive definite matrices.
//!
//! Only the lower triangle of the input is read. The factor is stored as a
//! row-major lower-triangular matrix so that forward substitution walks
//! contiguous rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factor `a = L Lᵀ`. Fails on the first non-positive (or non-finite) pivot.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut l = Array2::<f64>::zeros((n, n));
        {
            let ls = l.as_slice_mut().expect("fresh array is contiguous");
            for i in 0..n {
                for j in 0..=i {
                    let (ri, rj) = (i * n, j * n);
                    let s = a[[i, j]] - dot(&ls[ri..ri + j], &ls[rj..rj + j]);
                    if i == j {
                        if !(s > 0.0) || !s.is_finite() {
                            return Err(Error::NotPositiveDefinite { pivot: i });
                        }
                        ls[ri + i] = s.sqrt();
                    } else {
                        ls[ri + j] = s / ls[rj + j];
                    }
                }
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.l
    }

    /// Forward substitution: returns `L⁻¹ b`.
    pub fn solve_lower(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let mut out = b.to_owned();
        self.solve_lower_in_place(out.as_slice_mut().expect("owned vector is contiguous"));
        out
    }

    pub(crate) fn solve_lower_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let ls = self.l.as_slice().expect("factor is contiguous");
        for i in 0..n {
            let row = &ls[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / ls[i * n + i];
        }
    }

    fn solve_upper_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        let ls = self.l.as_slice().expect("factor is contiguous");
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= ls[k * n + i] * x[k];
            }
            x[i] = s / ls[i * n + i];
        }
    }

    /// Returns `A⁻¹ b`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let mut out = b.to_owned();
        let xs = out.as_slice_mut().expect("owned vector is contiguous");
        self.solve_lower_in_place(xs);
        self.solve_upper_in_place(xs);
        out
    }

    /// `log |A| = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `L z`, used to turn standard normal draws into correlated ones.
    pub fn mul_lower(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let ls = self.l.as_slice().expect("factor is contiguous");
        Array1::from_shape_fn(n, |i| (0..=i).map(|k| ls[i * n + k] * z[k]).sum())
    }

    /// Squared Mahalanobis norm `bᵀ A⁻¹ b`.
    pub fn quad_form(&self, b: ArrayView1<f64>) -> f64 {
        let v = self.solve_lower(b);
        v.dot(&v)
    }
}
