//! Anisotropic Matérn-5/2 covariance.
//!
//! Lengthscales divide squared coordinate differences, and the kernel is
//! evaluated at `r = sqrt(Σ_h (x_h - x'_h)² / θ_h)`. Covariances take the
//! form `τ² (k(r) + η 1{i = j})`. Inputs are expected on the unit cube;
//! nothing here rescales them.

use log::warn;
use ndarray::{Array2, ArrayView2};

use crate::codec::{Codec, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Nugget used for interpolating deterministic simulators.
pub const DETERMINISTIC_NUGGET: f64 = 1e-6;

/// Multiplier applied to the nugget for the single Cholesky retry.
pub const JITTER_INFLATION: f64 = 100.0;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Scale `tau2`, per-dimension lengthscales `theta`, nugget `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyper {
    pub tau2: f64,
    pub theta: Vec<f64>,
    pub eta: f64,
}

impl KernelHyper {
    pub fn new(tau2: f64, theta: Vec<f64>, eta: f64) -> Result<Self> {
        let hyp = Self { tau2, theta, eta };
        hyp.validate()?;
        Ok(hyp)
    }

    /// Hyperparameters with the nugget pinned for deterministic simulators.
    pub fn deterministic(tau2: f64, theta: Vec<f64>) -> Result<Self> {
        Self::new(tau2, theta, DETERMINISTIC_NUGGET)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau2 > 0.0) || !self.tau2.is_finite() {
            return Err(Error::InvalidHyper(format!("tau2 must be positive, got {}", self.tau2)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidHyper(format!("eta must be positive, got {}", self.eta)));
        }
        if self.theta.is_empty() {
            return Err(Error::InvalidHyper("theta is empty".into()));
        }
        if let Some(t) = self.theta.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidHyper(format!("lengthscale must be positive, got {t}")));
        }
        Ok(())
    }
}

/// `Σ_h (x_h - x2_h)² / θ_h`.
pub fn scaled_sq_dist(x: &[f64], x2: &[f64], theta: &[f64]) -> Result<f64> {
    if x.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: x.len(),
        });
    }
    if x2.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: x2.len(),
        });
    }
    Ok(sq_dist_unchecked(x, x2, theta))
}

#[inline]
pub(crate) fn sq_dist_unchecked(x: &[f64], x2: &[f64], theta: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .zip(theta)
        .map(|((a, b), t)| {
            let d = a - b;
            d * d / t
        })
        .sum()
}

pub fn matern52(r2: f64) -> Result<f64> {
    if r2 < 0.0 || r2.is_nan() {
        return Err(Error::NegativeDistance(r2));
    }
    Ok(matern52_unchecked(r2))
}

#[inline]
pub(crate) fn matern52_unchecked(r2: f64) -> f64 {
    let r = r2.sqrt();
    (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * (-SQRT5 * r).exp()
}

/// Covariance between the rows of `x` and `x2`.
///
/// `add_nugget` declares `x2` to be the same point set as `x`, so the
/// diagonal picks up `τ² η`. Cross-covariances are requested with
/// `add_nugget = false` and never see the nugget, even when rows coincide.
pub fn kernel_matrix(
    x: ArrayView2<f64>,
    x2: ArrayView2<f64>,
    hyp: &KernelHyper,
    add_nugget: bool,
) -> Result<Array2<f64>> {
    let d = hyp.dim();
    for cols in [x.ncols(), x2.ncols()] {
        if cols != d {
            return Err(Error::DimensionMismatch { expected: d, got: cols });
        }
    }
    if add_nugget && x.nrows() != x2.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: x2.nrows(),
        });
    }
    let mut k = cross_correlation(x, x2, &hyp.theta);
    if add_nugget {
        k.diag_mut().mapv_inplace(|v| v + hyp.eta);
    }
    k.mapv_inplace(|v| v * hyp.tau2);
    Ok(k)
}

/// Unit-scale correlation between two row sets (no nugget).
pub(crate) fn cross_correlation(x: ArrayView2<f64>, x2: ArrayView2<f64>, theta: &[f64]) -> Array2<f64> {
    let x = x.as_standard_layout();
    let x2 = x2.as_standard_layout();
    let d = theta.len();
    let xs = x.as_slice().expect("standard layout");
    let x2s = x2.as_slice().expect("standard layout");
    let (n, m) = (x.nrows(), x2.nrows());
    let mut out = Array2::<f64>::zeros((n, m));
    let os = out.as_slice_mut().expect("fresh array");
    for i in 0..n {
        let xi = &xs[i * d..(i + 1) * d];
        for j in 0..m {
            let r2 = sq_dist_unchecked(xi, &x2s[j * d..(j + 1) * d], theta);
            os[i * m + j] = matern52_unchecked(r2);
        }
    }
    out
}

/// Unit-scale symmetric correlation of a row set, diagonal set to `1 + eta`.
pub(crate) fn self_correlation(x: ArrayView2<f64>, theta: &[f64], eta: f64) -> Array2<f64> {
    let x = x.as_standard_layout();
    let d = theta.len();
    let xs = x.as_slice().expect("standard layout");
    let n = x.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    let os = out.as_slice_mut().expect("fresh array");
    for i in 0..n {
        os[i * n + i] = 1.0 + eta;
        let xi = &xs[i * d..(i + 1) * d];
        for j in 0..i {
            let v = matern52_unchecked(sq_dist_unchecked(xi, &xs[j * d..(j + 1) * d], theta));
            os[i * n + j] = v;
            os[j * n + i] = v;
        }
    }
    out
}

/// Factor the unit-scale correlation matrix `K + η I` of `x`.
///
/// On failure the nugget is inflated by [`JITTER_INFLATION`] for one retry;
/// the nugget actually used is returned alongside the factor.
pub(crate) fn factor_correlation(x: ArrayView2<f64>, theta: &[f64], eta: f64) -> Result<(Cholesky, f64)> {
    let mut k = self_correlation(x, theta, eta);
    match Cholesky::factor(k.view()) {
        Ok(c) => Ok((c, eta)),
        Err(Error::NotPositiveDefinite { pivot }) => {
            let inflated = eta * JITTER_INFLATION;
            warn!("cholesky failed at pivot {pivot}; retrying with nugget {inflated:e}");
            k.diag_mut().fill(1.0 + inflated);
            Cholesky::factor(k.view()).map(|c| (c, inflated))
        }
        Err(e) => Err(e),
    }
}

impl Codec for KernelHyper {
    fn encode(&self, e: &mut Encoder) {
        e.f64(self.tau2);
        e.f64s(&self.theta);
        e.f64(self.eta);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        Ok(Self {
            tau2: d.f64()?,
            theta: d.f64s()?,
            eta: d.f64()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    const MATERN_AT_ONE: f64 = 0.523_994_108_831_820_3;

    #[test]
    fn distance_examples() {
        assert_eq!(scaled_sq_dist(&[0.3, 0.7], &[0.3, 0.7], &[0.2, 5.0]).unwrap(), 0.0);
        assert_eq!(scaled_sq_dist(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((scaled_sq_dist(&[1.0, 2.0], &[0.0, 0.0], &[0.5, 2.0]).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(
            scaled_sq_dist(&[1.0], &[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matern_examples() {
        assert_eq!(matern52(0.0).unwrap(), 1.0);
        assert!((matern52(1.0).unwrap() - MATERN_AT_ONE).abs() < 1e-15);
        assert!(matern52(1e6).unwrap() < 1e-200);
        assert!(matches!(matern52(-1e-3), Err(Error::NegativeDistance(_))));
    }

    #[test]
    fn kernel_matrix_nugget_rules() {
        let hyp = KernelHyper::deterministic(2.0, vec![1.0]).unwrap();
        let x = array![[0.4]];
        let k = kernel_matrix(x.view(), x.view(), &hyp, true).unwrap();
        assert!((k[[0, 0]] - 2.0 * (1.0 + 1e-6)).abs() < 1e-15);

        let other = array![[0.4]];
        let kc = kernel_matrix(x.view(), other.view(), &hyp, false).unwrap();
        assert_eq!(kc[[0, 0]], 2.0);

        let unit = KernelHyper::deterministic(1.0, vec![1.0, 1.0]).unwrap();
        let two = array![[0.0, 0.0], [1.0, 0.0]];
        let k2 = kernel_matrix(two.view(), two.view(), &unit, true).unwrap();
        assert!((k2[[0, 1]] - MATERN_AT_ONE).abs() < 1e-15);
        assert_eq!(k2[[0, 1]], k2[[1, 0]]);

        assert!(kernel_matrix(two.view(), x.view(), &unit, false).is_err());
    }

    #[test]
    fn hyper_validation() {
        assert!(KernelHyper::new(0.0, vec![1.0], 1e-6).is_err());
        assert!(KernelHyper::new(1.0, vec![1.0, -0.1], 1e-6).is_err());
        assert!(KernelHyper::new(1.0, vec![1.0], 0.0).is_err());
        assert!(KernelHyper::new(1.0, vec![], 1e-6).is_err());
        assert_eq!(KernelHyper::deterministic(1.0, vec![0.5]).unwrap().eta, 1e-6);
    }

    #[test]
    fn jitter_retry_inflates_nugget() {
        // Coincident rows with a nugget too small to survive rounding.
        let x = array![[0.5], [0.5], [0.5]];
        let (c, used) = factor_correlation(x.view(), &[1.0], 1e-17).unwrap();
        assert_eq!(used, 1e-17 * JITTER_INFLATION);
        assert_eq!(c.dim(), 3);
        assert!(factor_correlation(x.view(), &[1.0], 1e-20).is_err());
    }

    proptest! {
        #[test]
        fn matern_in_unit_interval_and_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (klo, khi) = (matern52(lo).unwrap(), matern52(hi).unwrap());
            prop_assert!(klo > 0.0 && klo <= 1.0);
            prop_assert!(khi <= klo);
        }

        #[test]
        fn kernel_matrices_factor(seed in 0u64..1000, n in 2usize..30, d in 1usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
            let theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..2.0)).collect();
            let hyp = KernelHyper::deterministic(rng.random_range(0.1..5.0), theta).unwrap();
            let k = kernel_matrix(x.view(), x.view(), &hyp, true).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((k[[i, j]] - k[[j, i]]).abs() <= 1e-12 * k[[i, i]]);
                }
            }
            prop_assert!(Cholesky::factor(k.view()).is_ok());
        }
    }
}
