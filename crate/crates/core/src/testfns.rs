//! Synthetic black-box functions on the unit cube.

use std::f64::consts::SQRT_2;

use crate::acquisition::{Direction, Threshold};
use crate::error::{Error, Result};

/// Largest input dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 8;

/// Default limit state of `crossintray`.
pub const CROSS_IN_TRAY_LIMIT: f64 = -20.0;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Map `[0,1]` to the natural domain `[-2,2]`.
fn unscale(u: f64) -> f64 {
    4.0 * u - 2.0
}

/// Smooth plateau with a sharp ridge along `Σz = -4/3`; `f > 0` fails.
pub fn plateau(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|u| unscale(*u)).sum();
    2.0 * std_normal_cdf(SQRT_2 * (-4.0 - 3.0 * sum)) - 1.0
}

/// Cross-in-tray with the `-0.001` coefficient; `f < -20` fails.
///
/// Values span roughly `[-20.63, -0.001]`, so `-20` rings the four peaks.
pub fn cross_in_tray(x: &[f64]) -> f64 {
    let (z1, z2) = (unscale(x[0]), unscale(x[1]));
    let r = z1.hypot(z2);
    let inner = (z1.sin() * z2.sin() * (100.0 - r / std::f64::consts::PI).abs().exp()).abs();
    -0.001 * (inner + 1.0).powf(0.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Plateau,
    CrossInTray,
}

/// A registered test function with its default threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    id: String,
    dim: usize,
    family: Family,
    threshold: Threshold,
}

impl TestFunction {
    /// Look up `plateau1` … `plateau8` or `crossintray`.
    pub fn by_id(id: &str) -> Result<Self> {
        if id == "crossintray" {
            return Ok(Self {
                id: id.into(),
                dim: 2,
                family: Family::CrossInTray,
                threshold: Threshold {
                    g: CROSS_IN_TRAY_LIMIT,
                    direction: Direction::FailBelow,
                },
            });
        }
        if let Some(d) = id.strip_prefix("plateau").and_then(|s| s.parse::<usize>().ok()) {
            if (1..=MAX_DIM).contains(&d) && id == format!("plateau{d}") {
                return Ok(Self {
                    id: id.into(),
                    dim: d,
                    family: Family::Plateau,
                    threshold: Threshold {
                        g: 0.0,
                        direction: Direction::FailAbove,
                    },
                });
            }
        }
        Err(Error::Config(format!(
            "unknown function `{id}` (expected plateau1..plateau{MAX_DIM} or crossintray)"
        )))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Natural-domain bounds of every coordinate.
    pub fn bounds(&self) -> (f64, f64) {
        (-2.0, 2.0)
    }

    pub fn threshold(&self) -> Threshold {
        self.threshold
    }

    /// Evaluate at a point of the unit cube.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::InvalidData(format!("input {x:?} outside the unit cube")));
        }
        Ok(match self.family {
            Family::Plateau => plateau(x),
            Family::CrossInTray => cross_in_tray(x),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scale(z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| (v + 2.0) / 4.0).collect()
    }

    #[test]
    fn normal_cdf_table() {
        let table = [
            (-8.0, 6.220960574271784e-16),
            (-5.5, 1.8989562465887719e-8),
            (-3.0, 0.0013498980316300946),
            (-1.0, 0.15865525393145705),
            (-0.3, 0.3820885778110474),
            (0.0, 0.5),
            (0.4, 0.6554217416103242),
            (1.7, 0.955434537241457),
            (1.96, 0.9750021048517796),
            (3.3, 0.9995165758576162),
            (6.0, 0.9999999990134124),
            (8.2, 0.9999999999999999),
        ];
        for (z, p) in table {
            assert!((std_normal_cdf(z) - p).abs() < 1e-12, "Φ({z})");
            // Relative accuracy in the lower tail.
            if p < 1e-3 {
                assert!((std_normal_cdf(z) / p - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normal_cdf_symmetry_and_monotonicity() {
        let mut prev = 0.0;
        for i in -400..=400 {
            let z = i as f64 / 40.0;
            let p = std_normal_cdf(z);
            assert!((p - (1.0 - std_normal_cdf(-z))).abs() < 1e-15);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn plateau_examples() {
        assert!(plateau(&scale(&[-2.0 / 3.0, -2.0 / 3.0])).abs() < 1e-15);
        assert!((plateau(&scale(&[-2.0, -2.0])) - 1.0).abs() < 1e-12);
        assert!((plateau(&scale(&[0.0, 0.0])) - -0.9999999845827421).abs() < 1e-15);
    }

    #[test]
    fn cross_in_tray_examples() {
        assert_eq!(cross_in_tray(&scale(&[0.0, 0.0])), -0.001);
        assert_eq!(cross_in_tray(&scale(&[0.0, 1.3])), -0.001);
        let v = cross_in_tray(&scale(&[2.0, 2.0]));
        assert!((v - -19.750849087262144).abs() < 1e-9 * 19.75);
        let v = cross_in_tray(&scale(&[0.7, -1.3]));
        assert!((v - -20.036642666602156).abs() < 1e-9 * 20.0);
    }

    #[test]
    fn registry() {
        let f = TestFunction::by_id("plateau5").unwrap();
        assert_eq!(
            (f.dim(), f.threshold().g, f.threshold().direction),
            (5, 0.0, Direction::FailAbove)
        );
        let c = TestFunction::by_id("crossintray").unwrap();
        assert_eq!(
            (c.dim(), c.threshold().g, c.threshold().direction),
            (2, -20.0, Direction::FailBelow)
        );
        assert_eq!(c.bounds(), (-2.0, 2.0));
        for bad in ["plateau0", "plateau9", "plateau02", "plateau", "branin", "plateau2 "] {
            assert!(TestFunction::by_id(bad).is_err(), "{bad}");
        }
        assert!(f.eval(&[0.5; 4]).is_err());
        assert!(f.eval(&[0.5, 0.5, 0.5, 0.5, 1.01]).is_err());
        assert!(f.eval(&[0.0, 1.0, 0.5, 0.5, 0.5]).unwrap().is_finite());
    }

    #[test]
    fn cross_in_tray_limit_is_nontrivial() {
        // Failure fraction on a 201 x 201 grid: neither empty nor everything.
        let thr = TestFunction::by_id("crossintray").unwrap().threshold();
        let mut fails = 0;
        for i in 0..=200 {
            for j in 0..=200 {
                fails += thr.fails(cross_in_tray(&[i as f64 / 200.0, j as f64 / 200.0])) as usize;
            }
        }
        let frac = fails as f64 / (201.0 * 201.0);
        assert!(frac > 0.3 && frac < 0.45, "{frac}");
        assert!(!thr.fails(cross_in_tray(&[0.5, 0.5])));
    }

    proptest! {
        #[test]
        fn plateau_monotone_nonincreasing(x in prop::collection::vec(0.0f64..=1.0, 3), k in 0usize..3, bump in 0.0f64..=1.0) {
            let mut hi = x.clone();
            hi[k] = x[k] + (1.0 - x[k]) * bump;
            prop_assert!(plateau(&hi) <= plateau(&x));
        }

        #[test]
        fn plateau_range(x in prop::collection::vec(0.0f64..=1.0, 1..=8)) {
            let v = plateau(&x);
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn cross_in_tray_symmetries(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let v = cross_in_tray(&[a, b]);
            prop_assert!(v <= -0.001);
            prop_assert!((v - cross_in_tray(&[b, a])).abs() <= 1e-12 * v.abs());
            prop_assert!((v - cross_in_tray(&[1.0 - a, b])).abs() <= 1e-12 * v.abs());
        }
    }
}
