//! Classification and probabilistic scores on a held-out test set.

use log::warn;

use crate::acquisition::Threshold;
use crate::error::{Error, Result};
use crate::testfns::{std_normal_cdf, std_normal_pdf};

/// Confusion counts for predicted failure against true failure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

pub fn classify(f_true: &[f64], mu: &[f64], thr: &Threshold) -> Result<Confusion> {
    check_len(f_true.len(), mu.len())?;
    let mut c = Confusion::default();
    for (f, m) in f_true.iter().zip(mu) {
        match (thr.fails(*f), thr.fails(*m)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize, what: &str) -> f64 {
    if den == 0 {
        warn!("{what} is undefined on this test set; reporting 1.0");
        return 1.0;
    }
    num as f64 / den as f64
}

pub fn sensitivity(c: &Confusion) -> f64 {
    ratio(c.tp, c.tp + c.fn_, "sensitivity (no true failures)")
}

pub fn specificity(c: &Confusion) -> f64 {
    ratio(c.tn, c.tn + c.fp, "specificity (no true passes)")
}

pub fn f1(c: &Confusion) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, "F1 (no failures true or predicted)")
}

pub fn rmse(y_true: &[f64], mu: &[f64]) -> Result<f64> {
    check_len(y_true.len(), mu.len())?;
    if y_true.is_empty() {
        return Err(Error::InvalidData("RMSE of an empty test set".into()));
    }
    let sse: f64 = y_true.iter().zip(mu).map(|(y, m)| (y - m) * (y - m)).sum();
    Ok((sse / y_true.len() as f64).sqrt())
}

/// Mean continuous ranked probability score of Gaussian predictions.
pub fn crps(y_true: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    check_len(y_true.len(), mu.len())?;
    check_len(y_true.len(), sigma.len())?;
    if y_true.is_empty() {
        return Err(Error::InvalidData("CRPS of an empty test set".into()));
    }
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let mut total = 0.0;
    for ((y, m), s) in y_true.iter().zip(mu).zip(sigma) {
        if !(*s > 0.0) {
            return Err(Error::InvalidData(format!("CRPS needs positive sigma, got {s}")));
        }
        let z = (y - m) / s;
        total += s * (2.0 * std_normal_pdf(z) + z * (2.0 * std_normal_cdf(z) - 1.0) - inv_sqrt_pi);
    }
    Ok(total / y_true.len() as f64)
}
