//! Stationary Gaussian process regression with a zero prior mean.
//!
//! Besides the plain likelihood and predictive equations, this module holds
//! the Metropolis-within-Gibbs machinery used to sample lengthscales. The
//! output scale `τ²` is integrated out under the reference prior `1/τ²`, so
//! chains only move `θ`; predictions plug in `τ̂² = yᵀK⁻¹y / n` where `K` is
//! the unit-scale correlation matrix including the nugget.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codec::{Codec, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::kernel::{cross_correlation, factor_correlation, self_correlation, KernelHyper, DETERMINISTIC_NUGGET};
use crate::linalg::Cholesky;

/// Rows closer than this (max-abs) count as the same input.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// Training inputs on the unit cube with their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct GpData {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl GpData {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidData(
                "design must have at least one row and column".into(),
            ));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training data"));
        }
        let x = x.as_standard_layout().into_owned();
        for i in 1..x.nrows() {
            for j in 0..i {
                if rows_coincide(x.row(i), x.row(j)) {
                    return Err(Error::InvalidData(format!("rows {j} and {i} of the design coincide")));
                }
            }
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn contains_row(&self, row: ArrayView1<f64>) -> bool {
        self.x.rows().into_iter().any(|r| rows_coincide(r, row))
    }

    /// Append one observation, rejecting duplicated inputs.
    pub fn push(&mut self, row: ArrayView1<f64>, y: f64) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        if !y.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("appended observation"));
        }
        if self.contains_row(row) {
            return Err(Error::InvalidData(
                "appended row duplicates an existing design point".into(),
            ));
        }
        self.x.push_row(row).expect("row length checked");
        self.y
            .append(Axis(0), Array1::from_elem(1, y).view())
            .expect("1d append");
        Ok(())
    }
}

fn rows_coincide(a: ArrayView1<f64>, b: ArrayView1<f64>) -> bool {
    a.iter().zip(b.iter()).all(|(u, v)| (u - v).abs() <= DUPLICATE_TOL)
}

/// Predictive moments. `cov` is only filled when the full covariance was requested.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub mu: Array1<f64>,
    pub sigma2: Array1<f64>,
    pub cov: Option<Array2<f64>>,
}

/// `log N(y; 0, A)` given the Cholesky factor of `A`.
pub(crate) fn gaussian_log_density(chol: &Cholesky, y: ArrayView1<f64>) -> f64 {
    let n = y.len() as f64;
    -0.5 * chol.quad_form(y) - 0.5 * chol.logdet() - 0.5 * n * (2.0 * PI).ln()
}

/// `log N(y; 0, Σ(X))` with `Σ` built from `hyp` (nugget on the diagonal).
pub fn log_marginal_likelihood(data: &GpData, hyp: &KernelHyper) -> Result<f64> {
    check_dim(data.dim(), hyp)?;
    let k = self_correlation(data.x(), &hyp.theta, hyp.eta) * hyp.tau2;
    let chol = Cholesky::factor(k.view())?;
    Ok(gaussian_log_density(&chol, data.y()))
}

fn check_dim(d: usize, hyp: &KernelHyper) -> Result<()> {
    hyp.validate()?;
    if hyp.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: hyp.dim(),
        });
    }
    Ok(())
}

/// Posterior predictive moments at the rows of `xnew`.
pub fn predict(data: &GpData, hyp: &KernelHyper, xnew: ArrayView2<f64>, full_cov: bool) -> Result<GpPosterior> {
    check_dim(data.dim(), hyp)?;
    if xnew.ncols() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: xnew.ncols(),
        });
    }
    let (chol, _) = factor_correlation(data.x(), &hyp.theta, hyp.eta)?;
    let moments = conditional_moments(&chol, data.x(), data.y(), xnew, &hyp.theta, hyp.tau2, hyp.eta);
    let cov = if full_cov {
        let cross = cross_correlation(data.x(), xnew, &hyp.theta);
        let mut v = cross.clone();
        for mut col in v.columns_mut() {
            let mut buf = col.to_vec();
            chol.solve_lower_in_place(&mut buf);
            col.assign(&Array1::from(buf));
        }
        let mut prior = self_correlation(xnew, &hyp.theta, hyp.eta);
        prior -= &v.t().dot(&v);
        prior.mapv_inplace(|c| c * hyp.tau2);
        for i in 0..prior.nrows() {
            prior[[i, i]] = prior[[i, i]].max(0.0);
        }
        Some(prior)
    } else {
        None
    };
    Ok(GpPosterior {
        mu: moments.0,
        sigma2: moments.1,
        cov,
    })
}

/// Mean and clamped diagonal variance given a factor of the unit-scale training correlation.
pub(crate) fn conditional_moments(
    chol: &Cholesky,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    xnew: ArrayView2<f64>,
    theta: &[f64],
    tau2: f64,
    eta: f64,
) -> (Array1<f64>, Array1<f64>) {
    let alpha = chol.solve(y);
    let cross = cross_correlation(xnew, x, theta);
    let mu = cross.dot(&alpha);
    let mut buf = vec![0.0; x.nrows()];
    let sigma2 = Array1::from_iter(cross.rows().into_iter().map(|row| {
        buf.iter_mut().zip(row.iter()).for_each(|(b, r)| *b = *r);
        chol.solve_lower_in_place(&mut buf);
        let explained: f64 = buf.iter().map(|v| v * v).sum();
        (tau2 * (1.0 + eta - explained)).max(0.0)
    }));
    (mu, sigma2)
}

/// Likelihood of a lengthscale vector with the scale integrated out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileFit {
    pub loglik: f64,
    pub tau2: f64,
}

/// `log ∫ N(y; 0, τ²K) τ⁻² dτ²` together with `τ̂² = yᵀK⁻¹y / n`.
pub fn profile_likelihood(x: ArrayView2<f64>, y: ArrayView1<f64>, theta: &[f64], eta: f64) -> Result<ProfileFit> {
    let (chol, _) = factor_correlation(x, theta, eta)?;
    Ok(profile_from_factor(&chol, y))
}

pub(crate) fn profile_from_factor(chol: &Cholesky, y: ArrayView1<f64>) -> ProfileFit {
    let n = y.len() as f64;
    let q = chol.quad_form(y).max(f64::MIN_POSITIVE);
    let loglik = libm::lgamma(0.5 * n) - 0.5 * n * (PI * q).ln() - 0.5 * chol.logdet();
    ProfileFit { loglik, tau2: q / n }
}

/// Truncated Gamma prior on a lengthscale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl GammaPrior {
    pub const LOWER: f64 = 1e-4;
    pub const UPPER: f64 = 1e3;

    pub const fn new(shape: f64, rate: f64) -> Self {
        Self {
            shape,
            rate,
            lower: Self::LOWER,
            upper: Self::UPPER,
        }
    }

    /// Unnormalized log density; `-inf` outside the truncation interval.
    pub fn ln_density(&self, v: f64) -> f64 {
        if !(v >= self.lower && v <= self.upper) {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * v.ln() - self.rate * v
    }
}

/// Default lengthscale prior for stationary GPs on unit-cube inputs.
pub const LENGTHSCALE_PRIOR: GammaPrior = GammaPrior::new(1.5, 3.9 / 1.5);

/// Metropolis-Hastings acceptance probability for a log-normal random walk
/// move `old -> new` on one positive coordinate.
pub fn acceptance_probability(ll_old: f64, ll_new: f64, prior: &GammaPrior, old: f64, new: f64) -> f64 {
    let lp_new = prior.ln_density(new);
    if lp_new == f64::NEG_INFINITY || ll_new == f64::NEG_INFINITY {
        return 0.0;
    }
    let log_ratio = ll_new + lp_new + new.ln() - (ll_old + prior.ln_density(old) + old.ln());
    log_ratio.exp().min(1.0)
}

const ADAPT_WINDOW: u32 = 50;
const TARGET_LOW: f64 = 0.30;
const TARGET_HIGH: f64 = 0.45;
pub(crate) const INITIAL_STEP: f64 = 0.3;

/// Coordinate-wise log-normal random walk over a vector of lengthscales.
///
/// Step sizes adapt in windows of 50 proposals, but only when asked to
/// (burn-in); the caller decides when adaptation stops.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthscaleSampler {
    pub(crate) theta: Vec<f64>,
    pub(crate) steps: Vec<f64>,
    pub(crate) window_acc: Vec<u32>,
    pub(crate) window_prop: Vec<u32>,
    pub(crate) accepted: Vec<u64>,
    pub(crate) proposed: Vec<u64>,
}

impl LengthscaleSampler {
    pub fn new(theta: Vec<f64>) -> Self {
        let d = theta.len();
        Self {
            theta,
            steps: vec![INITIAL_STEP; d],
            window_acc: vec![0; d],
            window_prop: vec![0; d],
            accepted: vec![0; d],
            proposed: vec![0; d],
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn accept_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    /// One Gibbs sweep over all coordinates.
    ///
    /// `current` is the log-likelihood at the present `theta` and is kept in
    /// sync. `loglik` returns the log-likelihood of a proposal plus an
    /// auxiliary value (a factorization, a scale estimate); the auxiliary of
    /// the last accepted move is returned, `None` if every move was rejected.
    pub fn sweep<R, T, F>(
        &mut self,
        current: &mut f64,
        prior: &GammaPrior,
        adapt: bool,
        mut loglik: F,
        rng: &mut R,
    ) -> Result<Option<T>>
    where
        R: Rng + ?Sized,
        F: FnMut(&[f64]) -> Result<(f64, T)>,
    {
        let mut last = None;
        for h in 0..self.theta.len() {
            let old = self.theta[h];
            let z: f64 = rng.sample(StandardNormal);
            let new = old * (self.steps[h] * z).exp();
            let u: f64 = rng.random();
            let mut accepted = false;
            if prior.ln_density(new) > f64::NEG_INFINITY {
                self.theta[h] = new;
                let (ll_new, aux) = loglik(&self.theta)?;
                if u.ln() < acceptance_probability(*current, ll_new, prior, old, new).ln() {
                    *current = ll_new;
                    last = Some(aux);
                    accepted = true;
                } else {
                    self.theta[h] = old;
                }
            }
            self.proposed[h] += 1;
            self.accepted[h] += accepted as u64;
            if adapt {
                self.window_prop[h] += 1;
                self.window_acc[h] += accepted as u32;
                if self.window_prop[h] == ADAPT_WINDOW {
                    let rate = self.window_acc[h] as f64 / ADAPT_WINDOW as f64;
                    if rate < TARGET_LOW {
                        self.steps[h] = (self.steps[h] * 0.8).max(0.01);
                    } else if rate > TARGET_HIGH {
                        self.steps[h] = (self.steps[h] * 1.25).min(3.0);
                    }
                    self.window_prop[h] = 0;
                    self.window_acc[h] = 0;
                }
            }
        }
        Ok(last)
    }
}

/// Whether iteration `t` of a run is retained after burn-in and thinning.
/// Keeps the last iteration of every thinning block, so the final state is stored.
pub(crate) fn retained(t: usize, burn: usize, thin: usize) -> bool {
    t >= burn && (t - burn) % thin == thin - 1
}

/// Sampled hyperparameter states and per-lengthscale acceptance rates.
#[derive(Debug, Clone)]
pub struct HyperChain {
    pub samples: Vec<KernelHyper>,
    pub accept_rate: Vec<f64>,
}

/// Resumable lengthscale chain for one stationary GP.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSampler {
    pub(crate) mh: LengthscaleSampler,
    pub(crate) eta: f64,
    pub(crate) prior: GammaPrior,
}

impl GpSampler {
    pub fn new(theta: Vec<f64>, eta: f64, prior: GammaPrior) -> Self {
        Self {
            mh: LengthscaleSampler::new(theta),
            eta,
            prior,
        }
    }

    pub fn theta(&self) -> &[f64] {
        self.mh.theta()
    }

    pub fn accept_rates(&self) -> Vec<f64> {
        self.mh.accept_rates()
    }

    /// Run `n_iter` sweeps on `data`, adapting step sizes during burn-in if
    /// `adapt` is set, and return the retained states.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        data: &GpData,
        n_iter: usize,
        burn: usize,
        thin: usize,
        adapt: bool,
        rng: &mut R,
    ) -> Result<Vec<KernelHyper>> {
        if data.n() < 2 {
            return Err(Error::InvalidData(
                "lengthscale sampling needs at least two observations".into(),
            ));
        }
        if data.dim() != self.mh.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mh.theta.len(),
                got: data.dim(),
            });
        }
        let thin = thin.max(1);
        let (x, y, eta) = (data.x(), data.y(), self.eta);
        let start = profile_likelihood(x, y, &self.mh.theta, eta)?;
        let (mut ll, mut tau2) = (start.loglik, start.tau2);
        let mut kept = Vec::new();
        for t in 0..n_iter {
            let accepted = self.mh.sweep(
                &mut ll,
                &self.prior,
                adapt && t < burn,
                |theta| profile_likelihood(x, y, theta, eta).map(|p| (p.loglik, p.tau2)),
                rng,
            )?;
            if let Some(t2) = accepted {
                tau2 = t2;
            }
            if retained(t, burn, thin) {
                kept.push(KernelHyper {
                    tau2,
                    theta: self.mh.theta.clone(),
                    eta,
                });
            }
        }
        Ok(kept)
    }
}

/// Metropolis-within-Gibbs chain over the lengthscales of `init`, storing
/// every one of the `n_iter` states. The stored `tau2` is the plug-in scale
/// at each state; `init.tau2` is ignored.
pub fn sample_hypers<R: Rng + ?Sized>(
    data: &GpData,
    init: &KernelHyper,
    n_iter: usize,
    rng: &mut R,
) -> Result<HyperChain> {
    check_dim(data.dim(), init)?;
    if n_iter == 0 {
        return Err(Error::InvalidData("n_iter must be at least 1".into()));
    }
    let mut sampler = GpSampler::new(init.theta.clone(), init.eta, LENGTHSCALE_PRIOR);
    let samples = sampler.run(data, n_iter, 0, 1, false, rng)?;
    Ok(HyperChain {
        samples,
        accept_rate: sampler.accept_rates(),
    })
}

/// Starting lengthscales for chains on unit-cube inputs.
pub fn default_theta(d: usize) -> Vec<f64> {
    vec![0.1; d]
}

pub fn default_hyper(d: usize) -> KernelHyper {
    KernelHyper {
        tau2: 1.0,
        theta: default_theta(d),
        eta: DETERMINISTIC_NUGGET,
    }
}

impl Codec for GpData {
    fn encode(&self, e: &mut Encoder) {
        e.matrix(&self.x);
        e.vector(&self.y);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let x = d.matrix()?;
        let y = d.vector()?;
        Self::new(x, y).map_err(|err| Error::Checkpoint(format!("training data: {err}")))
    }
}

impl Codec for GammaPrior {
    fn encode(&self, e: &mut Encoder) {
        [self.shape, self.rate, self.lower, self.upper]
            .iter()
            .for_each(|v| e.f64(*v));
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        Ok(Self {
            shape: d.f64()?,
            rate: d.f64()?,
            lower: d.f64()?,
            upper: d.f64()?,
        })
    }
}

impl Codec for LengthscaleSampler {
    fn encode(&self, e: &mut Encoder) {
        e.f64s(&self.theta);
        e.f64s(&self.steps);
        e.u32s(&self.window_acc);
        e.u32s(&self.window_prop);
        e.u64s(&self.accepted);
        e.u64s(&self.proposed);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let s = Self {
            theta: d.f64s()?,
            steps: d.f64s()?,
            window_acc: d.u32s()?,
            window_prop: d.u32s()?,
            accepted: d.u64s()?,
            proposed: d.u64s()?,
        };
        let n = s.theta.len();
        if [
            s.steps.len(),
            s.window_acc.len(),
            s.window_prop.len(),
            s.accepted.len(),
            s.proposed.len(),
        ]
        .iter()
        .any(|l| *l != n)
        {
            return Err(Error::Checkpoint(
                "lengthscale sampler fields disagree in length".into(),
            ));
        }
        Ok(s)
    }
}

impl Codec for GpSampler {
    fn encode(&self, e: &mut Encoder) {
        e.put(&self.mh);
        e.f64(self.eta);
        e.put(&self.prior);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        Ok(Self {
            mh: d.get()?,
            eta: d.f64()?,
            prior: d.get()?,
        })
    }
}
