//! Two-layer deep Gaussian process fit by MCMC.
//!
//! The latent layer `W` has one node per input dimension. Each node is a
//! zero-mean GP over the inputs with unit scale; the outer GP maps `W` to the
//! response with its scale integrated out. A Gibbs sweep updates each node by
//! elliptical slice sampling, then the inner lengthscales of every node, then
//! the outer lengthscales.
//!
//! Prediction warps new inputs through the predictive mean of every node,
//! conditions the outer layer on the warped locations, and summarizes the
//! per-sample moments with the law of total variance.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::codec::{Codec, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::gp::{
    conditional_moments, gaussian_log_density, profile_from_factor, profile_likelihood, retained, GammaPrior, GpData,
    LengthscaleSampler,
};
use crate::kernel::{cross_correlation, factor_correlation, KernelHyper, DETERMINISTIC_NUGGET};
use crate::linalg::Cholesky;

/// Lengthscale prior of the latent nodes.
pub const INNER_PRIOR: GammaPrior = GammaPrior::new(1.5, 3.9 / 4.0);
/// Lengthscale prior of the outer layer (over latent coordinates).
pub const OUTER_PRIOR: GammaPrior = GammaPrior::new(1.5, 3.9 / 6.0);

const INITIAL_THETA: f64 = 0.1;
const BRACKET_TOL: f64 = 1e-12;
const CHAIN_MAGIC: &[u8; 8] = b"DGPCHAIN";

/// `w cos γ + ν sin γ`.
pub fn ellipse_point(w: ArrayView1<f64>, nu: ArrayView1<f64>, gamma: f64) -> Array1<f64> {
    let (s, c) = gamma.sin_cos();
    Array1::from_iter(w.iter().zip(nu.iter()).map(|(a, b)| a * c + b * s))
}

/// One elliptical slice sampling update of `w` under the prior `N(0, L Lᵀ)`.
pub fn ess_step<R, F>(w: ArrayView1<f64>, prior: &Cholesky, mut loglik: F, rng: &mut R) -> Result<Array1<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(ArrayView1<f64>) -> Result<f64>,
{
    let ll = loglik(w)?;
    ess_step_from(w, ll, prior, loglik, rng).map(|(w, _)| w)
}

/// As [`ess_step`], given the log-likelihood at `w`; also returns the
/// log-likelihood of the accepted state.
pub(crate) fn ess_step_from<R, F>(
    w: ArrayView1<f64>,
    ll_w: f64,
    prior: &Cholesky,
    mut loglik: F,
    rng: &mut R,
) -> Result<(Array1<f64>, f64)>
where
    R: Rng + ?Sized,
    F: FnMut(ArrayView1<f64>) -> Result<f64>,
{
    if prior.dim() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            got: w.len(),
        });
    }
    if !ll_w.is_finite() {
        return Err(Error::NonFinite("log-likelihood at the current latent state"));
    }
    let z = Array1::from_iter((0..w.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let nu = prior.mul_lower(z.view());
    let threshold = ll_w + rng.random::<f64>().ln();
    let mut gamma = rng.random::<f64>() * 2.0 * PI;
    let (mut lo, mut hi) = (gamma - 2.0 * PI, gamma);
    loop {
        let proposal = ellipse_point(w, nu.view(), gamma);
        let ll = loglik(proposal.view())?;
        if ll > threshold {
            return Ok((proposal, ll));
        }
        if gamma < 0.0 {
            lo = gamma;
        } else {
            hi = gamma;
        }
        if hi - lo < BRACKET_TOL {
            return Err(Error::BracketCollapsed);
        }
        gamma = lo + rng.random::<f64>() * (hi - lo);
    }
}

/// One retained state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSample {
    /// Latent values at the training inputs, `n × p`.
    pub w: Array2<f64>,
    /// Per-node hyperparameters (unit scale).
    pub inner: Vec<KernelHyper>,
    /// Outer-layer hyperparameters with the plug-in scale.
    pub outer: KernelHyper,
}

/// Current state of the Gibbs sampler, sufficient to resume the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSampler {
    pub(crate) w: Array2<f64>,
    pub(crate) inner: Vec<LengthscaleSampler>,
    pub(crate) outer: LengthscaleSampler,
    pub(crate) eta: f64,
    pub(crate) inner_prior: GammaPrior,
    pub(crate) outer_prior: GammaPrior,
}

impl DgpSampler {
    /// Latent layer initialized at the inputs themselves.
    pub fn new(data: &GpData) -> Self {
        let d = data.dim();
        Self {
            w: data.x().to_owned(),
            inner: (0..d)
                .map(|_| LengthscaleSampler::new(vec![INITIAL_THETA; d]))
                .collect(),
            outer: LengthscaleSampler::new(vec![INITIAL_THETA; d]),
            eta: DETERMINISTIC_NUGGET,
            inner_prior: INNER_PRIOR,
            outer_prior: OUTER_PRIOR,
        }
    }

    pub fn latent(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    fn outer_profile(&self, w: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
        profile_likelihood(w, y, self.outer.theta(), self.eta).map(|p| p.loglik)
    }

    fn snapshot(&self, y: ArrayView1<f64>) -> Result<DgpSample> {
        let tau2 = profile_likelihood(self.w.view(), y, self.outer.theta(), self.eta)?.tau2;
        Ok(DgpSample {
            w: self.w.clone(),
            inner: self
                .inner
                .iter()
                .map(|s| KernelHyper {
                    tau2: 1.0,
                    theta: s.theta().to_vec(),
                    eta: self.eta,
                })
                .collect(),
            outer: KernelHyper {
                tau2,
                theta: self.outer.theta().to_vec(),
                eta: self.eta,
            },
        })
    }

    /// Run `n_iter` Gibbs sweeps and return the retained states.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        data: &GpData,
        n_iter: usize,
        burn: usize,
        thin: usize,
        adapt: bool,
        rng: &mut R,
    ) -> Result<Vec<DgpSample>> {
        if self.w.nrows() != data.n() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                got: self.w.nrows(),
            });
        }
        let thin = thin.max(1);
        let (x, y, eta) = (data.x(), data.y(), self.eta);
        let mut inner_chol = self
            .inner
            .iter()
            .map(|s| factor_correlation(x, s.theta(), eta).map(|(c, _)| c))
            .collect::<Result<Vec<_>>>()?;
        let mut outer_ll = self.outer_profile(self.w.view(), y)?;
        let mut scratch = self.w.clone();
        let mut kept = Vec::new();

        for t in 0..n_iter {
            let adapt_now = adapt && t < burn;
            for (i, chol) in inner_chol.iter().enumerate() {
                let current = self.w.column(i).to_owned();
                let theta = self.outer.theta().to_vec();
                let (next, ll) = ess_step_from(
                    current.view(),
                    outer_ll,
                    chol,
                    |cand| {
                        scratch.column_mut(i).assign(&cand);
                        profile_likelihood(scratch.view(), y, &theta, eta).map(|p| p.loglik)
                    },
                    rng,
                )?;
                self.w.column_mut(i).assign(&next);
                scratch.column_mut(i).assign(&next);
                outer_ll = ll;
            }
            for (i, (sampler, chol)) in self.inner.iter_mut().zip(inner_chol.iter_mut()).enumerate() {
                let wi = self.w.column(i).to_owned();
                let mut ll = gaussian_log_density(chol, wi.view());
                let accepted = sampler.sweep(
                    &mut ll,
                    &self.inner_prior,
                    adapt_now,
                    |theta| {
                        let (c, _) = factor_correlation(x, theta, eta)?;
                        Ok((gaussian_log_density(&c, wi.view()), c))
                    },
                    rng,
                )?;
                if let Some(c) = accepted {
                    *chol = c;
                }
            }
            let w = self.w.view();
            self.outer.sweep(
                &mut outer_ll,
                &self.outer_prior,
                adapt_now,
                |theta| profile_likelihood(w, y, theta, eta).map(|p| (p.loglik, ())),
                rng,
            )?;
            if retained(t, burn, thin) {
                kept.push(self.snapshot(y)?);
            }
        }
        Ok(kept)
    }

    /// Latent values for new inputs under the current state: the predictive
    /// mean of every node.
    fn warp_current(&self, x: ArrayView2<f64>, xnew: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((xnew.nrows(), self.inner.len()));
        for (i, s) in self.inner.iter().enumerate() {
            let (c, _) = factor_correlation(x, s.theta(), self.eta)?;
            let alpha = c.solve(self.w.column(i));
            out.column_mut(i)
                .assign(&cross_correlation(xnew, x, s.theta()).dot(&alpha));
        }
        Ok(out)
    }
}

/// Training data, retained chain, and resumable sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpFit {
    data: GpData,
    chain: Vec<DgpSample>,
    sampler: DgpSampler,
}

/// Fit a two-layer DGP: `n_iter` Gibbs sweeps, the first `burn` discarded
/// (and used to tune proposal steps), then every `thin`-th state kept.
pub fn fit_dgp<R: Rng + ?Sized>(data: &GpData, n_iter: usize, burn: usize, thin: usize, rng: &mut R) -> Result<DgpFit> {
    if data.n() < 2 {
        return Err(Error::InvalidData("a DGP fit needs at least two observations".into()));
    }
    let thin = thin.max(1);
    if burn >= n_iter || n_iter - burn < thin {
        return Err(Error::EmptyChain { n_iter, burn });
    }
    let mut sampler = DgpSampler::new(data);
    let chain = sampler.run(data, n_iter, burn, thin, true, rng)?;
    Ok(DgpFit {
        data: data.clone(),
        chain,
        sampler,
    })
}

impl DgpFit {
    pub fn data(&self) -> &GpData {
        &self.data
    }

    pub fn chain(&self) -> &[DgpSample] {
        &self.chain
    }

    pub fn sampler(&self) -> &DgpSampler {
        &self.sampler
    }

    /// Latent width (equal to the input dimension).
    pub fn p(&self) -> usize {
        self.sampler.inner.len()
    }

    /// Continue the chain on `data`, which must extend the current training
    /// set. Latent values for the new rows start at the current state's
    /// warped locations. Only the new run's samples are retained.
    pub fn update<R: Rng + ?Sized>(&mut self, data: &GpData, n_iter: usize, thin: usize, rng: &mut R) -> Result<()> {
        let n_old = self.data.n();
        if data.n() < n_old
            || data.dim() != self.data.dim()
            || data.x().slice(ndarray::s![..n_old, ..]) != self.data.x()
        {
            return Err(Error::InvalidData("update data must extend the fitted design".into()));
        }
        if n_iter < thin.max(1) {
            return Err(Error::EmptyChain { n_iter, burn: 0 });
        }
        if data.n() > n_old {
            let fresh = data.x().slice(ndarray::s![n_old.., ..]).to_owned();
            let w_new = self.sampler.warp_current(self.data.x(), fresh.view())?;
            self.sampler
                .w
                .append(Axis(0), w_new.view())
                .expect("latent width matches");
        }
        self.data = data.clone();
        self.chain = self.sampler.run(&self.data, n_iter, 0, thin, false, rng)?;
        Ok(())
    }

    /// Map `xnew` through the predictive mean of every node at sample `t`.
    pub fn warp(&self, t: usize, xnew: ArrayView2<f64>) -> Result<Array2<f64>> {
        let s = self.sample(t)?;
        self.check_cols(xnew)?;
        warp_sample(self.data.x(), s, xnew)
    }

    fn sample(&self, t: usize) -> Result<&DgpSample> {
        self.chain
            .get(t)
            .ok_or_else(|| Error::InvalidData(format!("sample {t} out of range ({} stored)", self.chain.len())))
    }

    fn check_cols(&self, xnew: ArrayView2<f64>) -> Result<()> {
        if xnew.ncols() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: xnew.ncols(),
            });
        }
        Ok(())
    }

    /// Per-sample predictive mean and variance at `xnew`.
    pub fn predict_moments(&self, xnew: ArrayView2<f64>) -> Result<MomentSamples> {
        self.check_cols(xnew)?;
        if self.chain.is_empty() {
            return Err(Error::EmptyChain { n_iter: 0, burn: 0 });
        }
        let x = self.data.x();
        let y = self.data.y();
        let per_sample = self
            .chain
            .par_iter()
            .map(|s| {
                let w_new = warp_sample(x, s, xnew)?;
                let (c, _) = factor_correlation(s.w.view(), &s.outer.theta, s.outer.eta)?;
                let tau2 = profile_from_factor(&c, y).tau2;
                Ok(conditional_moments(
                    &c,
                    s.w.view(),
                    y,
                    w_new.view(),
                    &s.outer.theta,
                    tau2,
                    s.outer.eta,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mu, var) = per_sample.into_iter().unzip();
        MomentSamples::new(mu, var)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_header(CHAIN_MAGIC);
        self.encode(&mut e);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::with_header(bytes, CHAIN_MAGIC)?;
        let fit = Self::decode(&mut d)?;
        d.finish()?;
        Ok(fit)
    }
}

fn warp_sample(x: ArrayView2<f64>, s: &DgpSample, xnew: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((xnew.nrows(), s.inner.len()));
    for (i, hyp) in s.inner.iter().enumerate() {
        let (c, _) = factor_correlation(x, &hyp.theta, hyp.eta)?;
        let alpha = c.solve(s.w.column(i));
        out.column_mut(i)
            .assign(&cross_correlation(xnew, x, &hyp.theta).dot(&alpha));
    }
    Ok(out)
}

/// Predictive moments for every retained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSamples {
    pub mu: Vec<Array1<f64>>,
    pub var: Vec<Array1<f64>>,
}

impl MomentSamples {
    pub fn new(mu: Vec<Array1<f64>>, var: Vec<Array1<f64>>) -> Result<Self> {
        if mu.is_empty() || mu.len() != var.len() {
            return Err(Error::InvalidData("moment samples must be nonempty and paired".into()));
        }
        let m = mu[0].len();
        if mu.iter().chain(&var).any(|v| v.len() != m) {
            return Err(Error::InvalidData("moment vectors differ in length".into()));
        }
        if var.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidData("negative or NaN predictive variance".into()));
        }
        Ok(Self { mu, var })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Number of prediction locations.
    pub fn points(&self) -> usize {
        self.mu[0].len()
    }
}

/// Mixture-summarized predictive mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPosterior {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
}

/// Law of total variance over samples: mean of the means, and mean of the
/// variances plus the population variance of the means.
pub fn aggregate(ms: &MomentSamples) -> AggregatedPosterior {
    let t = ms.len() as f64;
    let m = ms.points();
    let mut mu = Array1::<f64>::zeros(m);
    let mut within = Array1::<f64>::zeros(m);
    for (a, v) in ms.mu.iter().zip(&ms.var) {
        mu += a;
        within += v;
    }
    mu /= t;
    within /= t;
    let mut between = Array1::<f64>::zeros(m);
    for a in &ms.mu {
        between.zip_mut_with(&(a - &mu), |b, dev| *b += dev * dev);
    }
    between /= t;
    AggregatedPosterior {
        mu,
        sigma: (within + between).mapv(f64::sqrt),
    }
}

impl Codec for DgpSample {
    fn encode(&self, e: &mut Encoder) {
        e.matrix(&self.w);
        e.usize(self.inner.len());
        self.inner.iter().for_each(|h| e.put(h));
        e.put(&self.outer);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let w = d.matrix()?;
        let p = d.usize()?;
        let inner = (0..p).map(|_| d.get()).collect::<Result<Vec<KernelHyper>>>()?;
        let outer = d.get()?;
        Ok(Self { w, inner, outer })
    }
}

impl Codec for DgpSampler {
    fn encode(&self, e: &mut Encoder) {
        e.matrix(&self.w);
        e.usize(self.inner.len());
        self.inner.iter().for_each(|s| e.put(s));
        e.put(&self.outer);
        e.f64(self.eta);
        e.put(&self.inner_prior);
        e.put(&self.outer_prior);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let w = d.matrix()?;
        let p = d.usize()?;
        let inner = (0..p).map(|_| d.get()).collect::<Result<Vec<LengthscaleSampler>>>()?;
        Ok(Self {
            w,
            inner,
            outer: d.get()?,
            eta: d.f64()?,
            inner_prior: d.get()?,
            outer_prior: d.get()?,
        })
    }
}

impl Codec for DgpFit {
    fn encode(&self, e: &mut Encoder) {
        e.put(&self.data);
        e.put(&self.sampler);
        e.usize(self.chain.len());
        self.chain.iter().for_each(|s| e.put(s));
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let data: GpData = d.get()?;
        let sampler: DgpSampler = d.get()?;
        let len = d.usize()?;
        let chain = (0..len).map(|_| d.get()).collect::<Result<Vec<DgpSample>>>()?;
        if sampler.w.nrows() != data.n() || chain.iter().any(|s| s.w.nrows() != data.n()) {
            return Err(Error::Checkpoint("latent rows disagree with training data".into()));
        }
        Ok(Self { data, chain, sampler })
    }
}
