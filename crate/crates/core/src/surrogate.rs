//! Surrogate models behind a common fit / update / predict interface.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, Decoder, Encoder};
use crate::dgp::{fit_dgp, DgpFit, MomentSamples};
use crate::error::{Error, Result};
use crate::gp::{conditional_moments, default_theta, GpData, GpSampler, LENGTHSCALE_PRIOR};
use crate::kernel::{factor_correlation, KernelHyper, DETERMINISTIC_NUGGET};

const SURROGATE_MAGIC: &[u8; 8] = b"SURROGAT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurrogateKind {
    #[serde(rename = "dgp-ess")]
    DgpEss,
    #[serde(rename = "gp-mcmc")]
    GpMcmc,
}

impl SurrogateKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::DgpEss => "dgp-ess",
            Self::GpMcmc => "gp-mcmc",
        }
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dgp-ess" => Ok(Self::DgpEss),
            "gp-mcmc" => Ok(Self::GpMcmc),
            other => Err(Error::Config(format!(
                "unknown surrogate `{other}` (expected dgp-ess or gp-mcmc)"
            ))),
        }
    }
}

/// Iteration counts for the initial fit and for each warm-started update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub initial: usize,
    pub burn: usize,
    pub thin: usize,
    pub update: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            initial: 10_000,
            burn: 8_000,
            thin: 4,
            update: 1_000,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("mcmc.thin must be at least 1".into()));
        }
        if self.burn >= self.initial || self.initial - self.burn < self.thin {
            return Err(Error::Config(format!(
                "mcmc settings keep no samples from the initial fit (initial {}, burn {}, thin {})",
                self.initial, self.burn, self.thin
            )));
        }
        if self.update < self.thin {
            return Err(Error::Config(format!(
                "mcmc.update ({}) must be at least mcmc.thin ({})",
                self.update, self.thin
            )));
        }
        Ok(())
    }
}

/// Stationary GP with sampled lengthscales and plug-in scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GpMcmcFit {
    data: GpData,
    chain: Vec<KernelHyper>,
    sampler: GpSampler,
}

impl GpMcmcFit {
    pub fn fit<R: Rng + ?Sized>(data: &GpData, n_iter: usize, burn: usize, thin: usize, rng: &mut R) -> Result<Self> {
        let thin = thin.max(1);
        if burn >= n_iter || n_iter - burn < thin {
            return Err(Error::EmptyChain { n_iter, burn });
        }
        let mut sampler = GpSampler::new(default_theta(data.dim()), DETERMINISTIC_NUGGET, LENGTHSCALE_PRIOR);
        let chain = sampler.run(data, n_iter, burn, thin, true, rng)?;
        Ok(Self {
            data: data.clone(),
            chain,
            sampler,
        })
    }

    pub fn chain(&self) -> &[KernelHyper] {
        &self.chain
    }

    pub fn update<R: Rng + ?Sized>(&mut self, data: &GpData, n_iter: usize, thin: usize, rng: &mut R) -> Result<()> {
        if data.dim() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: data.dim(),
            });
        }
        if n_iter < thin.max(1) {
            return Err(Error::EmptyChain { n_iter, burn: 0 });
        }
        self.data = data.clone();
        self.chain = self.sampler.run(data, n_iter, 0, thin, false, rng)?;
        Ok(())
    }

    pub fn predict_moments(&self, xnew: ArrayView2<f64>) -> Result<MomentSamples> {
        if xnew.ncols() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: xnew.ncols(),
            });
        }
        let (x, y) = (self.data.x(), self.data.y());
        let per_sample = self
            .chain
            .par_iter()
            .map(|h| {
                let (c, _) = factor_correlation(x, &h.theta, h.eta)?;
                Ok(conditional_moments(&c, x, y, xnew, &h.theta, h.tau2, h.eta))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mu, var) = per_sample.into_iter().unzip();
        MomentSamples::new(mu, var)
    }
}

impl Codec for GpMcmcFit {
    fn encode(&self, e: &mut Encoder) {
        e.put(&self.data);
        e.put(&self.sampler);
        e.usize(self.chain.len());
        self.chain.iter().for_each(|h| e.put(h));
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let data = d.get()?;
        let sampler = d.get()?;
        let len = d.usize()?;
        let chain = (0..len).map(|_| d.get()).collect::<Result<Vec<KernelHyper>>>()?;
        Ok(Self { data, chain, sampler })
    }
}

/// A fitted surrogate of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Surrogate {
    Dgp(DgpFit),
    Gp(GpMcmcFit),
}

impl Surrogate {
    pub fn fit<R: Rng + ?Sized>(kind: SurrogateKind, data: &GpData, mcmc: &McmcSettings, rng: &mut R) -> Result<Self> {
        mcmc.validate()?;
        Ok(match kind {
            SurrogateKind::DgpEss => Self::Dgp(fit_dgp(data, mcmc.initial, mcmc.burn, mcmc.thin, rng)?),
            SurrogateKind::GpMcmc => Self::Gp(GpMcmcFit::fit(data, mcmc.initial, mcmc.burn, mcmc.thin, rng)?),
        })
    }

    pub fn kind(&self) -> SurrogateKind {
        match self {
            Self::Dgp(_) => SurrogateKind::DgpEss,
            Self::Gp(_) => SurrogateKind::GpMcmc,
        }
    }

    /// Resume the chain on the augmented data for `mcmc.update` iterations.
    pub fn update<R: Rng + ?Sized>(&mut self, data: &GpData, mcmc: &McmcSettings, rng: &mut R) -> Result<()> {
        match self {
            Self::Dgp(f) => f.update(data, mcmc.update, mcmc.thin, rng),
            Self::Gp(f) => f.update(data, mcmc.update, mcmc.thin, rng),
        }
    }

    pub fn predict_moments(&self, xnew: ArrayView2<f64>) -> Result<MomentSamples> {
        match self {
            Self::Dgp(f) => f.predict_moments(xnew),
            Self::Gp(f) => f.predict_moments(xnew),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_header(SURROGATE_MAGIC);
        e.put(self);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::with_header(bytes, SURROGATE_MAGIC)?;
        let s = d.get()?;
        d.finish()?;
        Ok(s)
    }
}

impl Codec for Surrogate {
    fn encode(&self, e: &mut Encoder) {
        match self {
            Self::Dgp(f) => {
                e.u8(0);
                e.put(f);
            }
            Self::Gp(f) => {
                e.u8(1);
                e.put(f);
            }
        }
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        match d.u8()? {
            0 => Ok(Self::Dgp(d.get()?)),
            1 => Ok(Self::Gp(d.get()?)),
            tag => Err(Error::Checkpoint(format!("unknown surrogate tag {tag}"))),
        }
    }
}
