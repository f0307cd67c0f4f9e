//! Contour location for expensive black-box simulators.
//!
//! A two-layer Bayesian deep Gaussian process (or a stationary GP with
//! sampled lengthscales) is fit by MCMC. Candidates are placed from a
//! Delaunay triangulation of the current design, scored by entropy of the
//! pass/fail classification and by predictive standard deviation, and the
//! next run is drawn uniformly from the Pareto front of those two scores.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod codec;
pub mod design;
pub mod dgp;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod surrogate;
pub mod testfns;
pub mod tricands;

pub use acquisition::{AcquisitionKind, CandidateScores, Direction, Threshold};
pub use design::{run_sequential, run_static, Experiment, ExperimentConfig, RunRecord};
pub use dgp::{aggregate, fit_dgp, AggregatedPosterior, DgpFit, DgpSample, MomentSamples};
pub use error::{Error, Result};
pub use gp::{GpData, GpPosterior, HyperChain};
pub use kernel::KernelHyper;
pub use linalg::Cholesky;
pub use surrogate::{McmcSettings, Surrogate, SurrogateKind};
pub use testfns::TestFunction;
