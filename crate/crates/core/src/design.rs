//! Sequential contour-location designs and static baselines.
//!
//! A sequential run starts from a Latin hypercube, then repeats: score
//! triangulation candidates under the current surrogate, pick one, evaluate
//! it, and warm-start the chain on the augmented data. Every iteration is
//! scored on a held-out Latin hypercube test set.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    mcmc_entropy, posthoc_entropy, select_from, AcquisitionKind, CandidateScores, Threshold, SIGMA_FLOOR,
};
use crate::codec::{fnv1a, Codec, Decoder, Encoder};
use crate::dgp::aggregate;
use crate::error::{Error, Result};
use crate::gp::GpData;
use crate::metrics::{classify, crps, f1, rmse, sensitivity, specificity};
use crate::surrogate::{McmcSettings, Surrogate, SurrogateKind};
use crate::testfns::TestFunction;
use crate::tricands::{default_n_max, subsample_indices, tricands, CandidateSet, Origin, DEFAULT_ALPHA};

const CHECKPOINT_MAGIC: &[u8; 8] = b"DGPCLRUN";
const TEST_SET_CAP: usize = 5000;

/// Which entropy feeds the acquisition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    /// From the aggregated mean and standard deviation.
    #[default]
    Posthoc,
    /// Averaged over per-sample predictive distributions.
    Mcmc,
}

fn default_surrogate() -> SurrogateKind {
    SurrogateKind::DgpEss
}

fn default_acquisition() -> AcquisitionKind {
    AcquisitionKind::Pareto
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_true() -> bool {
    true
}

/// Everything that defines an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub function: String,
    /// Input dimension; implied by the function and only checked if given.
    #[serde(default)]
    pub d: Option<usize>,
    /// Overrides the function's default limit state.
    #[serde(default)]
    pub threshold: Option<Threshold>,
    pub n0: usize,
    pub budget: usize,
    #[serde(default = "default_surrogate")]
    pub surrogate: SurrogateKind,
    #[serde(default = "default_acquisition")]
    pub acquisition: AcquisitionKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Candidate cap; `100 d` if absent.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub mcmc: McmcSettings,
    /// Test-set size; `round(4500 d / 7)` capped at 5000 if absent.
    #[serde(default)]
    pub n_test: Option<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub entropy: EntropyMode,
    /// Record wall-clock timings (otherwise written as zero).
    #[serde(default = "default_true")]
    pub timings: bool,
}

impl ExperimentConfig {
    /// Defaults for everything but the required keys.
    pub fn new(function: &str, n0: usize, budget: usize, reps: usize, seed: u64) -> Self {
        Self {
            function: function.into(),
            d: None,
            threshold: None,
            n0,
            budget,
            surrogate: default_surrogate(),
            acquisition: default_acquisition(),
            alpha: DEFAULT_ALPHA,
            n_max: None,
            mcmc: McmcSettings::default(),
            n_test: None,
            reps,
            seed,
            entropy: EntropyMode::default(),
            timings: true,
        }
    }

    /// Label used in result tables, e.g. `dgp-ess-pareto`.
    pub fn method(&self) -> String {
        format!("{}-{}", self.surrogate, self.acquisition)
    }

    /// Label of the static arm, e.g. `dgp-ess-static`.
    pub fn static_method(&self) -> String {
        format!("{}-static", self.surrogate)
    }

    fn fingerprint(&self) -> u64 {
        // Neither field changes what a single repetition computes.
        let key = Self {
            reps: 0,
            timings: true,
            ..self.clone()
        };
        fnv1a(format!("{key:?}").as_bytes())
    }
}

/// Default held-out test-set size for dimension `d`.
pub fn default_n_test(d: usize) -> usize {
    ((4500.0 * d as f64 / 7.0).round() as usize).min(TEST_SET_CAP)
}

/// A validated configuration with its defaults resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub function: TestFunction,
    pub threshold: Threshold,
    pub n_max: usize,
    pub n_test: usize,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let function = TestFunction::by_id(&config.function)?;
        let d = function.dim();
        let bad = |msg: String| Err(Error::Config(msg));
        if let Some(cd) = config.d {
            if cd != d {
                return bad(format!(
                    "d = {cd} does not match function `{}` (d = {d})",
                    config.function
                ));
            }
        }
        if config.n0 < d + 1 {
            return bad(format!("n0 = {} must be at least d + 1 = {}", config.n0, d + 1));
        }
        if config.budget < config.n0 {
            return bad(format!("budget = {} is smaller than n0 = {}", config.budget, config.n0));
        }
        if !(0.0..=1.0).contains(&config.alpha) {
            return bad(format!("alpha = {} must lie in [0, 1]", config.alpha));
        }
        if config.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        let n_max = config.n_max.unwrap_or_else(|| default_n_max(d));
        let n_test = config.n_test.unwrap_or_else(|| default_n_test(d));
        if n_max == 0 || n_test == 0 {
            return bad("n_max and n_test must be at least 1".into());
        }
        config.mcmc.validate()?;
        let threshold = match config.threshold {
            Some(t) => Threshold::new(t.g, t.direction).map_err(|e| Error::Config(format!("threshold: {e}")))?,
            None => function.threshold(),
        };
        Ok(Self {
            config,
            function,
            threshold,
            n_max,
            n_test,
        })
    }

    pub fn dim(&self) -> usize {
        self.function.dim()
    }
}

/// Latin hypercube: each column visits every stratum `[i/n, (i+1)/n)` once.
pub fn lhs<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Array2<f64> {
    let mut x = Array2::zeros((n, d));
    let mut perm: Vec<usize> = (0..n).collect();
    for h in 0..d {
        perm.shuffle(rng);
        for (i, p) in perm.iter().enumerate() {
            x[[i, h]] = (*p as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    x
}

/// Test-set scores for one fitted surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub rmse: f64,
    pub crps: f64,
}

/// One row of a run: state after fitting on `n` points, and the acquisition
/// made from it (absent once the budget is spent).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iter: usize,
    pub n: usize,
    pub acquired: Option<Vec<f64>>,
    pub origin: Option<Origin>,
    pub scores: Scores,
    pub fit_time_s: f64,
    pub acq_time_s: f64,
    /// Fingerprint of the (sub-sampled) candidate set, when one was built.
    pub candidate_hash: Option<u64>,
    pub n_candidates: usize,
}

/// A failed run with the records completed before the failure.
#[derive(Debug)]
pub struct PartialRun {
    pub records: Vec<RunRecord>,
    pub error: Error,
}

impl fmt::Display for PartialRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run failed after {} records: {}", self.records.len(), self.error)
    }
}

impl std::error::Error for PartialRun {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Independent generators for one repetition, derived from the global seed
/// on stream `rep`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepStreams {
    pub test: ChaCha8Rng,
    pub design: ChaCha8Rng,
    pub mcmc: ChaCha8Rng,
    pub candidates: ChaCha8Rng,
    pub selection: ChaCha8Rng,
}

impl RepStreams {
    pub fn new(seed: u64, rep: u64) -> Self {
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        root.set_stream(rep);
        let mut child = || ChaCha8Rng::seed_from_u64(root.next_u64());
        Self {
            test: child(),
            design: child(),
            mcmc: child(),
            candidates: child(),
            selection: child(),
        }
    }
}

struct TestSet {
    x: Array2<f64>,
    f: Vec<f64>,
}

fn eval_point<F>(f: &F, x: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let v = f(x)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("black-box response"));
    }
    Ok(v)
}

fn evaluate<F>(f: &F, x: ArrayView2<f64>) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    x.rows().into_iter().map(|r| eval_point(f, &r.to_vec())).collect()
}

fn score(model: &Surrogate, test: &TestSet, thr: &Threshold) -> Result<Scores> {
    let agg = aggregate(&model.predict_moments(test.x.view())?);
    let mu = agg.mu.to_vec();
    let sigma: Vec<f64> = agg.sigma.iter().map(|s| s.max(SIGMA_FLOOR)).collect();
    let c = classify(&test.f, &mu, thr)?;
    Ok(Scores {
        sensitivity: sensitivity(&c),
        specificity: specificity(&c),
        f1: f1(&c),
        rmse: rmse(&test.f, &mu)?,
        crps: crps(&test.f, &mu, &sigma)?,
    })
}

fn elapsed(start: Instant, on: bool) -> f64 {
    if on {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

struct Acquisition {
    point: Vec<f64>,
    origin: Origin,
    hash: u64,
    n_candidates: usize,
}

fn acquire(
    exp: &Experiment,
    model: &Surrogate,
    data: &GpData,
    candidates_rng: &mut ChaCha8Rng,
    selection_rng: &mut ChaCha8Rng,
) -> Result<Acquisition> {
    let cfg = &exp.config;
    let (tri, all) = tricands(data.x(), cfg.alpha)?;
    let keep = subsample_indices(&all, &tri, data.y(), &exp.threshold, exp.n_max, candidates_rng)?.kept;
    let cands = all.x.select(Axis(0), &keep);
    let origins: Vec<Origin> = keep.iter().map(|&k| all.origin[k]).collect();
    let hash = CandidateSet {
        x: cands.clone(),
        origin: origins.clone(),
    }
    .fingerprint();

    let ms = model.predict_moments(cands.view())?;
    let agg = aggregate(&ms);
    let entropy = match cfg.entropy {
        EntropyMode::Posthoc => posthoc_entropy(&agg, &exp.threshold)?,
        EntropyMode::Mcmc => mcmc_entropy(&ms, &exp.threshold)?,
    };
    let scores = CandidateScores::new(cands, entropy, agg.sigma)?;

    let fresh = |i: &usize| !data.contains_row(scores.x.row(*i));
    let eligible: Vec<usize> = scores.eligible(cfg.acquisition).into_iter().filter(fresh).collect();
    let pick = if eligible.is_empty() {
        log::warn!("every eligible candidate duplicates the design; taking the largest-sigma fresh candidate");
        (0..scores.len())
            .filter(fresh)
            .max_by(|&a, &b| scores.sigma[a].total_cmp(&scores.sigma[b]).then(b.cmp(&a)))
            .ok_or_else(|| Error::Degenerate("every candidate duplicates an existing design point".into()))?
    } else {
        select_from(&eligible, selection_rng)?
    };
    Ok(Acquisition {
        point: scores.x.row(pick).to_vec(),
        origin: origins[pick],
        hash,
        n_candidates: scores.len(),
    })
}

fn test_set<F>(exp: &Experiment, streams: &mut RepStreams, f: &F) -> Result<TestSet>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let x = lhs(exp.n_test, exp.dim(), &mut streams.test);
    let fx = evaluate(f, x.view())?;
    Ok(TestSet { x, f: fx })
}

/// State of a sequential run between iterations.
#[derive(Debug, Clone, PartialEq)]
struct RunState {
    fingerprint: u64,
    rep: u64,
    data: GpData,
    model: Surrogate,
    streams: RepStreams,
    records: Vec<RunRecord>,
    pending_fit_time: f64,
}

/// Sequential design for repetition `rep`: `budget - n0 + 1` records.
///
/// With `checkpoint`, the run state is written there after every iteration,
/// and an existing file there is resumed from (bit-exactly, apart from
/// timings).
pub fn run_sequential<F>(
    exp: &Experiment,
    rep: u64,
    f: F,
    checkpoint: Option<&Path>,
) -> std::result::Result<Vec<RunRecord>, PartialRun>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut records = Vec::new();
    match sequential(exp, rep, &f, checkpoint, &mut records) {
        Ok(()) => Ok(records),
        Err(error) => Err(PartialRun { records, error }),
    }
}

fn sequential<F>(exp: &Experiment, rep: u64, f: &F, checkpoint: Option<&Path>, out: &mut Vec<RunRecord>) -> Result<()>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let cfg = &exp.config;
    let timings = cfg.timings;
    let resumed = match checkpoint {
        Some(path) if path.exists() => Some(load_state(path, cfg.fingerprint(), rep)?),
        _ => None,
    };
    let mut streams = RepStreams::new(cfg.seed, rep);
    let test = test_set(exp, &mut streams, f)?;
    let mut state = match resumed {
        Some(s) => s,
        None => {
            let x0 = lhs(cfg.n0, exp.dim(), &mut streams.design);
            let y0 = evaluate(f, x0.view())?;
            let data = GpData::new(x0, Array1::from(y0))?;
            let start = Instant::now();
            let model = Surrogate::fit(cfg.surrogate, &data, &cfg.mcmc, &mut streams.mcmc)?;
            RunState {
                fingerprint: cfg.fingerprint(),
                rep,
                data,
                model,
                streams,
                records: Vec::new(),
                pending_fit_time: elapsed(start, timings),
            }
        }
    };
    out.clone_from(&state.records);

    while state.records.len() < cfg.budget - cfg.n0 + 1 {
        let iter = state.records.len();
        let scores = score(&state.model, &test, &exp.threshold)?;
        let mut record = RunRecord {
            iter,
            n: state.data.n(),
            acquired: None,
            origin: None,
            scores,
            fit_time_s: state.pending_fit_time,
            acq_time_s: 0.0,
            candidate_hash: None,
            n_candidates: 0,
        };
        if state.data.n() < cfg.budget {
            let start = Instant::now();
            let RepStreams {
                candidates, selection, ..
            } = &mut state.streams;
            let acq = acquire(exp, &state.model, &state.data, candidates, selection)?;
            record.acq_time_s = elapsed(start, timings);
            let y_new = eval_point(f, &acq.point)?;
            record.acquired = Some(acq.point.clone());
            record.origin = Some(acq.origin);
            record.candidate_hash = Some(acq.hash);
            record.n_candidates = acq.n_candidates;
            out.push(record.clone());
            state.records.push(record);

            state.data.push(ArrayView1::from(&acq.point), y_new)?;
            let start = Instant::now();
            state.model.update(&state.data, &cfg.mcmc, &mut state.streams.mcmc)?;
            state.pending_fit_time = elapsed(start, timings);
        } else {
            out.push(record.clone());
            state.records.push(record);
        }
        if let Some(path) = checkpoint {
            save_state(path, &state)?;
        }
    }
    Ok(())
}

/// One LHS of the full budget and a single fit.
pub fn run_static<F>(exp: &Experiment, rep: u64, f: F) -> Result<RunRecord>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let cfg = &exp.config;
    let mut streams = RepStreams::new(cfg.seed, rep);
    let test = test_set(exp, &mut streams, &f)?;
    let x = lhs(cfg.budget, exp.dim(), &mut streams.design);
    let y = evaluate(&f, x.view())?;
    let data = GpData::new(x, Array1::from(y))?;
    let start = Instant::now();
    let model = Surrogate::fit(cfg.surrogate, &data, &cfg.mcmc, &mut streams.mcmc)?;
    let fit_time_s = elapsed(start, cfg.timings);
    Ok(RunRecord {
        iter: 0,
        n: data.n(),
        acquired: None,
        origin: None,
        scores: score(&model, &test, &exp.threshold)?,
        fit_time_s,
        acq_time_s: 0.0,
        candidate_hash: None,
        n_candidates: 0,
    })
}

fn save_state(path: &Path, state: &RunState) -> Result<()> {
    let mut e = Encoder::with_header(CHECKPOINT_MAGIC);
    e.put(state);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, e.finish())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_state(path: &Path, fingerprint: u64, rep: u64) -> Result<RunState> {
    let bytes = fs::read(path)?;
    let mut d = Decoder::with_header(&bytes, CHECKPOINT_MAGIC)?;
    let state: RunState = d.get()?;
    d.finish()?;
    if state.fingerprint != fingerprint || state.rep != rep {
        return Err(Error::Checkpoint(format!(
            "{} belongs to a different configuration or repetition",
            path.display()
        )));
    }
    Ok(state)
}

impl Codec for ChaCha8Rng {
    fn encode(&self, e: &mut Encoder) {
        e.bytes(&self.get_seed());
        e.u64(self.get_stream());
        e.u128(self.get_word_pos());
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let seed: [u8; 32] = d
            .bytes()?
            .try_into()
            .map_err(|_| Error::Checkpoint("bad generator seed".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(d.u64()?);
        rng.set_word_pos(d.u128()?);
        Ok(rng)
    }
}

impl Codec for RepStreams {
    fn encode(&self, e: &mut Encoder) {
        for r in [&self.test, &self.design, &self.mcmc, &self.candidates, &self.selection] {
            e.put(r);
        }
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        Ok(Self {
            test: d.get()?,
            design: d.get()?,
            mcmc: d.get()?,
            candidates: d.get()?,
            selection: d.get()?,
        })
    }
}

impl Codec for RunRecord {
    fn encode(&self, e: &mut Encoder) {
        e.usize(self.iter);
        e.usize(self.n);
        match &self.acquired {
            Some(p) => {
                e.u8(1);
                e.f64s(p);
            }
            None => e.u8(0),
        }
        match &self.origin {
            Some(o) => {
                e.u8(1);
                e.put(o);
            }
            None => e.u8(0),
        }
        let s = &self.scores;
        [
            s.sensitivity,
            s.specificity,
            s.f1,
            s.rmse,
            s.crps,
            self.fit_time_s,
            self.acq_time_s,
        ]
        .iter()
        .for_each(|v| e.f64(*v));
        match self.candidate_hash {
            Some(h) => {
                e.u8(1);
                e.u64(h);
            }
            None => e.u8(0),
        }
        e.usize(self.n_candidates);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let iter = d.usize()?;
        let n = d.usize()?;
        let acquired = if d.u8()? == 1 { Some(d.f64s()?) } else { None };
        let origin = if d.u8()? == 1 { Some(d.get()?) } else { None };
        let scores = Scores {
            sensitivity: d.f64()?,
            specificity: d.f64()?,
            f1: d.f64()?,
            rmse: d.f64()?,
            crps: d.f64()?,
        };
        let fit_time_s = d.f64()?;
        let acq_time_s = d.f64()?;
        let candidate_hash = if d.u8()? == 1 { Some(d.u64()?) } else { None };
        let n_candidates = d.usize()?;
        Ok(Self {
            iter,
            n,
            acquired,
            origin,
            scores,
            fit_time_s,
            acq_time_s,
            candidate_hash,
            n_candidates,
        })
    }
}

impl Codec for RunState {
    fn encode(&self, e: &mut Encoder) {
        e.u64(self.fingerprint);
        e.u64(self.rep);
        e.put(&self.data);
        e.put(&self.model);
        e.put(&self.streams);
        e.usize(self.records.len());
        self.records.iter().for_each(|r| e.put(r));
        e.f64(self.pending_fit_time);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let fingerprint = d.u64()?;
        let rep = d.u64()?;
        let data = d.get()?;
        let model = d.get()?;
        let streams = d.get()?;
        let len = d.usize()?;
        let records = (0..len).map(|_| d.get()).collect::<Result<Vec<RunRecord>>>()?;
        let pending_fit_time = d.f64()?;
        Ok(Self {
            fingerprint,
            rep,
            data,
            model,
            streams,
            records,
            pending_fit_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(function: &str, n0: usize, budget: usize) -> Experiment {
        let mut cfg = ExperimentConfig::new(function, n0, budget, 1, 7);
        cfg.mcmc = McmcSettings {
            initial: 120,
            burn: 60,
            thin: 6,
            update: 30,
        };
        cfg.n_test = Some(200);
        cfg.timings = false;
        Experiment::new(cfg).unwrap()
    }

    fn plateau(x: &[f64]) -> Result<f64> {
        Ok(crate::testfns::plateau(x))
    }

    #[test]
    fn lhs_stratification() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = lhs(4, 2, &mut rng);
        for h in 0..2 {
            let mut strata: Vec<usize> = x.column(h).iter().map(|v| (v * 4.0).floor() as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, vec![0, 1, 2, 3]);
        }
        let one = lhs(1, 3, &mut rng);
        assert!(one.iter().all(|v| *v > 0.0 && *v < 1.0));
        assert_eq!(
            lhs(6, 2, &mut ChaCha8Rng::seed_from_u64(1)),
            lhs(6, 2, &mut ChaCha8Rng::seed_from_u64(1))
        );
    }

    #[test]
    fn test_set_defaults() {
        assert_eq!(default_n_test(2), 1286);
        assert_eq!(default_n_test(7), 4500);
        assert_eq!(default_n_test(8), 5000);
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::new("plateau2", 5, 30, 1, 7);
        assert!(Experiment::new(ok.clone()).is_ok());
        let e = Experiment::new(ok.clone()).unwrap();
        assert_eq!((e.n_max, e.n_test, e.threshold.g), (200, 1286, 0.0));
        for bad in [
            ExperimentConfig {
                budget: 4,
                ..ok.clone()
            },
            ExperimentConfig { n0: 2, ..ok.clone() },
            ExperimentConfig {
                alpha: 1.5,
                ..ok.clone()
            },
            ExperimentConfig { reps: 0, ..ok.clone() },
            ExperimentConfig {
                d: Some(3),
                ..ok.clone()
            },
            ExperimentConfig {
                function: "nope".into(),
                ..ok.clone()
            },
            ExperimentConfig {
                mcmc: McmcSettings {
                    burn: 20_000,
                    ..McmcSettings::default()
                },
                ..ok.clone()
            },
        ] {
            assert!(matches!(Experiment::new(bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn budget_equal_to_n0_gives_one_record() {
        let exp = quick("plateau2", 6, 6);
        let recs = run_sequential(&exp, 0, plateau, None).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!((recs[0].iter, recs[0].n), (0, 6));
        assert!(recs[0].acquired.is_none());
    }

    #[test]
    fn sequential_run_grows_design() {
        let exp = quick("plateau2", 5, 9);
        let recs = run_sequential(&exp, 0, plateau, None).unwrap();
        assert_eq!(recs.len(), 5);
        for (k, r) in recs.iter().enumerate() {
            assert_eq!((r.iter, r.n), (k, 5 + k));
            let s = &r.scores;
            for v in [s.sensitivity, s.specificity, s.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(s.rmse >= 0.0 && s.crps >= 0.0);
            assert_eq!(r.fit_time_s, 0.0);
            if k < 4 {
                let p = r.acquired.as_ref().unwrap();
                assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
                assert!(r.n_candidates > 0);
            }
        }
        assert!(recs[4].acquired.is_none());
        let again = run_sequential(&exp, 0, plateau, None).unwrap();
        assert_eq!(recs, again);
        let other_rep = run_sequential(&exp, 1, plateau, None).unwrap();
        assert_ne!(recs, other_rep);
    }

    #[test]
    fn selection_strategy_only_changes_selection() {
        let pareto = quick("plateau2", 5, 7);
        let mut cfg = pareto.config.clone();
        cfg.acquisition = AcquisitionKind::RandomCandidate;
        let random = Experiment::new(cfg).unwrap();
        let a = run_sequential(&pareto, 0, plateau, None).unwrap();
        let b = run_sequential(&random, 0, plateau, None).unwrap();
        assert_eq!(a[0].candidate_hash, b[0].candidate_hash);
        assert_eq!(a[0].scores, b[0].scores);
    }

    #[test]
    fn failures_keep_partial_records() {
        let exp = quick("plateau2", 5, 9);
        let calls = std::cell::Cell::new(0);
        let flaky = |x: &[f64]| {
            calls.set(calls.get() + 1);
            // Test set, initial design, then two acquisitions succeed.
            if calls.get() > 200 + 5 + 2 {
                Err(Error::InvalidData("simulator crashed".into()))
            } else {
                plateau(x)
            }
        };
        let err = run_sequential(&exp, 0, flaky, None).unwrap_err();
        assert_eq!(err.records.len(), 2);
        assert!(err.to_string().contains("simulator crashed"));
    }

    #[test]
    fn resume_from_checkpoint_is_exact() {
        let dir = std::env::temp_dir().join(format!("dgpcl-design-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rep0.ckpt");
        let _ = fs::remove_file(&path);
        let exp = quick("plateau2", 5, 9);
        let full = run_sequential(&exp, 0, plateau, None).unwrap();

        let calls = std::cell::Cell::new(0);
        let crash = |x: &[f64]| {
            calls.set(calls.get() + 1);
            if calls.get() > 200 + 5 + 3 {
                Err(Error::InvalidData("interrupted".into()))
            } else {
                plateau(x)
            }
        };
        let partial = run_sequential(&exp, 0, crash, Some(&path)).unwrap_err();
        assert_eq!(partial.records.len(), 3);
        let resumed = run_sequential(&exp, 0, plateau, Some(&path)).unwrap();
        assert_eq!(resumed, full);

        let mut other = exp.config.clone();
        other.seed = 8;
        let other = Experiment::new(other).unwrap();
        assert!(run_sequential(&other, 0, plateau, Some(&path)).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn static_run_is_deterministic() {
        let exp = quick("plateau2", 5, 12);
        let a = run_static(&exp, 0, plateau).unwrap();
        assert_eq!((a.iter, a.n), (0, 12));
        assert_eq!(a, run_static(&exp, 0, plateau).unwrap());
    }
}
