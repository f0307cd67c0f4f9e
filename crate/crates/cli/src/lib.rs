//! Experiment driver behind the `dgpcl` binary.
//!
//! Configs are TOML documents deserialized straight into
//! [`ExperimentConfig`]. Repetitions run on a bounded rayon pool and their
//! rows are written in `(rep, iter)` order once every repetition finishes.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use dgpcl::design::default_n_test;
use dgpcl::surrogate::McmcSettings;
use dgpcl::tricands::{default_n_max, subsample_indices, tricands, CandidateSet, Triangulation};
use dgpcl::{
    aggregate, run_sequential, run_static, Direction, Experiment, ExperimentConfig, GpData, RunRecord, Surrogate,
    SurrogateKind, Threshold,
};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Environment variable read for the worker-pool width.
pub const THREADS_ENV: &str = "DGPCL_THREADS";

/// Column names of the result table, in order.
pub const HEADER: [&str; 12] = [
    "rep",
    "iter",
    "n",
    "method",
    "sensitivity",
    "specificity",
    "f1",
    "rmse",
    "crps",
    "fit_time_s",
    "acq_time_s",
    "seed",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<dgpcl::Error> for CliError {
    fn from(e: dgpcl::Error) -> Self {
        match e {
            dgpcl::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// One line of the result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub rep: u64,
    pub iter: usize,
    pub n: usize,
    pub method: String,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub rmse: f64,
    pub crps: f64,
    pub fit_time_s: f64,
    pub acq_time_s: f64,
    pub seed: u64,
}

impl ResultRow {
    fn from_record(rep: u64, method: &str, seed: u64, r: &RunRecord) -> Self {
        Self {
            rep,
            iter: r.iter,
            n: r.n,
            method: method.to_string(),
            sensitivity: r.scores.sensitivity,
            specificity: r.scores.specificity,
            f1: r.scores.f1,
            rmse: r.scores.rmse,
            crps: r.scores.crps,
            fit_time_s: r.fit_time_s,
            acq_time_s: r.acq_time_s,
            seed,
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub no_timings: bool,
    pub checkpoint_dir: Option<PathBuf>,
}

/// Parse a TOML config; unknown keys and bad values are config errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Apply overrides and validate.
pub fn prepare(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<Experiment, CliError> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.no_timings {
        cfg.timings = false;
    }
    Ok(Experiment::new(cfg)?)
}

/// Pool width: explicit option, then the environment, then rayon's default.
pub fn pool_width(explicit: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = explicit {
        return if n == 0 {
            Err(CliError::Config("--threads must be positive".into()))
        } else {
            Ok(n)
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV}={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn pool(width: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Rows from every repetition plus the first failure, if any.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub failure: Option<String>,
}

fn collect(per_rep: Vec<(Vec<ResultRow>, Option<String>)>) -> Outcome {
    let mut rows = Vec::new();
    let mut failure = None;
    for (rep, (r, err)) in per_rep.into_iter().enumerate() {
        rows.extend(r);
        if failure.is_none() {
            failure = err.map(|e| format!("repetition {rep}: {e}"));
        }
    }
    Outcome { rows, failure }
}

/// All sequential repetitions of `exp`.
pub fn run_all(exp: &Experiment, opts: &RunOptions) -> Result<Outcome, CliError> {
    run_all_with(exp, opts, |_, x| exp.function.eval(x))
}

/// As [`run_all`] with a custom objective, called with the repetition index.
pub fn run_all_with<F>(exp: &Experiment, opts: &RunOptions, f: F) -> Result<Outcome, CliError>
where
    F: Fn(u64, &[f64]) -> dgpcl::Result<f64> + Sync,
{
    use rayon::prelude::*;
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let cfg = &exp.config;
    let method = cfg.method();
    let per_rep = pool(pool_width(opts.threads)?)?.install(|| {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map(|rep| {
                let ckpt = opts.checkpoint_dir.as_ref().map(|d| d.join(format!("rep{rep}.ckpt")));
                let (records, err) = match run_sequential(exp, rep, |x| f(rep, x), ckpt.as_deref()) {
                    Ok(r) => (r, None),
                    Err(p) => (p.records, Some(p.error.to_string())),
                };
                let rows = records
                    .iter()
                    .map(|r| ResultRow::from_record(rep, &method, cfg.seed, r))
                    .collect();
                (rows, err)
            })
            .collect::<Vec<_>>()
    });
    Ok(collect(per_rep))
}

/// All static-LHS repetitions of `exp`, one row each.
pub fn static_all(exp: &Experiment, opts: &RunOptions) -> Result<Outcome, CliError> {
    use rayon::prelude::*;
    let cfg = &exp.config;
    let method = cfg.static_method();
    let per_rep = pool(pool_width(opts.threads)?)?.install(|| {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map(|rep| match run_static(exp, rep, |x| exp.function.eval(x)) {
                Ok(r) => (vec![ResultRow::from_record(rep, &method, cfg.seed, &r)], None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            })
            .collect::<Vec<_>>()
    });
    Ok(collect(per_rep))
}

pub fn write_rows<W: Write>(rows: &[ResultRow], w: W) -> Result<(), CliError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Write to `path`, or stdout when absent.
pub fn emit(rows: &[ResultRow], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => write_rows(rows, io::BufWriter::new(fs::File::create(p)?)),
        None => write_rows(rows, io::stdout().lock()),
    }
}

/// Median of each metric over repetitions, per `(method, iter)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub iter: usize,
    pub n: usize,
    pub reps: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub rmse: f64,
    pub crps: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = rows.iter().map(|r| (r.method.clone(), r.iter)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(method, iter)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method && r.iter == iter).collect();
            let med = |f: fn(&ResultRow) -> f64| median(&mut group.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                n: group[0].n,
                reps: group.len(),
                sensitivity: med(|r| r.sensitivity),
                specificity: med(|r| r.specificity),
                f1: med(|r| r.f1),
                rmse: med(|r| r.rmse),
                crps: med(|r| r.crps),
                method,
                iter,
            }
        })
        .collect()
}

/// Read a result table written by [`write_rows`].
pub fn read_rows<R: Read>(r: R) -> Result<Vec<ResultRow>, CliError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(CliError::Runtime(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i]
                .parse()
                .map_err(|_| CliError::Runtime(format!("bad number {:?} in column {}", &rec[i], HEADER[i])))
        };
        let int = |i: usize| -> Result<u64, CliError> {
            rec[i]
                .parse()
                .map_err(|_| CliError::Runtime(format!("bad integer {:?} in column {}", &rec[i], HEADER[i])))
        };
        rows.push(ResultRow {
            rep: int(0)?,
            iter: int(1)? as usize,
            n: int(2)? as usize,
            method: rec[3].to_string(),
            sensitivity: num(4)?,
            specificity: num(5)?,
            f1: num(6)?,
            rmse: num(7)?,
            crps: num(8)?,
            fit_time_s: num(9)?,
            acq_time_s: num(10)?,
            seed: int(11)?,
        });
    }
    Ok(rows)
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], w: W) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// A numeric CSV: an optional header line, then rows of equal width.
pub fn read_matrix<R: Read>(r: R) -> Result<Array2<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let parsed = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(_) => return Err(CliError::Runtime(format!("non-numeric value on line {}", line + 1))),
        };
        match width {
            None => width = Some(parsed.len()),
            Some(w) if w != parsed.len() => {
                return Err(CliError::Runtime(format!(
                    "line {} has {} columns, expected {w}",
                    line + 1,
                    parsed.len()
                )))
            }
            _ => {}
        }
        if parsed.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Runtime(format!("non-finite value on line {}", line + 1)));
        }
        values.extend(parsed);
        rows += 1;
    }
    let width = width.ok_or_else(|| CliError::Runtime("empty CSV".into()))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("consistent shape"))
}

/// Settings of the `tricands` subcommand.
#[derive(Debug, Clone)]
pub struct TricandsOptions {
    pub alpha: f64,
    pub n_max: Option<usize>,
    /// Treat the last column as the response.
    pub response: bool,
    pub threshold: f64,
    pub seed: u64,
}

/// Candidates for a design, sub-sampled to `n_max` when a response is given.
pub fn candidates_for(design: &Array2<f64>, opts: &TricandsOptions) -> Result<(Triangulation, CandidateSet), CliError> {
    let (x, y) = if opts.response {
        if design.ncols() < 2 {
            return Err(CliError::Runtime(
                "a response column needs at least one input column".into(),
            ));
        }
        let d = design.ncols() - 1;
        (
            design.slice(ndarray::s![.., ..d]).to_owned(),
            Some(design.column(d).to_owned()),
        )
    } else {
        (design.clone(), None)
    };
    let (tri, cands) = tricands(x.view(), opts.alpha)?;
    let n_max = opts.n_max.unwrap_or_else(|| default_n_max(x.ncols()));
    if cands.len() <= n_max {
        return Ok((tri, cands));
    }
    let y = y.ok_or_else(|| {
        CliError::Runtime(format!(
            "{} candidates exceed n_max = {n_max}; sub-sampling needs a response column",
            cands.len()
        ))
    })?;
    let thr = Threshold::new(opts.threshold, Direction::FailAbove)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let keep = subsample_indices(&cands, &tri, y.view(), &thr, n_max, &mut rng)?.kept;
    let sub = CandidateSet {
        x: cands.x.select(ndarray::Axis(0), &keep),
        origin: keep.iter().map(|&k| cands.origin[k]).collect(),
    };
    Ok((tri, sub))
}

/// Settings of the `predict` subcommand.
#[derive(Debug, Clone)]
pub struct PredictOptions {
    pub surrogate: SurrogateKind,
    pub mcmc: McmcSettings,
    pub seed: u64,
}

/// Fit once on `design` (inputs then response) and predict at `points`.
pub fn predict(
    design: &Array2<f64>,
    points: &Array2<f64>,
    opts: &PredictOptions,
) -> Result<(Array1<f64>, Array1<f64>), CliError> {
    let d = design
        .ncols()
        .checked_sub(1)
        .filter(|d| *d > 0)
        .ok_or_else(|| CliError::Runtime("design needs input columns followed by a response column".into()))?;
    if points.ncols() != d {
        return Err(CliError::Runtime(format!(
            "points have {} columns, design has {d} inputs",
            points.ncols()
        )));
    }
    opts.mcmc.validate()?;
    let data = GpData::new(
        design.slice(ndarray::s![.., ..d]).to_owned(),
        design.column(d).to_owned(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let model = Surrogate::fit(opts.surrogate, &data, &opts.mcmc, &mut rng)?;
    let agg = aggregate(&model.predict_moments(points.view())?);
    Ok((agg.mu, agg.sigma))
}

pub fn write_predictions<W: Write>(mu: &Array1<f64>, sigma: &Array1<f64>, w: W) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mu", "sigma"])?;
    for (m, s) in mu.iter().zip(sigma) {
        out.write_record([m.to_string(), s.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Short human-readable description of a validated experiment.
pub fn describe(exp: &Experiment) -> String {
    let c = &exp.config;
    format!(
        "{} d={} n0={} budget={} reps={} seed={} method={} n_max={} n_test={} (default {})",
        c.function,
        exp.dim(),
        c.n0,
        c.budget,
        c.reps,
        c.seed,
        c.method(),
        exp.n_max,
        exp.n_test,
        default_n_test(exp.dim())
    )
}
