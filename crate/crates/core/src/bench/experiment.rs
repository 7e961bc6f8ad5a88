//! Sweep execution and CSV output.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::analysis::metrics::{nmse_mmv, support_recovered, to_db};
use crate::bench::config::{ExperimentConfig, Solver};
use crate::error::{Error, Result};
use crate::mmv::{uamp_sbl_mmv, uamp_tsbl};
use crate::model::{unitary_transform, ProblemInstance, TransformedModel};
use crate::rng;
use crate::sbl::{support_oracle_mmse, tipping_sbl, uamp_sbl, PriorParams, RecoveryResult, SblConfig, TippingOptions};
use crate::uamp::{StopRule, Variant};

/// Largest noise precision handed to solvers that take it as known.
pub const MAX_KNOWN_BETA: f64 = 1e12;

pub const CSV_HEADER: &str =
    "sweep_value,trial,solver,nmse_db,support_recovery,iterations,runtime_s,converged,epsilon_final";

/// One row of the results table. `None` is written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub trial: usize,
    pub solver: Solver,
    pub nmse_db: Option<f64>,
    pub support_recovery: Option<bool>,
    pub iterations: Option<usize>,
    pub runtime_s: Option<f64>,
    pub converged: Option<bool>,
    pub epsilon_final: Option<f64>,
}

fn field<T: std::fmt::Display>(out: &mut String, v: Option<T>) {
    match v {
        Some(v) => {
            let _ = write!(out, ",{v}");
        }
        None => out.push_str(",NA"),
    }
}

impl TrialRecord {
    pub fn csv_line(&self) -> String {
        let mut out = format!("{},{},{}", self.sweep_value, self.trial, self.solver.as_str());
        field(&mut out, self.nmse_db);
        field(&mut out, self.support_recovery.map(u8::from));
        field(&mut out, self.iterations);
        field(&mut out, self.runtime_s);
        field(&mut out, self.converged);
        field(&mut out, self.epsilon_final);
        out
    }
}

pub fn to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn write_csv(records: &[TrialRecord], mut w: impl Write) -> std::io::Result<()> {
    w.write_all(to_csv(records).as_bytes())
}

/// What one solver produced on one instance.
struct Outcome {
    x: Option<DMatrix<f64>>,
    iterations: Option<usize>,
    converged: Option<bool>,
    epsilon: Option<f64>,
    runtime_s: f64,
}

impl Outcome {
    fn from_result(result: Result<RecoveryResult>, runtime_s: f64) -> Self {
        match result {
            Ok(r) => Self {
                x: Some(r.x),
                iterations: Some(r.iterations),
                converged: Some(r.converged),
                epsilon: Some(r.epsilon_final),
                runtime_s,
            },
            Err(Error::Diverged { iteration, last_finite, .. }) => Self {
                x: Some(*last_finite),
                iterations: Some(iteration),
                converged: Some(false),
                epsilon: None,
                runtime_s,
            },
            Err(_) => Self { x: None, iterations: None, converged: Some(false), epsilon: None, runtime_s },
        }
    }

    /// Joins per-column single-vector runs into one MMV outcome.
    fn join(parts: Vec<Outcome>) -> Self {
        let runtime_s = parts.iter().map(|p| p.runtime_s).sum();
        let cols: Option<Vec<DMatrix<f64>>> = parts.iter().map(|p| p.x.clone()).collect();
        let x = cols.map(|c| {
            let vecs: Vec<DVector<f64>> = c.iter().map(|m| m.column(0).into_owned()).collect();
            DMatrix::from_columns(&vecs)
        });
        let iterations =
            parts.iter().map(|p| p.iterations).collect::<Option<Vec<_>>>().and_then(|v| v.into_iter().max());
        let converged = parts.iter().map(|p| p.converged).collect::<Option<Vec<_>>>().map(|v| v.iter().all(|&c| c));
        let epsilon =
            parts.iter().map(|p| p.epsilon).collect::<Option<Vec<_>>>().map(|v| v.iter().sum::<f64>() / v.len() as f64);
        Self { x, iterations, converged, epsilon, runtime_s }
    }
}

fn sbl_config(stop: StopRule, variant: Variant) -> SblConfig {
    SblConfig { stop, variant, ..SblConfig::default() }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn per_column(
    model: &TransformedModel,
    svd_s: f64,
    run: impl Fn(&TransformedModel) -> Result<RecoveryResult>,
) -> Outcome {
    let parts = (0..model.num_vectors())
        .map(|l| {
            let single = model.single_column(l);
            let (res, secs) = timed(|| run(&single));
            Outcome::from_result(res, secs)
        })
        .collect();
    let mut out = Outcome::join(parts);
    out.runtime_s += svd_s;
    out
}

fn run_solver(
    solver: Solver,
    stop: StopRule,
    temporal_corr: f64,
    inst: &ProblemInstance,
    model: &TransformedModel,
    svd_s: f64,
) -> Outcome {
    let beta = inst.beta_true.min(MAX_KNOWN_BETA);
    let tipping = |auto_eps: bool| {
        let options = TippingOptions { prior: PriorParams::default(), auto_eps, stop, ..Default::default() };
        let parts = (0..inst.y.ncols())
            .map(|l| {
                let y = inst.y.column(l).into_owned();
                let (res, secs) = timed(|| tipping_sbl(&inst.a, &y, beta, &options));
                Outcome::from_result(res, secs)
            })
            .collect();
        Outcome::join(parts)
    };
    match solver {
        Solver::UampSbl => per_column(model, svd_s, |m| uamp_sbl(m, &sbl_config(stop, Variant::V2)).map(|r| r.0)),
        Solver::UampSblV1 => per_column(model, svd_s, |m| uamp_sbl(m, &sbl_config(stop, Variant::V1)).map(|r| r.0)),
        Solver::TippingSbl => tipping(false),
        Solver::TippingSblAutoEps => tipping(true),
        Solver::UampSblMmv => {
            let (res, secs) = timed(|| uamp_sbl_mmv(model, &sbl_config(stop, Variant::V2)).map(|r| r.0));
            Outcome::from_result(res, secs + svd_s)
        }
        Solver::UampTsbl => {
            let (res, secs) = timed(|| uamp_tsbl(model, temporal_corr, &sbl_config(stop, Variant::V2)).map(|r| r.0));
            Outcome::from_result(res, secs + svd_s)
        }
        Solver::Oracle => {
            let (cols, secs) = timed(|| {
                (0..inst.y.ncols())
                    .map(|l| support_oracle_mmse(&inst.a, &inst.y.column(l).into_owned(), &inst.support, beta, 1.0))
                    .collect::<Result<Vec<_>>>()
            });
            Outcome {
                x: cols.ok().map(|c| DMatrix::from_columns(&c)),
                iterations: None,
                converged: None,
                epsilon: None,
                runtime_s: secs,
            }
        }
    }
}

/// Seed of the instance for sweep point `sweep_index`, trial `trial`.
pub fn trial_seed(master: u64, sweep_index: usize, trial: usize) -> u64 {
    rng::derive(master, &[sweep_index as u64, trial as u64])
}

/// Scores of one solver on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub solver: Solver,
    pub nmse_db: Option<f64>,
    pub support_recovery: Option<bool>,
    pub iterations: Option<usize>,
    pub runtime_s: f64,
    pub converged: Option<bool>,
    pub epsilon_final: Option<f64>,
}

/// Runs `solvers` on `inst`, sharing one SVD. Runtimes of the UAMP solvers
/// include the SVD. `temporal_corr` is the correlation handed to UAMP-TSBL.
pub fn evaluate(
    solvers: &[Solver],
    inst: &ProblemInstance,
    stop: StopRule,
    temporal_corr: f64,
) -> Result<Vec<Evaluation>> {
    let (model, svd_s) = timed(|| unitary_transform(&inst.a, &inst.y));
    let model = model?;
    let row_norms = |x: &DMatrix<f64>| DVector::from_fn(x.nrows(), |i, _| x.row(i).norm());
    Ok(solvers
        .iter()
        .map(|&solver| {
            let out = run_solver(solver, stop, temporal_corr, inst, &model, svd_s);
            Evaluation {
                solver,
                nmse_db: out.x.as_ref().and_then(|x| nmse_mmv(x, &inst.x).ok()).map(to_db),
                support_recovery: out.x.as_ref().map(|x| support_recovered(&row_norms(x), &inst.support)),
                iterations: out.iterations,
                runtime_s: out.runtime_s,
                converged: out.converged,
                epsilon_final: out.epsilon,
            }
        })
        .collect())
}

/// Runs every configured solver on one generated instance.
pub fn run_trial(config: &ExperimentConfig, sweep_index: usize, trial: usize) -> Result<Vec<TrialRecord>> {
    let spec = config.matrix_spec(sweep_index)?;
    let seed = trial_seed(config.seed, sweep_index, trial);
    let inst = ProblemInstance::generate(&spec, &config.signal_spec(), config.snr_db, seed)?;
    Ok(evaluate(&config.solvers, &inst, config.stop, config.signal.temporal_corr)?
        .into_iter()
        .map(|e| TrialRecord {
            sweep_index,
            sweep_value: config.sweep_values()[sweep_index],
            trial,
            solver: e.solver,
            nmse_db: e.nmse_db,
            support_recovery: e.support_recovery,
            iterations: e.iterations,
            runtime_s: config.record_runtime.then_some(e.runtime_s),
            converged: e.converged,
            epsilon_final: e.epsilon_final,
        })
        .collect())
}

/// Runs the whole sweep on `config.threads` workers. Rows come back ordered
/// by sweep point, then trial, then the configured solver order, so the
/// output does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..config.sweep_values().len()).flat_map(|s| (0..config.trials).map(move |t| (s, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let nested: Vec<Vec<TrialRecord>> =
        pool.install(|| jobs.par_iter().map(|&(s, t)| run_trial(config, s, t)).collect::<Result<_>>())?;
    let mut rows: Vec<TrialRecord> = nested.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.sweep_index, r.trial));
    Ok(rows)
}

/// Per (sweep point, solver) aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub sweep_value: f64,
    pub solver: Solver,
    /// Median over trials with a defined NMSE.
    pub median_nmse_db: Option<f64>,
    pub support_rate: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub converged_rate: Option<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn summarize(records: &[TrialRecord]) -> Vec<Summary> {
    let mut keys: Vec<(usize, Solver)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.sweep_index, r.solver)) {
            keys.push((r.sweep_index, r.solver));
        }
    }
    keys.into_iter()
        .map(|(index, solver)| {
            let rows: Vec<&TrialRecord> =
                records.iter().filter(|r| r.sweep_index == index && r.solver == solver).collect();
            let mut nmse: Vec<f64> = rows.iter().filter_map(|r| r.nmse_db).collect();
            let support: Vec<f64> =
                rows.iter().filter_map(|r| r.support_recovery.map(|b| f64::from(u8::from(b)))).collect();
            let iters: Vec<f64> = rows.iter().filter_map(|r| r.iterations.map(|i| i as f64)).collect();
            let conv: Vec<f64> = rows.iter().filter_map(|r| r.converged.map(|b| f64::from(u8::from(b)))).collect();
            Summary {
                sweep_value: rows[0].sweep_value,
                solver,
                median_nmse_db: median(&mut nmse),
                support_rate: mean(&support),
                mean_iterations: mean(&iters),
                converged_rate: mean(&conv),
            }
        })
        .collect()
}
