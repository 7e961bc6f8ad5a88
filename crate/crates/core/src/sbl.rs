//! Sparse Bayesian learning for single measurement vectors.
//!
//! The UAMP-SBL sweep is written once over `L` columns. The SMV solver is the
//! `L = 1` case of the multi-column engine, which the MMV module reuses.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TransformedModel;
use crate::uamp::{diverged, relative_change, StopRule, Variances, Variant};

/// Gamma hyperprior on the precisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    /// Shape.
    pub epsilon: f64,
    /// Rate.
    pub eta: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self { epsilon: 0.001, eta: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblConfig {
    pub stop: StopRule,
    /// Starting value of the adaptive shape parameter.
    pub epsilon0: f64,
    /// Upper bound applied to every precision; `None` disables it.
    pub gamma_cap: Option<f64>,
    pub variant: Variant,
}

impl Default for SblConfig {
    fn default() -> Self {
        Self { stop: StopRule::default(), epsilon0: 0.001, gamma_cap: Some(1e11), variant: Variant::V2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    /// `N x L` estimate.
    pub x: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_s: f64,
    pub epsilon_final: f64,
    /// Final noise-precision estimate, `None` for solvers given `beta`.
    pub beta_hat: Option<f64>,
    /// Number of precision updates clipped at the cap.
    pub gamma_cap_hits: usize,
}

/// Shape update `0.5 sqrt(log mean(gamma) - mean(log gamma))`.
///
/// Evaluated on `gamma / gamma[0]` so that a constant vector gives exactly 0.
pub fn epsilon_update(gamma: &DVector<f64>) -> Result<f64> {
    if gamma.is_empty() {
        return Err(Error::InvalidArgument("precision vector is empty".into()));
    }
    if let Some(bad) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidArgument(format!("precisions must be positive and finite, found {bad}")));
    }
    let c = gamma[0];
    let n = gamma.len() as f64;
    let mean = gamma.iter().map(|g| g / c).sum::<f64>() / n;
    let mean_log = gamma.iter().map(|g| (g / c).ln()).sum::<f64>() / n;
    Ok(0.5 * (mean.ln() - mean_log).max(0.0).sqrt())
}

/// Per-column UAMP quantities carried between sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnState {
    pub x: DVector<f64>,
    pub tau_x: Variances,
    pub s: DVector<f64>,
    pub v_h: DVector<f64>,
    pub h: DVector<f64>,
}

impl ColumnState {
    pub(crate) fn new(rows: usize, cols: usize, variant: Variant) -> Self {
        let tau_x = match variant {
            Variant::V1 => Variances::PerElement(DVector::from_element(cols, 1.0)),
            Variant::V2 => Variances::Shared(1.0),
        };
        Self {
            x: DVector::zeros(cols),
            tau_x,
            s: DVector::zeros(rows),
            v_h: DVector::zeros(rows),
            h: DVector::zeros(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SblState {
    pub columns: Vec<ColumnState>,
    pub gamma: DVector<f64>,
    pub beta: f64,
    pub epsilon: f64,
    pub t: usize,
    pub gamma_cap_hits: usize,
}

impl SblState {
    /// Starting point `tau_x = 1, x = 0, gamma = 1, beta = 1, s = 0`.
    pub fn new(model: &TransformedModel, config: &SblConfig) -> Self {
        let (m, n) = (model.rows(), model.cols());
        Self {
            columns: (0..model.num_vectors()).map(|_| ColumnState::new(m, n, config.variant)).collect(),
            gamma: DVector::from_element(n, 1.0),
            beta: 1.0,
            epsilon: config.epsilon0,
            t: 0,
            gamma_cap_hits: 0,
        }
    }

    pub fn estimate(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.columns.iter().map(|c| c.x.clone()).collect::<Vec<_>>())
    }
}

/// Output-side quantities `tau_p, p, v_h, h` for one column.
pub(crate) struct Front {
    pub tau_p: DVector<f64>,
    pub p: DVector<f64>,
    pub v_h: DVector<f64>,
    pub h: DVector<f64>,
}

/// Input-side quantities `s, tau_q, q` for one column.
pub(crate) struct Back {
    pub s: DVector<f64>,
    pub tau_q: Variances,
    pub q: DVector<f64>,
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `|Phi|^2`, needed only by the per-element variant.
pub(crate) fn phi_squared(model: &TransformedModel, variant: Variant) -> Option<DMatrix<f64>> {
    (variant == Variant::V1).then(|| model.phi.map(|v| v * v))
}

pub(crate) fn front(
    col: &ColumnState,
    model: &TransformedModel,
    l: usize,
    beta: f64,
    phi_sq: Option<&DMatrix<f64>>,
    t: usize,
    last: &DMatrix<f64>,
) -> Result<Front> {
    let r = model.r.column(l);
    let tau_p = match (&col.tau_x, phi_sq) {
        (Variances::PerElement(tx), Some(sq)) => sq * tx,
        (tx, _) => &model.lambda * tx.mean(),
    };
    let p = &model.phi * &col.x - tau_p.component_mul(&col.s);
    let v_h = tau_p.map(|tp| tp / (1.0 + beta * tp));
    let h = DVector::from_fn(r.len(), |m, _| (beta * tau_p[m] * r[m] + p[m]) / (1.0 + beta * tau_p[m]));
    if !(finite(&tau_p) && finite(&p) && finite(&v_h) && finite(&h)) {
        return Err(matrix_diverged(t, "tau_p, p, v_h, h", last));
    }
    Ok(Front { tau_p, p, v_h, h })
}

/// Noise precision pooled over columns: `L M / sum_l (||r_l - h_l||^2 + sum v_h)`.
pub(crate) fn pooled_beta(fronts: &[Front], model: &TransformedModel) -> f64 {
    let mut total = 0.0;
    for (l, f) in fronts.iter().enumerate() {
        let r = model.r.column(l);
        total += (r - &f.h).norm_squared() + f.v_h.sum();
    }
    (fronts.len() * model.rows()) as f64 / total
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn back(
    col: &ColumnState,
    f: &Front,
    model: &TransformedModel,
    l: usize,
    beta: f64,
    phi_sq: Option<&DMatrix<f64>>,
    t: usize,
    last: &DMatrix<f64>,
) -> Result<Back> {
    let n = model.cols();
    let r = model.r.column(l);
    let tau_s = f.tau_p.map(|tp| 1.0 / (tp + 1.0 / beta));
    let s = DVector::from_fn(r.len(), |m, _| tau_s[m] * (r[m] - f.p[m]));
    let tau_q = match phi_sq {
        Some(sq) => Variances::PerElement(sq.tr_mul(&tau_s).map(|v| 1.0 / v)),
        None => Variances::Shared(n as f64 / model.lambda.dot(&tau_s)),
    };
    let tau_q_ok = match &tau_q {
        Variances::Shared(v) => v.is_finite() && *v > 0.0,
        Variances::PerElement(v) => v.iter().all(|x| x.is_finite() && *x > 0.0),
    };
    if !(finite(&s) && tau_q_ok) {
        return Err(matrix_diverged(t, "tau_s, s, tau_q", last));
    }
    let back = model.phi.tr_mul(&s);
    let q = DVector::from_fn(n, |i, _| col.x[i] + tau_q.get(i) * back[i]);
    if !finite(&q) {
        return Err(matrix_diverged(t, "q", last));
    }
    Ok(Back { s, tau_q, q })
}

pub(crate) fn matrix_diverged(iteration: usize, stage: &'static str, last: &DMatrix<f64>) -> Error {
    Error::Diverged { iteration, stage, last_finite: Box::new(last.clone()) }
}

/// Gaussian denoiser with precisions `gamma`.
fn denoise(b: &Back, gamma: &DVector<f64>, variant: Variant) -> (DVector<f64>, Variances) {
    let n = gamma.len();
    let x = DVector::from_fn(n, |i, _| b.q[i] / (1.0 + b.tau_q.get(i) * gamma[i]));
    let tau_x = match (variant, &b.tau_q) {
        (Variant::V2, Variances::Shared(tq)) => {
            Variances::Shared(tq / n as f64 * gamma.iter().map(|g| 1.0 / (1.0 + tq * g)).sum::<f64>())
        }
        _ => Variances::PerElement(DVector::from_fn(n, |i, _| {
            let tq = b.tau_q.get(i);
            tq / (1.0 + tq * gamma[i])
        })),
    };
    (x, tau_x)
}

/// Clips precisions at the cap and counts the clipped entries.
pub(crate) fn apply_cap(gamma: &mut DVector<f64>, cap: Option<f64>) -> usize {
    let Some(cap) = cap else { return 0 };
    let mut hits = 0;
    for g in gamma.iter_mut() {
        if *g > cap {
            *g = cap;
            hits += 1;
        }
    }
    hits
}

/// One sweep over all columns. With `learn = false` the noise precision,
/// precisions and shape are held fixed.
pub(crate) fn sweep(
    state: &SblState,
    model: &TransformedModel,
    config: &SblConfig,
    phi_sq: Option<&DMatrix<f64>>,
    learn: bool,
) -> Result<SblState> {
    let t = state.t;
    let last = state.estimate();
    let fronts = state
        .columns
        .iter()
        .enumerate()
        .map(|(l, c)| front(c, model, l, state.beta, phi_sq, t, &last))
        .collect::<Result<Vec<_>>>()?;
    let beta = if learn { pooled_beta(&fronts, model) } else { state.beta };
    if !(beta.is_finite() && beta > 0.0) {
        return Err(matrix_diverged(t, "beta", &last));
    }

    let mut columns = Vec::with_capacity(state.columns.len());
    for (l, (col, f)) in state.columns.iter().zip(fronts).enumerate() {
        let b = back(col, &f, model, l, beta, phi_sq, t, &last)?;
        let (x, tau_x) = denoise(&b, &state.gamma, config.variant);
        if !finite(&x) || x.norm() > crate::uamp::DIVERGENCE_NORM {
            return Err(matrix_diverged(t, "x", &last));
        }
        columns.push(ColumnState { x, tau_x, s: b.s, v_h: f.v_h, h: f.h });
    }

    let (gamma, epsilon, hits) = if learn {
        let inv_l = 1.0 / columns.len() as f64;
        let mut gamma = DVector::from_fn(model.cols(), |i, _| {
            let second_moment: f64 = columns.iter().map(|c| c.x[i] * c.x[i] + c.tau_x.get(i)).sum();
            (2.0 * state.epsilon + 1.0) / (inv_l * second_moment)
        });
        let hits = apply_cap(&mut gamma, config.gamma_cap);
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(matrix_diverged(t, "gamma", &last));
        }
        let epsilon = epsilon_update(&gamma)?;
        (gamma, epsilon, hits)
    } else {
        (state.gamma.clone(), state.epsilon, 0)
    };

    Ok(SblState { columns, gamma, beta, epsilon, t: t + 1, gamma_cap_hits: state.gamma_cap_hits + hits })
}

/// Mean over columns of the relative change of each column estimate.
pub(crate) fn mean_change(new: &[ColumnState], old: &[ColumnState]) -> f64 {
    let total: f64 = new.iter().zip(old).map(|(a, b)| relative_change(a.x.iter(), b.x.iter())).sum();
    total / new.len() as f64
}

/// Runs the multi-column sweep until the mean relative change reaches the
/// tolerance. Shared by the SMV and MMV entry points.
pub(crate) fn run_engine(model: &TransformedModel, config: &SblConfig) -> Result<(RecoveryResult, SblState)> {
    config.stop.validate()?;
    let start = Instant::now();
    let phi_sq = phi_squared(model, config.variant);
    let mut state = SblState::new(model, config);
    let mut converged = false;
    while state.t < config.stop.max_iter {
        let next = sweep(&state, model, config, phi_sq.as_ref(), true)?;
        let change = mean_change(&next.columns, &state.columns);
        state = next;
        if change <= config.stop.tol {
            converged = true;
            break;
        }
    }
    let result = RecoveryResult {
        x: state.estimate(),
        iterations: state.t,
        converged,
        runtime_s: start.elapsed().as_secs_f64(),
        epsilon_final: state.epsilon,
        beta_hat: Some(state.beta),
        gamma_cap_hits: state.gamma_cap_hits,
    };
    Ok((result, state))
}

/// UAMP-SBL on a single measurement vector.
pub fn uamp_sbl(model: &TransformedModel, config: &SblConfig) -> Result<(RecoveryResult, SblState)> {
    if model.num_vectors() != 1 {
        return Err(Error::DimensionMismatch(format!("single-vector solver given {} columns", model.num_vectors())));
    }
    run_engine(model, config)
}

/// Advances a UAMP-SBL state by one sweep.
pub fn uamp_sbl_step(state: &SblState, model: &TransformedModel, config: &SblConfig) -> Result<SblState> {
    let phi_sq = phi_squared(model, config.variant);
    sweep(state, model, config, phi_sq.as_ref(), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TippingOptions {
    pub prior: PriorParams,
    /// Re-estimate the shape after every precision update (forces `eta = 0`).
    pub auto_eps: bool,
    pub stop: StopRule,
    pub gamma_cap: Option<f64>,
}

impl Default for TippingOptions {
    fn default() -> Self {
        Self { prior: PriorParams::default(), auto_eps: false, stop: StopRule::default(), gamma_cap: Some(1e11) }
    }
}

/// Matrix-inversion SBL with known noise precision.
///
/// The optional callback observes the precisions after every iteration.
pub fn tipping_sbl_traced(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: f64,
    options: &TippingOptions,
    mut observe: impl FnMut(usize, &DVector<f64>),
) -> Result<RecoveryResult> {
    options.stop.validate()?;
    if a.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("A has {} rows, y has {}", a.nrows(), y.len())));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise precision must be positive and finite, got {beta}")));
    }
    let PriorParams { mut epsilon, eta } = options.prior;
    if !(epsilon >= 0.0 && eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("prior parameters must be nonnegative, got ({epsilon}, {eta})")));
    }
    let eta = if options.auto_eps { 0.0 } else { eta };
    let start = Instant::now();
    let n = a.ncols();
    let gram = a.transpose() * a * beta;
    let aty = a.transpose() * y * beta;
    let mut gamma = DVector::from_element(n, 1.0);
    let mut x = DVector::zeros(n);
    let mut hits = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.stop.max_iter {
        let mut system = gram.clone();
        for i in 0..n {
            system[(i, i)] += gamma[i];
        }
        let chol =
            Cholesky::new(system).ok_or_else(|| Error::Singular(format!("system matrix at iteration {iterations}")))?;
        let z = chol.inverse();
        let x_new = &z * &aty;
        if !finite(&x_new) {
            return Err(diverged(iterations, "posterior mean", &x));
        }
        for i in 0..n {
            gamma[i] = (2.0 * epsilon + 1.0) / (2.0 * eta + x_new[i] * x_new[i] + z[(i, i)]);
        }
        hits += apply_cap(&mut gamma, options.gamma_cap);
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(diverged(iterations, "precision update", &x));
        }
        if options.auto_eps {
            epsilon = epsilon_update(&gamma)?;
        }
        iterations += 1;
        observe(iterations, &gamma);
        let change = relative_change(x_new.iter(), x.iter());
        x = x_new;
        if change <= options.stop.tol {
            converged = true;
            break;
        }
    }
    Ok(RecoveryResult {
        x: DMatrix::from_column_slice(n, 1, x.as_slice()),
        iterations,
        converged,
        runtime_s: start.elapsed().as_secs_f64(),
        epsilon_final: epsilon,
        beta_hat: None,
        gamma_cap_hits: hits,
    })
}

pub fn tipping_sbl(a: &DMatrix<f64>, y: &DVector<f64>, beta: f64, options: &TippingOptions) -> Result<RecoveryResult> {
    tipping_sbl_traced(a, y, beta, options, |_, _| {})
}

/// LMMSE estimate restricted to a known support, zero elsewhere.
pub fn support_oracle_mmse(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    support: &[usize],
    beta: f64,
    signal_var: f64,
) -> Result<DVector<f64>> {
    let n = a.ncols();
    if a.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("A has {} rows, y has {}", a.nrows(), y.len())));
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("support index {bad} out of range for {n} columns")));
    }
    if !(beta > 0.0 && signal_var > 0.0) {
        return Err(Error::InvalidArgument("noise precision and signal variance must be positive".into()));
    }
    let mut x = DVector::zeros(n);
    if support.is_empty() {
        return Ok(x);
    }
    let a_s = a.select_columns(support);
    let mut system = a_s.transpose() * &a_s * beta;
    for i in 0..support.len() {
        system[(i, i)] += 1.0 / signal_var;
    }
    let rhs = a_s.transpose() * y * beta;
    let sol = match Cholesky::new(system.clone()) {
        Some(chol) => chol.solve(&rhs),
        None => system.lu().solve(&rhs).ok_or_else(|| Error::Singular("support-restricted system".into()))?,
    };
    for (k, &i) in support.iter().enumerate() {
        x[i] = sol[k];
    }
    Ok(x)
}
