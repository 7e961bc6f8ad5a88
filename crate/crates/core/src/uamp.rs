//! Generic UAMP engine on the transformed model `r = Phi x + w`.
//!
//! Two variants share one iteration. `V1` keeps per-element variances and
//! needs `|Phi|^2` products for `tau_p` and `tau_q`; `V2` averages the variances so
//! only the two products with `Phi` and `Phi^T` remain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::model::ColumnModel;

/// Norm of the estimate beyond which an iteration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    V1,
    #[default]
    V2,
}

/// Termination rule shared by all iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    /// Threshold on `||x_new - x_old||^2 / ||x_new||^2`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 300 }
    }
}

impl StopRule {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("stopping tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// `||new - old||^2 / ||new||^2`, with `0/0` read as no change.
pub fn relative_change<'a, I>(new: I, old: I) -> f64
where
    I: IntoIterator<Item = &'a f64>,
{
    let (mut diff, mut norm) = (0.0, 0.0);
    for (a, b) in new.into_iter().zip(old) {
        diff += (a - b) * (a - b);
        norm += a * a;
    }
    if diff == 0.0 {
        0.0
    } else if norm == 0.0 {
        f64::INFINITY
    } else {
        diff / norm
    }
}

/// Variances that are either shared by all elements or held per element.
#[derive(Debug, Clone, PartialEq)]
pub enum Variances {
    Shared(f64),
    PerElement(DVector<f64>),
}

impl Variances {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Variances::Shared(v) => *v,
            Variances::PerElement(v) => v[i],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Variances::Shared(v) => *v,
            Variances::PerElement(v) => v.mean(),
        }
    }

    pub fn to_vector(&self, len: usize) -> DVector<f64> {
        match self {
            Variances::Shared(v) => DVector::from_element(len, *v),
            Variances::PerElement(v) => v.clone(),
        }
    }

    fn all(&self, pred: impl Fn(f64) -> bool) -> bool {
        match self {
            Variances::Shared(v) => pred(*v),
            Variances::PerElement(v) => v.iter().all(|&x| pred(x)),
        }
    }
}

/// Scalar MMSE denoiser for the pseudo-channel `q = x + Normal(0, tau_q)`.
pub trait Denoiser {
    /// Posterior means `g_x(q, tau_q)` and their derivatives with respect to `q`.
    fn denoise(&self, q: &DVector<f64>, tau_q: &Variances) -> (DVector<f64>, DVector<f64>);
}

/// Zero-mean Gaussian prior with per-element variances.
#[derive(Debug, Clone)]
pub struct GaussianDenoiser {
    pub variances: DVector<f64>,
}

impl GaussianDenoiser {
    pub fn new(variances: DVector<f64>) -> Self {
        Self { variances }
    }

    pub fn uniform(len: usize, variance: f64) -> Self {
        Self { variances: DVector::from_element(len, variance) }
    }
}

impl Denoiser for GaussianDenoiser {
    fn denoise(&self, q: &DVector<f64>, tau_q: &Variances) -> (DVector<f64>, DVector<f64>) {
        let gain = DVector::from_fn(q.len(), |i, _| {
            let v = self.variances[i];
            v / (v + tau_q.get(i))
        });
        (q.component_mul(&gain), gain)
    }
}

/// Bernoulli-Gaussian prior `(1 - rate) delta_0 + rate Normal(0, variance)`.
#[derive(Debug, Clone, Copy)]
pub struct BernoulliGaussianDenoiser {
    pub rate: f64,
    pub variance: f64,
}

impl BernoulliGaussianDenoiser {
    /// Posterior mean and variance of one element.
    pub fn posterior(&self, q: f64, tau: f64) -> (f64, f64) {
        let (rho, s2) = (self.rate, self.variance);
        if rho <= 0.0 {
            return (0.0, 0.0);
        }
        let m = q * s2 / (s2 + tau);
        let v = s2 * tau / (s2 + tau);
        let pi = if rho >= 1.0 {
            1.0
        } else {
            let log_odds =
                (rho / (1.0 - rho)).ln() + 0.5 * (tau / (s2 + tau)).ln() + 0.5 * q * q * (1.0 / tau - 1.0 / (s2 + tau));
            1.0 / (1.0 + (-log_odds).exp())
        };
        let mean = pi * m;
        let var = pi * (v + m * m) - mean * mean;
        (mean, var.max(0.0))
    }
}

impl Denoiser for BernoulliGaussianDenoiser {
    fn denoise(&self, q: &DVector<f64>, tau_q: &Variances) -> (DVector<f64>, DVector<f64>) {
        let mut mean = DVector::zeros(q.len());
        let mut deriv = DVector::zeros(q.len());
        for i in 0..q.len() {
            let tau = tau_q.get(i);
            let (m, v) = self.posterior(q[i], tau);
            mean[i] = m;
            // d/dq E[x | q] = Var[x | q] / tau for a Gaussian pseudo-channel.
            deriv[i] = v / tau;
        }
        (mean, deriv)
    }
}

/// Wraps a scalar posterior-mean function and differentiates it numerically.
pub struct FiniteDifference<F> {
    mean: F,
}

impl<F: Fn(usize, f64, f64) -> f64> FiniteDifference<F> {
    /// `mean(n, q, tau)` returns the posterior mean of element `n`.
    pub fn new(mean: F) -> Self {
        Self { mean }
    }
}

impl<F: Fn(usize, f64, f64) -> f64> Denoiser for FiniteDifference<F> {
    fn denoise(&self, q: &DVector<f64>, tau_q: &Variances) -> (DVector<f64>, DVector<f64>) {
        let mut mean = DVector::zeros(q.len());
        let mut deriv = DVector::zeros(q.len());
        for i in 0..q.len() {
            let tau = tau_q.get(i);
            let h = 1e-6 * q[i].abs().max(1.0);
            mean[i] = (self.mean)(i, q[i], tau);
            deriv[i] = ((self.mean)(i, q[i] + h, tau) - (self.mean)(i, q[i] - h, tau)) / (2.0 * h);
        }
        (mean, deriv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UampState {
    pub x: DVector<f64>,
    /// Per-element for `V1`, shared for `V2`.
    pub tau_x: Variances,
    pub s: DVector<f64>,
    pub t: usize,
}

impl UampState {
    /// `x = 0`, `s = 0` and `tau_x = tau_x0` in the layout of `variant`.
    pub fn new(rows: usize, cols: usize, variant: Variant, tau_x0: f64) -> Self {
        let tau_x = match variant {
            Variant::V1 => Variances::PerElement(DVector::from_element(cols, tau_x0)),
            Variant::V2 => Variances::Shared(tau_x0),
        };
        Self { x: DVector::zeros(cols), tau_x, s: DVector::zeros(rows), t: 0 }
    }
}

/// Intermediate quantities of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct UampIterates {
    pub tau_p: DVector<f64>,
    pub p: DVector<f64>,
    pub tau_s: DVector<f64>,
    pub tau_q: Variances,
    pub q: DVector<f64>,
}

fn check(values: &DVector<f64>, iteration: usize, stage: &'static str, last: &DVector<f64>) -> crate::Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(diverged(iteration, stage, last))
    }
}

pub(crate) fn diverged(iteration: usize, stage: &'static str, last: &DVector<f64>) -> Error {
    Error::Diverged {
        iteration,
        stage,
        last_finite: Box::new(DMatrix::from_column_slice(last.len(), 1, last.as_slice())),
    }
}

/// One UAMP sweep from `tau_p` through the denoised `x`. `phi_sq` caches `|Phi|^2` for `V1`.
fn iterate(
    state: &UampState,
    model: &ColumnModel<'_>,
    phi_sq: Option<&DMatrix<f64>>,
    noise_var: f64,
    denoiser: &dyn Denoiser,
    variant: Variant,
) -> crate::Result<(UampState, UampIterates)> {
    let phi = model.phi;
    let (m, n) = phi.shape();
    let t = state.t;
    let owned_sq;
    let phi_sq = match (variant, phi_sq) {
        (Variant::V1, Some(sq)) => Some(sq),
        (Variant::V1, None) => {
            owned_sq = phi.map(|v| v * v);
            Some(&owned_sq)
        }
        (Variant::V2, _) => None,
    };

    let tau_p = match (&state.tau_x, phi_sq) {
        (Variances::PerElement(tx), Some(sq)) => sq * tx,
        (tx, _) => model.lambda * tx.mean(),
    };
    check(&tau_p, t, "tau_p", &state.x)?;
    let p = phi * &state.x - tau_p.component_mul(&state.s);
    check(&p, t, "p", &state.x)?;
    let tau_s = tau_p.map(|v| 1.0 / (v + noise_var));
    check(&tau_s, t, "tau_s", &state.x)?;
    let s = tau_s.component_mul(&(&model.r - &p));
    check(&s, t, "s", &state.x)?;
    let tau_q = match phi_sq {
        Some(sq) => Variances::PerElement(sq.tr_mul(&tau_s).map(|v| 1.0 / v)),
        None => Variances::Shared(n as f64 / model.lambda.dot(&tau_s)),
    };
    if !tau_q.all(|v| v.is_finite() && v > 0.0) {
        return Err(diverged(t, "tau_q", &state.x));
    }
    let back = phi.tr_mul(&s);
    let q = DVector::from_fn(n, |i, _| state.x[i] + tau_q.get(i) * back[i]);
    check(&q, t, "q", &state.x)?;

    let (x_new, deriv) = denoiser.denoise(&q, &tau_q);
    let tau_x = match variant {
        Variant::V1 => Variances::PerElement(DVector::from_fn(n, |i, _| tau_q.get(i) * deriv[i])),
        Variant::V2 => Variances::Shared((0..n).map(|i| tau_q.get(i) * deriv[i]).sum::<f64>() / n as f64),
    };
    if !tau_x.all(f64::is_finite) {
        return Err(diverged(t, "tau_x", &state.x));
    }
    check(&x_new, t, "x", &state.x)?;
    if x_new.norm() > DIVERGENCE_NORM {
        return Err(diverged(t, "estimate norm above 1e12", &state.x));
    }
    debug_assert_eq!(s.len(), m);

    Ok((UampState { x: x_new, tau_x, s, t: t + 1 }, UampIterates { tau_p, p, tau_s, tau_q, q }))
}

/// Executes one UAMP iteration.
pub fn uamp_iteration(
    state: &UampState,
    model: &ColumnModel<'_>,
    noise_var: f64,
    denoiser: &dyn Denoiser,
    variant: Variant,
) -> crate::Result<(UampState, UampIterates)> {
    if !(noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}")));
    }
    iterate(state, model, None, noise_var, denoiser, variant)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub change: f64,
    pub tau_x_mean: f64,
}

#[derive(Debug, Clone)]
pub struct UampRun {
    pub x: DVector<f64>,
    pub tau_x: Variances,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// A divergence, with the trace recorded up to the failing iteration.
#[derive(Debug, Error)]
#[error("UAMP run failed after {} iterations: {source}", trace.len())]
pub struct FailedRun {
    pub source: Error,
    pub trace: Vec<TraceEntry>,
}

/// Iterates from `x = 0`, `s = 0`, `tau_x = tau_x0` until the relative change
/// drops to `stop.tol` or `stop.max_iter` sweeps have run.
pub fn run_uamp(
    model: &ColumnModel<'_>,
    noise_var: f64,
    denoiser: &dyn Denoiser,
    variant: Variant,
    stop: StopRule,
    tau_x0: f64,
) -> Result<UampRun, FailedRun> {
    let fail = |source| FailedRun { source, trace: Vec::new() };
    stop.validate().map_err(fail)?;
    if !(noise_var > 0.0) {
        return Err(fail(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}"))));
    }
    let (m, n) = model.phi.shape();
    let phi_sq = (variant == Variant::V1).then(|| model.phi.map(|v| v * v));
    let mut state = UampState::new(m, n, variant, tau_x0);
    let mut trace = Vec::new();
    let mut converged = false;
    while state.t < stop.max_iter {
        let (next, _) = match iterate(&state, model, phi_sq.as_ref(), noise_var, denoiser, variant) {
            Ok(v) => v,
            Err(source) => return Err(FailedRun { source, trace }),
        };
        let change = relative_change(next.x.iter(), state.x.iter());
        trace.push(TraceEntry { change, tau_x_mean: next.tau_x.mean() });
        state = next;
        if change <= stop.tol {
            converged = true;
            break;
        }
    }
    Ok(UampRun { x: state.x, tau_x: state.tau_x, iterations: state.t, converged, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_matrix, unitary_transform, MatrixKind, MatrixSpec, ProblemInstance, SignalSpec};
    use approx::assert_relative_eq;

    fn identity_model(r: DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let n = r.len();
        (DMatrix::identity(n, n), DVector::from_element(n, 1.0), r)
    }

    #[test]
    fn identity_tau_p_is_ones() {
        let (phi, lambda, r) = identity_model(DVector::from_vec(vec![1.0, -2.0, 0.5]));
        let model = ColumnModel { phi: &phi, lambda: &lambda, r };
        for variant in [Variant::V1, Variant::V2] {
            let st = UampState::new(3, 3, variant, 1.0);
            let (_, it) = uamp_iteration(&st, &model, 1.0, &GaussianDenoiser::uniform(3, 1.0), variant).unwrap();
            assert_eq!(it.tau_p, DVector::from_element(3, 1.0));
        }
    }

    /// Posterior mean of x ~ Normal(0, prior) observed as q = x + Normal(0, obs).
    fn scalar_posterior_mean(q: f64, prior: f64, obs: f64) -> f64 {
        let precision = 1.0 / prior + 1.0 / obs;
        (q / obs) / precision
    }

    #[test]
    fn identity_gaussian_first_iterate() {
        let r = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let (phi, lambda, r) = identity_model(r);
        let model = ColumnModel { phi: &phi, lambda: &lambda, r: r.clone() };
        let den = GaussianDenoiser::uniform(4, 1.0);
        // With a vanishing initial variance the pseudo-observation is q = r with tau_q = 1.
        let st = UampState::new(4, 4, Variant::V2, 1e-30);
        let (next, it) = uamp_iteration(&st, &model, 1.0, &den, Variant::V2).unwrap();
        assert_relative_eq!(it.tau_q.get(0), 1.0, max_relative = 1e-12);
        for i in 0..4 {
            assert_relative_eq!(next.x[i], r[i] / 2.0, max_relative = 1e-12);
            assert_relative_eq!(next.x[i], scalar_posterior_mean(r[i], 1.0, 1.0), max_relative = 1e-12);
        }
        // With tau_x = 1 the first pseudo-observation has variance 2.
        let st = UampState::new(4, 4, Variant::V2, 1.0);
        let (next, it) = uamp_iteration(&st, &model, 1.0, &den, Variant::V2).unwrap();
        assert_relative_eq!(it.tau_q.get(0), 2.0, max_relative = 1e-12);
        for i in 0..4 {
            assert_relative_eq!(next.x[i], scalar_posterior_mean(r[i], 1.0, 2.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn identity_gaussian_converges_to_posterior_mean() {
        let r = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let (phi, lambda, r) = identity_model(r);
        let model = ColumnModel { phi: &phi, lambda: &lambda, r: r.clone() };
        let run = run_uamp(
            &model,
            1.0,
            &GaussianDenoiser::uniform(4, 1.0),
            Variant::V2,
            StopRule { tol: 1e-28, max_iter: 500 },
            1.0,
        )
        .unwrap();
        for i in 0..4 {
            assert_relative_eq!(run.x[i], r[i] / 2.0, max_relative = 1e-10);
        }
        // The variance recursion tau <- (tau + 1) / (tau + 2) settles at the
        // positive root of tau^2 + tau - 1.
        assert_relative_eq!(run.tau_x.mean(), (5f64.sqrt() - 1.0) / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn v1_and_v2_agree_for_equal_singular_values() {
        // Square orthogonal Phi scaled by 3: every singular value equals 3.
        let a = gen_matrix(&MatrixSpec::new(12, 12, MatrixKind::IllConditioned { kappa: 1.0 }), 4).unwrap();
        let y = DMatrix::from_fn(12, 1, |i, _| (i as f64 * 0.7).sin());
        let t = unitary_transform(&a, &y).unwrap();
        let model = t.column(0);
        let den = GaussianDenoiser::uniform(12, 0.8);
        let mut s1 = UampState::new(12, 12, Variant::V1, 1.0);
        let mut s2 = UampState::new(12, 12, Variant::V2, 1.0);
        for _ in 0..10 {
            let (n1, i1) = uamp_iteration(&s1, &model, 0.1, &den, Variant::V1).unwrap();
            let (n2, i2) = uamp_iteration(&s2, &model, 0.1, &den, Variant::V2).unwrap();
            assert_relative_eq!(n1.x, n2.x, epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(i1.q, i2.q, epsilon = 1e-12, max_relative = 1e-12);
            for k in 0..12 {
                assert_relative_eq!(i1.tau_q.get(k), i2.tau_q.get(k), max_relative = 1e-12);
                assert_relative_eq!(n1.tau_x.get(k), n2.tau_x.get(k), max_relative = 1e-12);
            }
            s1 = n1;
            s2 = n2;
        }
    }

    #[test]
    fn v2_shared_tau_q_is_mean_of_v1_precisions() {
        let a = gen_matrix(&MatrixSpec::new(15, 25, MatrixKind::Correlated { c: 0.5 }), 2).unwrap();
        let y = DMatrix::from_fn(15, 1, |i, _| (i as f64).cos());
        let t = unitary_transform(&a, &y).unwrap();
        let model = t.column(0);
        let den = GaussianDenoiser::uniform(25, 1.0);
        let (_, i1) =
            uamp_iteration(&UampState::new(15, 25, Variant::V1, 0.7), &model, 0.2, &den, Variant::V1).unwrap();
        let (_, i2) =
            uamp_iteration(&UampState::new(15, 25, Variant::V2, 0.7), &model, 0.2, &den, Variant::V2).unwrap();
        let mean_precision = (0..25).map(|k| 1.0 / i1.tau_q.get(k)).sum::<f64>() / 25.0;
        assert_relative_eq!(1.0 / i2.tau_q.get(0), mean_precision, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_derivative_matches_finite_difference() {
        let den = GaussianDenoiser::new(DVector::from_vec(vec![0.3, 1.0, 4.0]));
        let q = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        let tau = Variances::PerElement(DVector::from_vec(vec![0.1, 1.0, 2.5]));
        let (mean, deriv) = den.denoise(&q, &tau);
        let h = 1e-5;
        for i in 0..3 {
            let v = den.variances[i];
            assert_relative_eq!(mean[i], q[i] * v / (v + tau.get(i)), max_relative = 1e-14);
            let mut up = q.clone();
            up[i] += h;
            let mut down = q.clone();
            down[i] -= h;
            let fd = (den.denoise(&up, &tau).0[i] - den.denoise(&down, &tau).0[i]) / (2.0 * h);
            assert!((fd - deriv[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn bernoulli_gaussian_derivative_matches_numeric() {
        let bg = BernoulliGaussianDenoiser { rate: 0.1, variance: 1.0 };
        let numeric = FiniteDifference::new(|_, q, tau| bg.posterior(q, tau).0);
        let q = DVector::from_vec(vec![-2.0, -0.3, 0.0, 0.1, 0.9, 4.0]);
        let tau = Variances::Shared(0.05);
        let (m1, d1) = bg.denoise(&q, &tau);
        let (m2, d2) = numeric.denoise(&q, &tau);
        assert_relative_eq!(m1, m2, epsilon = 1e-15);
        for i in 0..q.len() {
            assert!((d1[i] - d2[i]).abs() < 1e-6, "{} vs {}", d1[i], d2[i]);
        }
    }

    #[test]
    fn bernoulli_gaussian_limits() {
        let dense = BernoulliGaussianDenoiser { rate: 1.0, variance: 2.0 };
        let (m, v) = dense.posterior(1.0, 1.0);
        assert_relative_eq!(m, 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(v, 2.0 / 3.0, max_relative = 1e-14);
        let empty = BernoulliGaussianDenoiser { rate: 0.0, variance: 2.0 };
        assert_eq!(empty.posterior(5.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn zero_observation_stops_after_one_iteration() {
        let a = gen_matrix(&MatrixSpec::new(10, 20, MatrixKind::IidGaussian), 1).unwrap();
        let t = unitary_transform(&a, &DMatrix::zeros(10, 1)).unwrap();
        let run =
            run_uamp(&t.column(0), 0.01, &GaussianDenoiser::uniform(20, 1.0), Variant::V2, StopRule::default(), 1.0)
                .unwrap();
        assert_eq!(run.iterations, 1);
        assert!(run.converged);
        assert!(run.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_iteration_budget_returns_initial_state() {
        let a = gen_matrix(&MatrixSpec::new(10, 20, MatrixKind::IidGaussian), 1).unwrap();
        let t = unitary_transform(&a, &DMatrix::from_element(10, 1, 1.0)).unwrap();
        let stop = StopRule { tol: 1e-8, max_iter: 0 };
        let run = run_uamp(&t.column(0), 0.01, &GaussianDenoiser::uniform(20, 1.0), Variant::V1, stop, 1.0).unwrap();
        assert_eq!(run.iterations, 0);
        assert!(run.trace.is_empty());
        assert_eq!(run.x, DVector::zeros(20));
        assert_eq!(run.tau_x, Variances::PerElement(DVector::from_element(20, 1.0)));
    }

    #[test]
    fn rejects_nonpositive_noise_and_tolerance() {
        let a = DMatrix::<f64>::identity(3, 3);
        let t = unitary_transform(&a, &DMatrix::from_element(3, 1, 1.0)).unwrap();
        let den = GaussianDenoiser::uniform(3, 1.0);
        assert!(uamp_iteration(&UampState::new(3, 3, Variant::V2, 1.0), &t.column(0), 0.0, &den, Variant::V2).is_err());
        let stop = StopRule { tol: 0.0, max_iter: 5 };
        assert!(run_uamp(&t.column(0), 1.0, &den, Variant::V2, stop, 1.0).is_err());
    }

    /// Amplifies its input so the estimate blows up.
    struct Exploding;
    impl Denoiser for Exploding {
        fn denoise(&self, q: &DVector<f64>, _: &Variances) -> (DVector<f64>, DVector<f64>) {
            (q * 1e4 + DVector::from_element(q.len(), 1.0), DVector::from_element(q.len(), 1e4))
        }
    }

    #[test]
    fn divergence_is_reported_with_trace() {
        let a = gen_matrix(&MatrixSpec::new(10, 20, MatrixKind::IidGaussian), 1).unwrap();
        let t = unitary_transform(&a, &DMatrix::from_element(10, 1, 1.0)).unwrap();
        let err = run_uamp(&t.column(0), 0.01, &Exploding, Variant::V2, StopRule::default(), 1.0).unwrap_err();
        assert!(matches!(err.source, Error::Diverged { .. }));
        assert!(!err.trace.is_empty());
        if let Error::Diverged { last_finite, .. } = &err.source {
            assert!(last_finite.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn bernoulli_gaussian_recovery_reaches_oracle_territory() {
        let mspec = MatrixSpec::new(160, 200, MatrixKind::IidGaussian);
        let sspec = SignalSpec::smv(200, 0.1);
        let mut nmse_db = Vec::new();
        let mut oracle_db = Vec::new();
        for seed in 0..5 {
            let inst = ProblemInstance::generate(&mspec, &sspec, 50.0, seed).unwrap();
            let t = unitary_transform(&inst.a, &inst.y).unwrap();
            let den = BernoulliGaussianDenoiser { rate: 0.1, variance: 1.0 };
            let run =
                run_uamp(&t.column(0), 1.0 / inst.beta_true, &den, Variant::V2, StopRule::default(), 1.0).unwrap();
            assert!(run.iterations <= 100, "{} iterations", run.iterations);
            let x = inst.x.column(0).into_owned();
            nmse_db.push(crate::analysis::metrics::to_db((&run.x - &x).norm_squared() / x.norm_squared()));
            let y = inst.y.column(0).into_owned();
            let oracle = crate::sbl::support_oracle_mmse(&inst.a, &y, &inst.support, inst.beta_true, 1.0).unwrap();
            oracle_db.push(crate::analysis::metrics::to_db((&oracle - &x).norm_squared() / x.norm_squared()));
        }
        for (got, bound) in nmse_db.iter().zip(&oracle_db) {
            assert!(*got < -40.0, "NMSE {got} dB");
            assert!(*got - *bound < 5.0, "NMSE {got} dB vs oracle {bound} dB");
        }
    }
}
