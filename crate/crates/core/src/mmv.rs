//! Multiple measurement vectors: UAMP-SBL with pooled hyperparameters and
//! UAMP-TSBL, which adds AR(1) temporal correlation across columns.
//!
//! TSBL runs a forward/backward Gaussian recursion along each row of `X`. For
//! row `n` the forward message into column `l` is `Normal(xi, psi)` and the
//! backward message is `Normal(theta, phi)`; the last column has no backward
//! neighbour, which is encoded as `phi = inf`.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::TransformedModel;
use crate::sbl::{
    apply_cap, back, epsilon_update, front, matrix_diverged, mean_change, pooled_beta, run_engine, ColumnState,
    RecoveryResult, SblConfig, SblState,
};
use crate::uamp::{Variances, Variant, DIVERGENCE_NORM};

/// UAMP-SBL for `L >= 1` columns sharing one support. With `L = 1` this is
/// the single-vector solver.
pub fn uamp_sbl_mmv(model: &TransformedModel, config: &SblConfig) -> Result<(RecoveryResult, SblState)> {
    run_engine(model, config)
}

/// Forward and backward messages for every column, each of length `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsblMessages {
    pub xi: Vec<DVector<f64>>,
    pub psi: Vec<DVector<f64>>,
    pub theta: Vec<DVector<f64>>,
    pub phi: Vec<DVector<f64>>,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > -1.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("temporal correlation must lie in (-1, 1), got {alpha}")));
    }
    Ok(())
}

/// `a b / (a + b)`, the variance of the product of two Gaussians.
fn combine(a: f64, b: f64) -> f64 {
    if b.is_infinite() {
        a
    } else {
        a * b / (a + b)
    }
}

impl TsblMessages {
    /// Starting messages: `xi = theta = 0`, `psi = 1`, `phi = 1` for columns
    /// with a successor (`inf` for the last column, or everywhere when
    /// `alpha = 0`).
    pub fn new(cols: usize, num_vectors: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let phi = (0..num_vectors)
            .map(|l| {
                let v = if alpha == 0.0 || l + 1 == num_vectors { f64::INFINITY } else { 1.0 };
                DVector::from_element(cols, v)
            })
            .collect();
        Ok(Self {
            xi: vec![DVector::zeros(cols); num_vectors],
            psi: vec![DVector::from_element(cols, 1.0); num_vectors],
            theta: vec![DVector::zeros(cols); num_vectors],
            phi,
            alpha,
        })
    }

    fn num_vectors(&self) -> usize {
        self.xi.len()
    }

    /// Forward recursion from column 1 using the previous pseudo-observations.
    pub fn forward(&mut self, q: &[DVector<f64>], tau_q: &[DVector<f64>], gamma: &DVector<f64>) -> Result<()> {
        let a = self.alpha;
        let n = gamma.len();
        self.xi[0] = DVector::zeros(n);
        self.psi[0] = gamma.map(|g| 1.0 / g);
        for l in 1..self.num_vectors() {
            let mut xi = DVector::zeros(n);
            let mut psi = DVector::zeros(n);
            for i in 0..n {
                let (tq, ps) = (tau_q[l - 1][i], self.psi[l - 1][i]);
                let c = combine(tq, ps);
                xi[i] = a * (q[l - 1][i] / tq + self.xi[l - 1][i] / ps) * c;
                psi[i] = a * a * c + (1.0 - a * a) / gamma[i];
            }
            if psi.iter().any(|v| !(v.is_finite() && *v > 0.0)) || xi.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "forward message variance not positive at column {}",
                    l + 1
                )));
            }
            self.xi[l] = xi;
            self.psi[l] = psi;
        }
        Ok(())
    }

    /// Backward recursion from column `L - 1`. Skipped when `alpha = 0`,
    /// leaving infinite-variance messages.
    pub fn backward(&mut self, q: &[DVector<f64>], tau_q: &[DVector<f64>], gamma: &DVector<f64>) -> Result<()> {
        let a = self.alpha;
        let n = gamma.len();
        let big_l = self.num_vectors();
        for l in 0..big_l {
            self.theta[l] = DVector::zeros(n);
            self.phi[l] = DVector::from_element(n, f64::INFINITY);
        }
        if a == 0.0 || big_l < 2 {
            return Ok(());
        }
        let last = big_l - 1;
        self.theta[last - 1] = q[last].map(|v| v / a);
        self.phi[last - 1] = DVector::from_fn(n, |i, _| (tau_q[last][i] + (1.0 - a * a) / gamma[i]) / (a * a));
        for l in (0..last - 1).rev() {
            let mut theta = DVector::zeros(n);
            let mut phi = DVector::zeros(n);
            for i in 0..n {
                let (tq, ph) = (tau_q[l + 1][i], self.phi[l + 1][i]);
                let c = combine(tq, ph);
                theta[i] = (q[l + 1][i] / tq + self.theta[l + 1][i] / ph) * c / a;
                phi[i] = (c + (1.0 - a * a) / gamma[i]) / (a * a);
            }
            self.theta[l] = theta;
            self.phi[l] = phi;
        }
        if self.phi.iter().flatten().any(|v| !(*v > 0.0)) || self.theta.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("backward message variance not positive".into()));
        }
        Ok(())
    }

    /// Combines the pseudo-observation of column `l` with both messages.
    /// Returns the per-element posterior means and variances.
    pub fn posterior(&self, l: usize, q: &DVector<f64>, tau_q: f64) -> (DVector<f64>, DVector<f64>) {
        let n = q.len();
        let (xi, psi, theta, phi) = (&self.xi[l], &self.psi[l], &self.theta[l], &self.phi[l]);
        let var = DVector::from_fn(n, |i, _| 1.0 / (1.0 / tau_q + 1.0 / phi[i] + 1.0 / psi[i]));
        let mean = DVector::from_fn(n, |i, _| var[i] * (q[i] / tau_q + theta[i] / phi[i] + xi[i] / psi[i]));
        (mean, var)
    }
}

/// Denominator of the precision update under the AR(1) prior:
/// `x1^2 + tau1 + (1/(1-a^2)) sum_{l>=2} (x_l^2 + tau_l)
///  + (a^2/(1-a^2)) sum_{l<=L-1} (x_l^2 + tau_l) - (2a/(1-a^2)) sum_{l>=2} x_l x_{l-1}`.
pub fn tsbl_gamma_denominator(x: &[DVector<f64>], tau_x: &[f64], alpha: f64) -> DVector<f64> {
    let big_l = x.len();
    let n = x[0].len();
    let k = 1.0 / (1.0 - alpha * alpha);
    DVector::from_fn(n, |i, _| {
        let m2 = |l: usize| x[l][i] * x[l][i] + tau_x[l];
        let mut d = m2(0);
        for l in 1..big_l {
            d += k * m2(l) - 2.0 * alpha * k * x[l][i] * x[l - 1][i];
        }
        for l in 0..big_l - 1 {
            d += alpha * alpha * k * m2(l);
        }
        d
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsblState {
    pub sbl: SblState,
    pub messages: TsblMessages,
    /// Pseudo-observations of the latest sweep, one per column.
    pub q: Vec<DVector<f64>>,
    pub tau_q: Vec<f64>,
}

impl TsblState {
    pub fn new(model: &TransformedModel, config: &SblConfig, alpha: f64) -> Result<Self> {
        let (n, big_l) = (model.cols(), model.num_vectors());
        Ok(Self {
            sbl: SblState::new(model, config),
            messages: TsblMessages::new(n, big_l, alpha)?,
            q: vec![DVector::zeros(n); big_l],
            tau_q: vec![1.0; big_l],
        })
    }
}

fn broadcast(tau_q: &[f64], n: usize) -> Vec<DVector<f64>> {
    tau_q.iter().map(|&t| DVector::from_element(n, t)).collect()
}

/// One UAMP-TSBL sweep.
pub fn uamp_tsbl_step(state: &TsblState, model: &TransformedModel, config: &SblConfig) -> Result<TsblState> {
    let n = model.cols();
    let big_l = model.num_vectors();
    let prev = &state.sbl;
    let t = prev.t;
    let last = prev.estimate();
    let as_diverged = |e: Error, stage: &'static str| match e {
        Error::InvalidArgument(_) => matrix_diverged(t, stage, &last),
        other => other,
    };

    let mut messages = state.messages.clone();
    messages
        .forward(&state.q, &broadcast(&state.tau_q, n), &prev.gamma)
        .map_err(|e| as_diverged(e, "forward messages"))?;

    let fronts = prev
        .columns
        .iter()
        .enumerate()
        .map(|(l, c)| front(c, model, l, prev.beta, None, t, &last))
        .collect::<Result<Vec<_>>>()?;
    let beta = pooled_beta(&fronts, model);
    if !(beta.is_finite() && beta > 0.0) {
        return Err(matrix_diverged(t, "beta", &last));
    }

    let mut columns = Vec::with_capacity(big_l);
    let mut q = Vec::with_capacity(big_l);
    let mut tau_q = Vec::with_capacity(big_l);
    for (l, (col, f)) in prev.columns.iter().zip(fronts).enumerate() {
        let b = back(col, &f, model, l, beta, None, t, &last)?;
        let tq = b.tau_q.mean();
        let (x, var) = messages.posterior(l, &b.q, tq);
        if x.iter().any(|v| !v.is_finite()) || x.norm() > DIVERGENCE_NORM {
            return Err(matrix_diverged(t, "posterior", &last));
        }
        columns.push(ColumnState { x, tau_x: Variances::Shared(var.mean()), s: b.s, v_h: f.v_h, h: f.h });
        q.push(b.q);
        tau_q.push(tq);
    }

    messages.backward(&q, &broadcast(&tau_q, n), &prev.gamma).map_err(|e| as_diverged(e, "backward messages"))?;

    let xs: Vec<DVector<f64>> = columns.iter().map(|c| c.x.clone()).collect();
    let taus: Vec<f64> = columns.iter().map(|c| c.tau_x.mean()).collect();
    let denom = tsbl_gamma_denominator(&xs, &taus, messages.alpha);
    if denom.iter().any(|d| !(*d >= 0.0)) {
        return Err(matrix_diverged(t, "negative precision denominator", &last));
    }
    let scale = big_l as f64 * (2.0 * prev.epsilon + 1.0);
    let mut gamma = denom.map(|d| scale / d);
    let hits = apply_cap(&mut gamma, config.gamma_cap);
    if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(matrix_diverged(t, "gamma", &last));
    }
    let epsilon = epsilon_update(&gamma)?;

    Ok(TsblState {
        sbl: SblState { columns, gamma, beta, epsilon, t: t + 1, gamma_cap_hits: prev.gamma_cap_hits + hits },
        messages,
        q,
        tau_q,
    })
}

/// UAMP-TSBL with known temporal correlation `alpha`. Always uses the
/// shared-variance UAMP variant.
pub fn uamp_tsbl(model: &TransformedModel, alpha: f64, config: &SblConfig) -> Result<(RecoveryResult, TsblState)> {
    config.stop.validate()?;
    if config.variant != Variant::V2 {
        return Err(Error::InvalidArgument("UAMP-TSBL supports only the shared-variance variant".into()));
    }
    let start = Instant::now();
    let mut state = TsblState::new(model, config, alpha)?;
    let mut converged = false;
    while state.sbl.t < config.stop.max_iter {
        let next = uamp_tsbl_step(&state, model, config)?;
        let change = mean_change(&next.sbl.columns, &state.sbl.columns);
        state = next;
        if change <= config.stop.tol {
            converged = true;
            break;
        }
    }
    let result = RecoveryResult {
        x: state.sbl.estimate(),
        iterations: state.sbl.t,
        converged,
        runtime_s: start.elapsed().as_secs_f64(),
        epsilon_final: state.sbl.epsilon,
        beta_hat: Some(state.sbl.beta),
        gamma_cap_hits: state.sbl.gamma_cap_hits,
    };
    Ok((result, state))
}
