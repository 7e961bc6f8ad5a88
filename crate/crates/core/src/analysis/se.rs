//! State-evolution prediction for UAMP-SBL.
//!
//! The pseudo-observation `q = x + w`, `w ~ Normal(0, tau)`, is fed through the
//! adaptive SBL denoiser to tabulate `phi(tau)`, the MSE after denoising. The
//! linear stage is summarised by `psi(v) = N / sum(lambda / (v lambda + 1/beta))`,
//! and the prediction alternates the two maps.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::sbl::{epsilon_update, SblConfig};

/// Iterations of the adaptive denoiser per table point.
pub const DENOISER_ITERATIONS: usize = 50;

/// Default table grid: 60 log-spaced points on `[1e-10, 1e4]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-10, 1e4, 60)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
}

/// Tabulated `phi(tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    pub sparsity_rate: f64,
    pub tau: Vec<f64>,
    pub mse: Vec<f64>,
}

/// Result of a table lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookup {
    pub mse: f64,
    /// `tau` fell outside the tabulated range.
    pub extrapolated: bool,
}

impl MseTable {
    pub fn new(sparsity_rate: f64, tau: Vec<f64>, mse: Vec<f64>) -> Result<Self> {
        if tau.len() != mse.len() || tau.len() < 2 {
            return Err(Error::InvalidArgument("a table needs at least two (tau, mse) pairs".into()));
        }
        if tau.iter().any(|t| !(*t > 0.0 && t.is_finite())) || tau.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("tau grid must be positive and strictly increasing".into()));
        }
        if mse.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidArgument("mse entries must be finite and nonnegative".into()));
        }
        Ok(Self { sparsity_rate, tau, mse })
    }

    /// Linear interpolation in log-log space. Outside the grid the end
    /// segment is extended and the result is flagged.
    pub fn lookup(&self, tau: f64) -> Lookup {
        let n = self.tau.len();
        let extrapolated = tau < self.tau[0] || tau > self.tau[n - 1];
        let k = self.tau.partition_point(|&t| t <= tau).clamp(1, n - 1);
        let lg = |v: f64| v.max(f64::MIN_POSITIVE).ln();
        let (x0, x1) = (lg(self.tau[k - 1]), lg(self.tau[k]));
        let (y0, y1) = (lg(self.mse[k - 1]), lg(self.mse[k]));
        let w = (lg(tau) - x0) / (x1 - x0);
        Lookup { mse: (y0 + w * (y1 - y0)).exp(), extrapolated }
    }

    pub fn is_monotone(&self) -> bool {
        self.mse.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# tau mse\n");
        let _ = writeln!(out, "# sparsity_rate {}", self.sparsity_rate);
        for (t, m) in self.tau.iter().zip(&self.mse) {
            let _ = writeln!(out, "{t:e} {m:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rate = None;
        let (mut tau, mut mse) = (Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("sparsity_rate") {
                    rate = Some(parse_field(v.trim(), i)?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(t), Some(m), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::Config(format!("table line {}: expected two columns", i + 1)));
            };
            tau.push(parse_field(t, i)?);
            mse.push(parse_field(m, i)?);
        }
        let rate = rate.ok_or_else(|| Error::Config("table is missing the '# sparsity_rate' line".into()))?;
        Self::new(rate, tau, mse)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("table line {}: cannot parse '{s}'", line + 1)))
}

/// Runs the SBL denoiser block on one batch of pseudo-observations sharing
/// the noise variance `tau`, adapting precisions and shape as the solver does.
pub fn adaptive_denoise(q: &[f64], tau: f64, config: &SblConfig) -> Result<Vec<f64>> {
    let n = q.len();
    let mut gamma = DVector::from_element(n, 1.0);
    let mut eps = config.epsilon0;
    let mut x = vec![0.0; n];
    for _ in 0..DENOISER_ITERATIONS {
        let tau_x = tau / n as f64 * gamma.iter().map(|g| 1.0 / (1.0 + tau * g)).sum::<f64>();
        for i in 0..n {
            x[i] = q[i] / (1.0 + tau * gamma[i]);
        }
        for i in 0..n {
            let mut g = (2.0 * eps + 1.0) / (x[i] * x[i] + tau_x);
            if let Some(cap) = config.gamma_cap {
                g = g.min(cap);
            }
            gamma[i] = g;
        }
        eps = epsilon_update(&gamma)?;
    }
    Ok(x)
}

/// Tabulates `phi` on `grid` with `samples` Bernoulli-Gaussian draws. The
/// same signal and unit noise draws are reused at every grid point, which
/// keeps the table smooth in `tau`.
pub fn build_mse_table(sparsity_rate: f64, grid: &[f64], samples: usize, seed: u64) -> Result<MseTable> {
    if !(0.0..=1.0).contains(&sparsity_rate) {
        return Err(Error::InvalidArgument(format!("sparsity rate {sparsity_rate} outside [0, 1]")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut r = rng::stream(seed, &[rng::label::SE_TABLE]);
    let x: Vec<f64> =
        (0..samples).map(|_| if r.random::<f64>() < sparsity_rate { r.sample(StandardNormal) } else { 0.0 }).collect();
    let z: Vec<f64> = (0..samples).map(|_| r.sample(StandardNormal)).collect();
    let config = SblConfig::default();
    let mse = grid
        .par_iter()
        .map(|&tau| {
            let sd = tau.sqrt();
            let q: Vec<f64> = x.iter().zip(&z).map(|(x, z)| x + sd * z).collect();
            let est = adaptive_denoise(&q, tau, &config)?;
            Ok(est.iter().zip(&x).map(|(e, x)| (e - x) * (e - x)).sum::<f64>() / samples as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    MseTable::new(sparsity_rate, grid.to_vec(), mse)
}

/// `psi(v) = N / sum_m lambda_m / (v lambda_m + 1/beta)`.
pub fn psi(lambda: &DVector<f64>, cols: usize, beta: f64, v_x: f64) -> f64 {
    cols as f64 / lambda.iter().map(|l| l / (v_x * l + 1.0 / beta)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SePoint {
    pub tau: f64,
    pub v_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeTrajectory {
    pub points: Vec<SePoint>,
    pub converged: bool,
    /// Some lookup fell outside the table.
    pub extrapolated: bool,
}

impl SeTrajectory {
    pub fn final_v_x(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.v_x)
    }

    /// Predicted NMSE in dB, taking the mean signal energy per entry to be the
    /// sparsity rate (unit-variance on-support entries).
    pub fn nmse_db(&self, sparsity_rate: f64) -> f64 {
        crate::analysis::metrics::to_db(self.final_v_x() / sparsity_rate)
    }
}

/// Relative change in `v_x` below which the prediction stops.
pub const SE_TOL: f64 = 1e-10;

/// Alternates `tau = psi(v_x)` and `v_x = phi(tau)` from `v_x_init`.
pub fn se_predict(
    lambda: &DVector<f64>,
    cols: usize,
    beta: f64,
    table: &MseTable,
    v_x_init: f64,
    max_iter: usize,
) -> Result<SeTrajectory> {
    if !(beta > 0.0) || !(v_x_init > 0.0) || cols == 0 {
        return Err(Error::InvalidArgument("beta, the initial v_x and N must be positive".into()));
    }
    let mut v = v_x_init;
    let mut traj = SeTrajectory { points: Vec::new(), converged: false, extrapolated: false };
    for _ in 0..max_iter {
        let tau = psi(lambda, cols, beta, v);
        let look = table.lookup(tau);
        traj.extrapolated |= look.extrapolated;
        traj.points.push(SePoint { tau, v_x: look.mse });
        let change = (look.mse - v).abs() / v.max(f64::MIN_POSITIVE);
        v = look.mse;
        if change < SE_TOL {
            traj.converged = true;
            break;
        }
    }
    Ok(traj)
}
