//! Error and support-recovery metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lowest value reported by [`to_db`], used for exact recoveries.
pub const DB_FLOOR: f64 = -300.0;

/// `10 log10(v)`, floored at [`DB_FLOOR`].
pub fn to_db(v: f64) -> f64 {
    if v > 0.0 {
        (10.0 * v.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// `||x_hat - x||^2 / ||x||^2` on the linear scale.
pub fn nmse(x_hat: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    if x_hat.len() != x.len() {
        return Err(Error::DimensionMismatch(format!("estimate has {} entries, truth {}", x_hat.len(), x.len())));
    }
    let norm = x.norm_squared();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("truth has zero norm".into()));
    }
    Ok((x_hat - x).norm_squared() / norm)
}

/// Mean over columns of the per-column NMSE, linear scale.
pub fn nmse_mmv(x_hat: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(Error::DimensionMismatch(format!("estimate is {:?}, truth {:?}", x_hat.shape(), x.shape())));
    }
    let mut total = 0.0;
    for l in 0..x.ncols() {
        total += nmse(&x_hat.column(l).into_owned(), &x.column(l).into_owned())?;
    }
    Ok(total / x.ncols() as f64)
}

/// Averages per-trial NMSE values and converts to dB.
pub fn mean_nmse_db(values: &[f64]) -> f64 {
    to_db(values.iter().sum::<f64>() / values.len() as f64)
}

/// Indices of the `k` largest magnitudes, ties going to the lower index.
pub fn top_k(x: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Whether the `|support|` largest entries of `x_hat` are exactly the support.
pub fn support_recovered(x_hat: &DVector<f64>, support: &[usize]) -> bool {
    let mut truth = support.to_vec();
    truth.sort_unstable();
    top_k(x_hat, truth.len()) == truth
}

/// Fraction of trials `(x_hat, support)` whose support is recovered.
pub fn support_recovery_rate(trials: &[(DVector<f64>, Vec<usize>)]) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    let hits = trials.iter().filter(|(x, s)| support_recovered(x, s)).count();
    hits as f64 / trials.len() as f64
}
