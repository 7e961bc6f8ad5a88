//! Measurement matrices, Bernoulli-Gaussian signals, noisy observations and
//! the SVD-based unitary transform that every UAMP solver consumes.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, label, Rng};

/// Family of measurement matrix, with the one parameter each family reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixKind {
    /// i.i.d. standard normal entries.
    IidGaussian,
    /// `U diag(s) V` with geometrically spaced singular values of condition number `kappa`.
    IllConditioned { kappa: f64 },
    /// `C_L^{1/2} G C_R^{1/2}` with Toeplitz correlation `[C]_{mn} = c^{|m-n|}`.
    Correlated { c: f64 },
    /// i.i.d. entries drawn from `Normal(mu, 1)`.
    NonzeroMean { mu: f64 },
    /// `B C` with inner dimension `round(rank_ratio * N)`.
    LowRank { rank_ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(flatten)]
    pub kind: MatrixKind,
}

impl MatrixSpec {
    pub fn new(rows: usize, cols: usize, kind: MatrixKind) -> Self {
        Self { rows, cols, kind }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidSpec(format!("matrix must be at least 1x1, got {}x{}", self.rows, self.cols)));
        }
        match self.kind {
            MatrixKind::IidGaussian => {}
            MatrixKind::IllConditioned { kappa } => {
                if !(kappa.is_finite() && kappa >= 1.0) {
                    return Err(Error::InvalidSpec(format!("condition number must be >= 1, got {kappa}")));
                }
            }
            MatrixKind::Correlated { c } => {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidSpec(format!("correlation must lie in [0, 1], got {c}")));
                }
            }
            MatrixKind::NonzeroMean { mu } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidSpec(format!("matrix mean must be finite, got {mu}")));
                }
            }
            MatrixKind::LowRank { rank_ratio } => {
                if !(rank_ratio > 0.0 && rank_ratio <= 1.0) {
                    return Err(Error::InvalidSpec(format!("rank ratio must lie in (0, 1], got {rank_ratio}")));
                }
                let inner = self.inner_rank().unwrap_or(0);
                if inner == 0 || inner >= self.rows {
                    return Err(Error::InvalidSpec(format!(
                        "low-rank inner dimension {inner} must satisfy 1 <= R < M = {}",
                        self.rows
                    )));
                }
            }
        }
        Ok(())
    }

    /// Inner dimension of the low-rank recipe, `None` for other kinds.
    pub fn inner_rank(&self) -> Option<usize> {
        match self.kind {
            MatrixKind::LowRank { rank_ratio } => Some((rank_ratio * self.cols as f64).round() as usize),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Signal length N.
    pub len: usize,
    /// Probability that an index belongs to the support.
    pub sparsity_rate: f64,
    /// Number of measurement vectors L (1 for a single vector).
    pub num_vectors: usize,
    /// AR(1) coefficient linking consecutive columns on the support; ignored when L = 1.
    pub temporal_corr: f64,
}

impl SignalSpec {
    pub fn smv(len: usize, sparsity_rate: f64) -> Self {
        Self { len, sparsity_rate, num_vectors: 1, temporal_corr: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.len == 0 {
            return Err(Error::InvalidSpec("signal length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sparsity_rate) {
            return Err(Error::InvalidSpec(format!("sparsity rate must lie in [0, 1], got {}", self.sparsity_rate)));
        }
        if self.num_vectors == 0 {
            return Err(Error::InvalidSpec("number of vectors must be positive".into()));
        }
        if self.num_vectors > 1 && !(self.temporal_corr > -1.0 && self.temporal_corr < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "temporal correlation must lie in (-1, 1), got {}",
                self.temporal_corr
            )));
        }
        Ok(())
    }
}

/// A generated recovery problem together with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub a: DMatrix<f64>,
    /// True signals, N x L.
    pub x: DMatrix<f64>,
    /// Observations, M x L.
    pub y: DMatrix<f64>,
    /// Noise precision; `f64::INFINITY` for noiseless instances (`null` in JSON).
    #[serde(with = "infinite_as_null")]
    pub beta_true: f64,
    /// Shared support, sorted ascending.
    pub support: Vec<usize>,
}

impl ProblemInstance {
    /// Draws matrix, signal and noise from independent streams of `seed`.
    pub fn generate(matrix: &MatrixSpec, signal: &SignalSpec, snr_db: f64, seed: u64) -> Result<Self> {
        if matrix.cols != signal.len {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns but signal length is {}",
                matrix.cols, signal.len
            )));
        }
        let a = gen_matrix(matrix, rng::derive(seed, &[label::MATRIX]))?;
        let (x, support) = gen_signal(signal, rng::derive(seed, &[label::SIGNAL]))?;
        let clean = &a * &x;
        let (y, beta_true) = add_noise(&clean, snr_db, rng::derive(seed, &[label::NOISE]))?;
        Ok(Self { a, x, y, beta_true, support })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instances are always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("bad instance file: {e}")))?;
        let (m, n) = inst.a.shape();
        if inst.x.nrows() != n || inst.y.nrows() != m || inst.x.ncols() != inst.y.ncols() {
            return Err(Error::DimensionMismatch("instance matrices have inconsistent shapes".into()));
        }
        if inst.support.iter().any(|&i| i >= n) {
            return Err(Error::InvalidArgument("support index out of range".into()));
        }
        Ok(inst)
    }

    pub fn num_vectors(&self) -> usize {
        self.x.ncols()
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Symmetric square root of `[C]_{mn} = c^{|m-n|}`, negative eigenvalues clamped to zero.
fn toeplitz_sqrt(size: usize, c: f64) -> DMatrix<f64> {
    if c == 0.0 {
        return DMatrix::identity(size, size);
    }
    let cov = DMatrix::from_fn(size, size, |i, j| c.powi(i.abs_diff(j) as i32));
    let eig = SymmetricEigen::new(cov);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&roots) * q.transpose()
}

/// Generates an `M x N` measurement matrix from `spec`.
pub fn gen_matrix(spec: &MatrixSpec, seed: u64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (m, n) = (spec.rows, spec.cols);
    let mut rng = rng::stream(seed, &[]);
    let a = match spec.kind {
        MatrixKind::IidGaussian => gaussian_matrix(m, n, &mut rng),
        MatrixKind::NonzeroMean { mu } => gaussian_matrix(m, n, &mut rng).add_scalar(mu),
        MatrixKind::Correlated { c } => {
            let g = gaussian_matrix(m, n, &mut rng);
            toeplitz_sqrt(m, c) * g * toeplitz_sqrt(n, c)
        }
        MatrixKind::LowRank { .. } => {
            let r = spec.inner_rank().expect("validated low-rank spec");
            let b = gaussian_matrix(m, r, &mut rng);
            let c = gaussian_matrix(r, n, &mut rng);
            b * c
        }
        MatrixKind::IllConditioned { kappa } => {
            let g = gaussian_matrix(m, n, &mut rng);
            let svd = SVD::try_new(g, true, true, f64::EPSILON, 0)
                .ok_or_else(|| Error::Svd("orthonormal factors for ill-conditioned matrix".into()))?;
            let u = svd.u.expect("u requested");
            let v_t = svd.v_t.expect("v_t requested");
            let k = m.min(n);
            // s_i / s_{i+1} = kappa^{1/(k-1)}, scaled so that ||A||_F^2 = M N.
            let step = if k > 1 { kappa.ln() / (k - 1) as f64 } else { 0.0 };
            let mut sv = DVector::from_fn(k, |i, _| (-(i as f64) * step).exp());
            let scale = ((m * n) as f64 / sv.norm_squared()).sqrt();
            sv *= scale;
            u * DMatrix::from_diagonal(&sv) * v_t
        }
    };
    Ok(a)
}

/// Draws an `N x L` jointly sparse signal and its support.
pub fn gen_signal(spec: &SignalSpec, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    spec.validate()?;
    let (n, l) = (spec.len, spec.num_vectors);
    let mut rng = rng::stream(seed, &[]);
    let support: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < spec.sparsity_rate).collect();
    let alpha = if l > 1 { spec.temporal_corr } else { 0.0 };
    let innovation = (1.0 - alpha * alpha).sqrt();
    let mut x = DMatrix::zeros(n, l);
    for &i in &support {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = prev;
        for col in 1..l {
            let z: f64 = rng.sample(StandardNormal);
            prev = alpha * prev + innovation * z;
            x[(i, col)] = prev;
        }
    }
    Ok((x, support))
}

/// Adds white Gaussian noise at `snr_db`, where SNR = ||clean||^2 / E||W||^2.
///
/// Returns the noisy matrix and the noise precision. `snr_db = +inf` returns
/// `clean` unchanged with an infinite precision.
pub fn add_noise(clean: &DMatrix<f64>, snr_db: f64, seed: u64) -> Result<(DMatrix<f64>, f64)> {
    if snr_db == f64::INFINITY {
        return Ok((clean.clone(), f64::INFINITY));
    }
    let snr = 10f64.powf(snr_db / 10.0);
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidArgument(format!("linear SNR must be positive and finite, got {snr}")));
    }
    let power = clean.norm_squared();
    if power == 0.0 {
        return Err(Error::InvalidArgument("cannot set a finite SNR on an all-zero signal".into()));
    }
    let count = clean.len() as f64;
    let beta = snr * count / power;
    let sd = beta.recip().sqrt();
    let mut rng = rng::stream(seed, &[]);
    let noisy = clean.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal));
    Ok((noisy, beta))
}

/// The unitary-transformed model `r = Phi x + w` with `Phi = U^T A = Lambda V`.
#[derive(Debug, Clone)]
pub struct TransformedModel {
    /// `U^T Y`, M x L.
    pub r: DMatrix<f64>,
    /// `Lambda V`, M x N. Rows beyond the rank of the thin SVD are zero.
    pub phi: DMatrix<f64>,
    /// `Lambda Lambda^T 1`: squared singular values padded with zeros to length M.
    pub lambda: DVector<f64>,
    /// Full M x M orthonormal factor.
    pub u: DMatrix<f64>,
}

/// Borrowed single-column view of a [`TransformedModel`].
#[derive(Debug, Clone)]
pub struct ColumnModel<'a> {
    pub phi: &'a DMatrix<f64>,
    pub lambda: &'a DVector<f64>,
    pub r: DVector<f64>,
}

impl TransformedModel {
    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn cols(&self) -> usize {
        self.phi.ncols()
    }

    pub fn num_vectors(&self) -> usize {
        self.r.ncols()
    }

    pub fn column(&self, l: usize) -> ColumnModel<'_> {
        ColumnModel { phi: &self.phi, lambda: &self.lambda, r: self.r.column(l).into_owned() }
    }

    /// Owned single-vector model for column `l`, sharing the same transform.
    pub fn single_column(&self, l: usize) -> TransformedModel {
        TransformedModel {
            r: self.r.columns(l, 1).into_owned(),
            phi: self.phi.clone(),
            lambda: self.lambda.clone(),
            u: self.u.clone(),
        }
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Extends the orthonormal columns of `basis` to a full orthonormal basis of R^M.
fn complete_basis(basis: DMatrix<f64>) -> DMatrix<f64> {
    let m = basis.nrows();
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..m {
        if cols.len() == m {
            break;
        }
        let mut v = DVector::zeros(m);
        v[e] = 1.0;
        // Two Gram-Schmidt passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / norm);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Computes the economic SVD of `a` once and returns the transformed model for `y`.
pub fn unitary_transform(a: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<TransformedModel> {
    let (m, n) = a.shape();
    if y.nrows() != m {
        return Err(Error::DimensionMismatch(format!("A has {m} rows but Y has {}", y.nrows())));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("measurement matrix is identically zero".into()));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("measurement matrix has non-finite entries".into()));
    }
    let svd = SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd(format!("{m}x{n} measurement matrix did not converge")))?;
    let k = m.min(n);
    let u_thin = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    let u = if k < m { complete_basis(u_thin) } else { u_thin };
    let mut phi = DMatrix::zeros(m, n);
    let mut lambda = DVector::zeros(m);
    for i in 0..k {
        phi.row_mut(i).copy_from(&(v_t.row(i) * sv[i]));
        lambda[i] = sv[i] * sv[i];
    }
    let r = u.transpose() * y;
    Ok(TransformedModel { r, phi, lambda, u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
        SVD::new(a.clone(), false, false).singular_values
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = ProblemInstance::generate(
            &MatrixSpec::new(6, 8, MatrixKind::IidGaussian),
            &SignalSpec::smv(8, 0.5),
            f64::INFINITY,
            4,
        )
        .unwrap();
        let back = ProblemInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
        assert!(back.beta_true.is_infinite());
        assert!(ProblemInstance::from_json("{}").is_err());
    }

    #[test]
    fn every_kind_has_requested_shape() {
        let kinds = [
            MatrixKind::IidGaussian,
            MatrixKind::IllConditioned { kappa: 50.0 },
            MatrixKind::Correlated { c: 0.4 },
            MatrixKind::NonzeroMean { mu: 2.0 },
            MatrixKind::LowRank { rank_ratio: 0.5 },
        ];
        for (m, n) in [(12, 20), (20, 12), (7, 7)] {
            for kind in kinds {
                let spec = MatrixSpec::new(m, n, kind);
                if spec.validate().is_err() {
                    continue;
                }
                let a = gen_matrix(&spec, 11).unwrap();
                assert_eq!(a.shape(), (m, n), "{kind:?}");
            }
        }
    }

    #[test]
    fn ill_conditioned_unit_kappa_has_equal_singular_values() {
        let a = gen_matrix(&MatrixSpec::new(10, 16, MatrixKind::IllConditioned { kappa: 1.0 }), 3).unwrap();
        let sv = singular_values(&a);
        for s in sv.iter() {
            assert_relative_eq!(*s, sv[0], max_relative = 1e-10);
        }
        // ||A||_F^2 = M N
        assert_relative_eq!(a.norm_squared(), 160.0, max_relative = 1e-10);
    }

    #[test]
    fn ill_conditioned_ratios_are_geometric() {
        let a = gen_matrix(&MatrixSpec::new(4, 9, MatrixKind::IllConditioned { kappa: 100.0 }), 5).unwrap();
        let sv = singular_values(&a);
        let step = 100f64.powf(1.0 / 3.0);
        assert_relative_eq!(step, 4.641588833612779, max_relative = 1e-12);
        for i in 0..3 {
            assert_relative_eq!(sv[i] / sv[i + 1], step, max_relative = 1e-9);
        }
    }

    #[test]
    fn ill_conditioned_condition_number_matches_kappa() {
        for &kappa in &[2.0, 100.0, 1e4] {
            let a = gen_matrix(&MatrixSpec::new(30, 40, MatrixKind::IllConditioned { kappa }), 9).unwrap();
            let sv = singular_values(&a);
            assert_relative_eq!(sv[0] / sv[sv.len() - 1], kappa, max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_matrix(&MatrixSpec::new(5, 5, MatrixKind::IllConditioned { kappa: 0.5 }), 0).is_err());
        assert!(gen_matrix(&MatrixSpec::new(5, 10, MatrixKind::LowRank { rank_ratio: 0.5 }), 0).is_err());
        assert!(gen_matrix(&MatrixSpec::new(5, 10, MatrixKind::Correlated { c: 1.5 }), 0).is_err());
        assert!(gen_matrix(&MatrixSpec::new(0, 10, MatrixKind::IidGaussian), 0).is_err());
        assert!(gen_matrix(&MatrixSpec::new(8, 10, MatrixKind::LowRank { rank_ratio: 0.6 }), 0).is_ok());
    }

    #[test]
    fn low_rank_has_inner_rank() {
        let spec = MatrixSpec::new(30, 40, MatrixKind::LowRank { rank_ratio: 0.5 });
        let a = gen_matrix(&spec, 1).unwrap();
        let sv = singular_values(&a);
        assert!(sv[19] > 1e-6 * sv[0]);
        assert!(sv[20] < 1e-10 * sv[0]);
    }

    #[test]
    fn correlated_with_zero_c_is_iid() {
        // Entry covariance over 2000 draws of a 3x3 matrix should be close to the identity.
        let spec = MatrixSpec::new(3, 3, MatrixKind::Correlated { c: 0.0 });
        let draws: Vec<DVector<f64>> = (0..2000)
            .map(|s| {
                let a = gen_matrix(&spec, s).unwrap();
                DVector::from_column_slice(a.as_slice())
            })
            .collect();
        let k = draws.len() as f64;
        let mut cov = DMatrix::<f64>::zeros(9, 9);
        for d in &draws {
            cov += d * d.transpose();
        }
        cov /= k;
        for i in 0..9 {
            for j in 0..9 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - target).abs() < 0.12, "cov[{i},{j}] = {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn correlated_sqrt_squares_back() {
        let s = toeplitz_sqrt(6, 0.7);
        let c = DMatrix::from_fn(6, 6, |i, j| 0.7f64.powi(i.abs_diff(j) as i32));
        assert_relative_eq!(&s * &s, c, epsilon = 1e-10);
    }

    #[test]
    fn signal_edge_rates() {
        let (x, s) = gen_signal(&SignalSpec::smv(50, 0.0), 1).unwrap();
        assert!(s.is_empty());
        assert!(x.iter().all(|&v| v == 0.0));
        let (x, s) = gen_signal(&SignalSpec::smv(50, 1.0), 1).unwrap();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert!(x.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn support_size_is_binomial() {
        // Binomial(1000, 0.1): mean 100, std sqrt(90) = 9.487.
        let sizes: Vec<f64> =
            (0..2000).map(|s| gen_signal(&SignalSpec::smv(1000, 0.1), s).unwrap().1.len() as f64).collect();
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        let var = sizes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sizes.len() - 1) as f64;
        assert!((mean - 100.0).abs() < 1.0, "mean {mean}");
        assert!((var.sqrt() - 90f64.sqrt()).abs() < 0.5, "std {}", var.sqrt());
    }

    #[test]
    fn off_support_rows_are_zero_in_every_column() {
        let spec = SignalSpec { len: 40, sparsity_rate: 0.3, num_vectors: 5, temporal_corr: 0.6 };
        let (x, support) = gen_signal(&spec, 4).unwrap();
        for i in 0..40 {
            let on = support.contains(&i);
            for l in 0..5 {
                assert_eq!(x[(i, l)] != 0.0, on);
            }
        }
    }

    #[test]
    fn ar1_rows_have_lag_one_autocorrelation_alpha() {
        for &alpha in &[0.8, -0.5, 0.0] {
            let spec = SignalSpec { len: 30, sparsity_rate: 0.5, num_vectors: 400, temporal_corr: alpha };
            let (x, support) = gen_signal(&spec, 17).unwrap();
            let (mut num, mut den) = (0.0, 0.0);
            for &i in &support {
                let row = x.row(i);
                for l in 1..row.len() {
                    num += row[l] * row[l - 1];
                }
                den += row.iter().map(|v| v * v).sum::<f64>();
            }
            let rho = num / den;
            assert!((rho - alpha).abs() < 0.05, "alpha {alpha}: lag-1 {rho}");
        }
    }

    #[test]
    fn noiseless_snr_keeps_signal() {
        let clean = DMatrix::from_element(3, 2, 1.5);
        let (y, beta) = add_noise(&clean, f64::INFINITY, 0).unwrap();
        assert_eq!(y, clean);
        assert!(beta.is_infinite());
    }

    #[test]
    fn noise_rejects_degenerate_inputs() {
        let clean = DMatrix::from_element(3, 2, 1.0);
        assert!(add_noise(&clean, f64::NEG_INFINITY, 0).is_err());
        assert!(add_noise(&clean, f64::NAN, 0).is_err());
        assert!(add_noise(&DMatrix::zeros(3, 2), 20.0, 0).is_err());
    }

    #[test]
    fn empirical_snr_and_noise_variance() {
        let a = gen_matrix(&MatrixSpec::new(40, 50, MatrixKind::IidGaussian), 2).unwrap();
        let (x, _) = gen_signal(&SignalSpec::smv(50, 0.2), 2).unwrap();
        let clean = &a * &x;
        let (mut sig, mut noise) = (0.0, 0.0);
        let mut var_ratio = 0.0;
        let trials = 1000;
        for t in 0..trials {
            let (y, beta) = add_noise(&clean, 25.0, t).unwrap();
            let w = &y - &clean;
            sig += clean.norm_squared();
            noise += w.norm_squared();
            var_ratio += w.norm_squared() / w.len() as f64 * beta;
        }
        let snr_db = 10.0 * (sig / noise).log10();
        assert!((snr_db - 25.0).abs() < 0.2, "empirical SNR {snr_db}");
        let var_ratio = var_ratio / trials as f64;
        assert!((var_ratio - 1.0).abs() < 0.02, "variance ratio {var_ratio}");
    }

    #[test]
    fn identity_transform() {
        let a = DMatrix::<f64>::identity(5, 5);
        let y = DMatrix::from_fn(5, 2, |i, j| (i as f64) - 2.0 * j as f64 + 0.5);
        let t = unitary_transform(&a, &y).unwrap();
        for i in 0..5 {
            assert_relative_eq!(t.lambda[i], 1.0, epsilon = 1e-12);
            for j in 0..5 {
                assert_relative_eq!(t.phi[(i, j)].abs(), if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        // r = U^T y with U a signed permutation
        for l in 0..2 {
            let mut got: Vec<f64> = t.r.column(l).iter().map(|v| v.abs()).collect();
            let mut want: Vec<f64> = y.column(l).iter().map(|v| v.abs()).collect();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                assert_relative_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transform_invariants() {
        for (m, n) in [(30, 45), (45, 30), (20, 20)] {
            let a = gen_matrix(&MatrixSpec::new(m, n, MatrixKind::Correlated { c: 0.5 }), 8).unwrap();
            let y = gaussian_matrix(m, 3, &mut rng::stream(1, &[]));
            let t = unitary_transform(&a, &y).unwrap();
            assert_eq!(t.u.shape(), (m, m));
            assert_eq!(t.lambda.len(), m);
            assert_relative_eq!(t.u.transpose() * &t.u, DMatrix::identity(m, m), epsilon = 1e-10);
            for l in 0..3 {
                assert_relative_eq!(t.r.column(l).norm(), y.column(l).norm(), max_relative = 1e-10);
            }
            for i in 0..m {
                let row_norm: f64 = t.phi.row(i).iter().map(|v| v * v).sum();
                assert!((t.lambda[i] - row_norm).abs() <= 1e-10 * row_norm.max(1.0));
            }
            // U Phi reproduces A
            assert_relative_eq!(&t.u * &t.phi, a, epsilon = 1e-9);
        }
    }

    #[test]
    fn transform_rejects_zero_matrix() {
        assert!(unitary_transform(&DMatrix::zeros(3, 4), &DMatrix::zeros(3, 1)).is_err());
        assert!(unitary_transform(&DMatrix::identity(3, 4), &DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn generation_is_reproducible() {
        let m = MatrixSpec::new(20, 30, MatrixKind::NonzeroMean { mu: 1.0 });
        let s = SignalSpec::smv(30, 0.2);
        let p = ProblemInstance::generate(&m, &s, 30.0, 99).unwrap();
        let q = ProblemInstance::generate(&m, &s, 30.0, 99).unwrap();
        assert_eq!(p.a, q.a);
        assert_eq!(p.y, q.y);
        assert_eq!(p.support, q.support);
        let other = ProblemInstance::generate(&m, &s, 30.0, 100).unwrap();
        assert_ne!(p.a, other.a);
    }
}
