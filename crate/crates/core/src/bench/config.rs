//! Experiment configuration.
//!
//! Configs are TOML files. The first key must be `schema_version = 1`:
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! snr_db = 60.0
//! trials = 20
//! solvers = ["uamp_sbl", "tipping_sbl", "oracle"]
//! threads = 0            # 0 = one worker per core
//! record_runtime = true  # false writes NA, making the CSV reproducible byte for byte
//! output = "results.csv"
//!
//! [matrix]
//! kind = "correlated"    # iid_gaussian | ill_conditioned | correlated | nonzero_mean | low_rank
//! rows = 160
//! cols = 200
//!
//! [signal]
//! sparsity_rate = 0.1
//! num_vectors = 1
//! temporal_corr = 0.0
//!
//! [sweep]                # omitted for iid_gaussian, which runs as one point
//! param = "c"            # kappa | c | mu | rank_ratio, must belong to matrix.kind
//! values = [0.1, 0.2, 0.3]
//!
//! [stop]
//! tol = 1e-8
//! max_iter = 300
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MatrixKind, MatrixSpec, SignalSpec};
use crate::uamp::StopRule;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    UampSbl,
    UampSblV1,
    TippingSbl,
    TippingSblAutoEps,
    UampSblMmv,
    UampTsbl,
    Oracle,
}

impl Solver {
    pub const ALL: [Solver; 7] = [
        Solver::UampSbl,
        Solver::UampSblV1,
        Solver::TippingSbl,
        Solver::TippingSblAutoEps,
        Solver::UampSblMmv,
        Solver::UampTsbl,
        Solver::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Solver::UampSbl => "uamp_sbl",
            Solver::UampSblV1 => "uamp_sbl_v1",
            Solver::TippingSbl => "tipping_sbl",
            Solver::TippingSblAutoEps => "tipping_sbl_auto_eps",
            Solver::UampSblMmv => "uamp_sbl_mmv",
            Solver::UampTsbl => "uamp_tsbl",
            Solver::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| Error::Config(format!("unknown solver '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    IidGaussian,
    IllConditioned,
    Correlated,
    NonzeroMean,
    LowRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Kappa,
    C,
    Mu,
    RankRatio,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Kappa => "kappa",
            SweepParam::C => "c",
            SweepParam::Mu => "mu",
            SweepParam::RankRatio => "rank_ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSection {
    pub kind: KindName,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub sparsity_rate: f64,
    #[serde(default = "one")]
    pub num_vectors: usize,
    #[serde(default)]
    pub temporal_corr: f64,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub snr_db: f64,
    pub trials: usize,
    pub solvers: Vec<Solver>,
    /// Worker threads; 0 lets the pool pick one per core.
    #[serde(default)]
    pub threads: usize,
    /// When false the runtime column is written as NA.
    #[serde(default = "yes")]
    pub record_runtime: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub matrix: MatrixSection,
    pub signal: SignalSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub stop: StopRule,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::Config("no solvers requested".into()));
        }
        let expected = match self.matrix.kind {
            KindName::IllConditioned => Some(SweepParam::Kappa),
            KindName::Correlated => Some(SweepParam::C),
            KindName::NonzeroMean => Some(SweepParam::Mu),
            KindName::LowRank => Some(SweepParam::RankRatio),
            KindName::IidGaussian => None,
        };
        match (&self.sweep, expected) {
            (None, None) => {}
            (Some(sweep), _) if Some(sweep.param) != expected => {
                return Err(Error::Config(format!(
                    "sweep.param '{}' is not a parameter of matrix kind {:?}",
                    sweep.param.as_str(),
                    self.matrix.kind
                )));
            }
            (Some(sweep), _) if sweep.values.is_empty() => {
                return Err(Error::Config("sweep.values is empty".into()));
            }
            (Some(_), _) => {}
            (None, Some(param)) => {
                return Err(Error::Config(format!(
                    "a [sweep] over '{}' is required for this matrix kind",
                    param.as_str()
                )));
            }
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        self.stop.validate()?;
        for i in 0..self.sweep_values().len() {
            self.matrix_spec(i)?.validate()?;
        }
        self.signal_spec().validate()?;
        Ok(())
    }

    /// Swept values; a single `0` when there is no sweep.
    pub fn sweep_values(&self) -> &[f64] {
        self.sweep.as_ref().map_or(&[0.0], |s| &s.values)
    }

    /// Name of the swept parameter, `none` without a sweep.
    pub fn sweep_name(&self) -> &'static str {
        self.sweep.as_ref().map_or("none", |s| s.param.as_str())
    }

    /// Matrix spec for sweep point `index`.
    pub fn matrix_spec(&self, index: usize) -> Result<MatrixSpec> {
        let v = *self
            .sweep_values()
            .get(index)
            .ok_or_else(|| Error::Config(format!("sweep index {index} out of range")))?;
        let kind = match self.sweep.as_ref().map(|s| s.param) {
            None => MatrixKind::IidGaussian,
            Some(SweepParam::Kappa) => MatrixKind::IllConditioned { kappa: v },
            Some(SweepParam::C) => MatrixKind::Correlated { c: v },
            Some(SweepParam::Mu) => MatrixKind::NonzeroMean { mu: v },
            Some(SweepParam::RankRatio) => MatrixKind::LowRank { rank_ratio: v },
        };
        Ok(MatrixSpec::new(self.matrix.rows, self.matrix.cols, kind))
    }

    pub fn signal_spec(&self) -> SignalSpec {
        SignalSpec {
            len: self.matrix.cols,
            sparsity_rate: self.signal.sparsity_rate,
            num_vectors: self.signal.num_vectors,
            temporal_corr: self.signal.temporal_corr,
        }
    }
}
