//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use spm_core::{
    Covariance, EstimationProblem, GaussianState, LossMap, OracleConfig, ParametricGaussianModel, Prior,
    QuadratureConfig,
};

use crate::basis::BasisSpec;
use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub prior: PriorSpec,
    #[serde(default)]
    pub loss: LossSpec,
    pub bases: Vec<BasisSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Displacement,
    Squeezing,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProbeSpec {
    Vacuum,
    Thermal { nbar: f64 },
    Coherent { re: f64, im: f64 },
    /// Mean `[q, p]` and covariance `[V_qq, V_qp, V_pp]`.
    Gaussian { mean: [f64; 2], cov: [f64; 3] },
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Gaussian,
    Uniform,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub kind: PriorKind,
    #[serde(default)]
    pub mean: f64,
    /// Prior variance for `solve`, `oracle` and `verify`; `sweep` uses its grid.
    pub variance: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum LossSpec {
    #[default]
    Identity,
    Log,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Explicit prior variances; overrides the log grid.
    pub values: Option<Vec<f64>>,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            values: None,
            min: 1e-3,
            max: 1.0,
            points: 25,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub dim: usize,
    pub max_dim: usize,
    pub trace_tol: f64,
    pub conv_tol: f64,
    pub eig_floor: f64,
    pub cluster_tol: f64,
    pub prob_floor: f64,
    pub check_quadrature: bool,
    /// Binary dump of the global estimator operator written by `oracle`.
    pub dump: Option<PathBuf>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        let c = OracleConfig::default();
        Self {
            dim: c.dim,
            max_dim: c.max_dim,
            trace_tol: c.trace_tol,
            conv_tol: c.conv_tol,
            eig_floor: c.eig_floor,
            cluster_tol: c.cluster_tol,
            prob_floor: c.prob_floor,
            check_quadrature: c.check_quadrature,
            dump: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub min_order: usize,
    pub max_order: usize,
    pub rel_tol: f64,
    pub support_sigmas: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        let c = QuadratureConfig::default();
        Self {
            min_order: c.min_order,
            max_order: c.max_order,
            rel_tol: c.rel_tol,
            support_sigmas: c.support_sigmas,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Stationarity and orthogonality threshold.
    pub residual_tol: f64,
    /// Allowed violation of each inequality in the MSL chain.
    pub chain_slack: f64,
    /// Threshold on the excess-MSL identity.
    pub identity_tol: f64,
    /// Size of the random coefficient perturbation of the negative control.
    pub perturbation: f64,
    /// Highest degree of the Wigner-ratio fit.
    pub fit_degree: usize,
    /// Fit residual below which the ratio counts as an exact polynomial.
    pub fit_tol: f64,
    /// Replace the solved coefficients with perturbed ones before the
    /// stationarity check, which must then fail.
    pub inject_perturbation: bool,
    /// Monte Carlo trials for single-quadrature strategies.
    pub mc_trials: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            residual_tol: 1e-6,
            chain_slack: 1e-6,
            identity_tol: 1e-4,
            perturbation: 1e-2,
            fit_degree: 4,
            fit_tol: 1e-6,
            inject_perturbation: false,
            mc_trials: 200_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.bases.is_empty() {
            return Err(CliError::Config("at least one basis is required".into()));
        }
        for basis in &self.bases {
            basis.resolve_static()?;
        }
        if let Some(v) = self.prior.variance {
            if !(v >= 0.0) {
                return Err(CliError::Config(format!("prior variance must be non-negative, got {v}")));
            }
        }
        self.sweep_grid()?;
        self.oracle_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.quadrature_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        let v = &self.verify;
        for (name, x) in [
            ("verify.residual_tol", v.residual_tol),
            ("verify.chain_slack", v.chain_slack),
            ("verify.identity_tol", v.identity_tol),
            ("verify.perturbation", v.perturbation),
            ("verify.fit_tol", v.fit_tol),
        ] {
            if !(x > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive, got {x}")));
            }
        }
        if v.mc_trials == 0 {
            return Err(CliError::Config("verify.mc_trials must be at least 1".into()));
        }
        self.probe()?;
        Ok(())
    }

    pub fn probe(&self) -> Result<GaussianState, CliError> {
        let state = match &self.model.probe {
            ProbeSpec::Vacuum => GaussianState::vacuum(),
            ProbeSpec::Thermal { nbar } => {
                GaussianState::thermal(*nbar).map_err(|e| CliError::Config(e.to_string()))?
            }
            ProbeSpec::Coherent { re, im } => GaussianState::coherent(Complex64::new(*re, *im)),
            ProbeSpec::Gaussian { mean, cov } => {
                let cov = Covariance::new(cov[0], cov[1], cov[2]);
                if !(cov.qq > 0.0 && cov.pp > 0.0 && cov.det() >= 0.25 - 1e-12) {
                    return Err(CliError::Config(format!(
                        "probe covariance violates the uncertainty principle (det = {})",
                        cov.det()
                    )));
                }
                GaussianState::new(*mean, cov)
            }
        };
        Ok(state)
    }

    pub fn oracle_config(&self) -> OracleConfig {
        let o = &self.oracle;
        OracleConfig {
            dim: o.dim,
            max_dim: o.max_dim,
            trace_tol: o.trace_tol,
            conv_tol: o.conv_tol,
            eig_floor: o.eig_floor,
            cluster_tol: o.cluster_tol,
            prob_floor: o.prob_floor,
            check_quadrature: o.check_quadrature,
        }
    }

    pub fn quadrature_config(&self) -> QuadratureConfig {
        let q = &self.quadrature;
        QuadratureConfig {
            min_order: q.min_order,
            max_order: q.max_order,
            rel_tol: q.rel_tol,
            support_sigmas: q.support_sigmas,
        }
    }

    /// Prior variances of the sweep, ascending and deduplicated.
    pub fn sweep_grid(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        let mut grid = match &s.values {
            Some(values) => values.clone(),
            None => {
                if !(s.min > 0.0 && s.max >= s.min) || s.points == 0 {
                    return Err(CliError::Config(format!(
                        "sweep needs 0 < min <= max and points >= 1, got min={}, max={}, points={}",
                        s.min, s.max, s.points
                    )));
                }
                if s.points == 1 {
                    vec![s.min]
                } else {
                    let (lo, hi) = (s.min.ln(), s.max.ln());
                    (0..s.points)
                        .map(|k| (lo + (hi - lo) * k as f64 / (s.points - 1) as f64).exp())
                        .collect()
                }
            }
        };
        if grid.is_empty() {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if let Some(bad) = grid.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(CliError::Config(format!("sweep variances must be positive, got {bad}")));
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Ok(grid)
    }

    /// The configured problem at prior variance `variance`.
    pub fn problem(&self, variance: f64) -> Result<EstimationProblem, CliError> {
        let probe = self.probe()?;
        let model = match self.model.kind {
            ModelKind::Displacement => ParametricGaussianModel::Displacement { probe },
            ModelKind::Squeezing => ParametricGaussianModel::Squeezing { probe },
        };
        let prior = match self.prior.kind {
            PriorKind::Gaussian => Prior::Gaussian {
                mean: self.prior.mean,
                variance,
            },
            PriorKind::Uniform => Prior::uniform_from_variance(self.prior.mean, variance),
        };
        let loss = match self.loss {
            LossSpec::Identity => LossMap::Identity,
            LossSpec::Log => LossMap::Log,
        };
        EstimationProblem::with_quadrature(model, prior, loss, self.quadrature_config())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The problem at the configured single prior variance.
    pub fn single_problem(&self) -> Result<EstimationProblem, CliError> {
        let variance = self
            .prior
            .variance
            .ok_or_else(|| CliError::Config("prior.variance is required for this command".into()))?;
        self.problem(variance)
    }
}
