//! Prior-averaged states, the Lyapunov solution and Fock-space MSL functionals.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::states::{state_columns, TRACE_TOL};
use super::{poly_to_fock, FockOperator, HermitianEigen};
use crate::bayes::EstimationProblem;
use crate::error::{Error, Result};
use crate::phase_space::PhasePolynomial;

/// Truncation ladder and tolerances of the oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// Starting truncation dimension.
    pub dim: usize,
    /// Largest dimension the doubling ladder may reach.
    pub max_dim: usize,
    /// Largest tolerated trace deficit `1 − Tr ρ₀`.
    pub trace_tol: f64,
    /// Largest accepted change of the global MSL between `d` and `2d`.
    pub conv_tol: f64,
    /// Lyapunov pairs with `λᵢ + λⱼ ≤ eig_floor·λ_max` are dropped.
    pub eig_floor: f64,
    /// Eigenvalues of a PVM observable closer than `cluster_tol·range` share a block.
    pub cluster_tol: f64,
    /// PVM blocks with `Tr(Pρ₀)` below this are skipped.
    pub prob_floor: f64,
    /// Re-run the final dimension with a doubled θ-order.
    pub check_quadrature: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dim: 60,
            max_dim: 960,
            trace_tol: TRACE_TOL,
            conv_tol: 1e-6,
            eig_floor: 1e-12,
            cluster_tol: 1e-8,
            prob_floor: 1e-12,
            check_quadrature: true,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trace_tol", self.trace_tol),
            ("conv_tol", self.conv_tol),
            ("eig_floor", self.eig_floor),
            ("cluster_tol", self.cluster_tol),
            ("prob_floor", self.prob_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("oracle {name} must be positive")));
            }
        }
        if self.dim < 2 || self.max_dim < self.dim {
            return Err(Error::InvalidParameter(format!(
                "oracle dimensions must satisfy 2 <= dim <= max_dim, got {} and {}",
                self.dim, self.max_dim
            )));
        }
        Ok(())
    }
}

/// `S` with `Sρ₀ + ρ₀S = 2ρ̄` on the support of `ρ₀`.
#[derive(Clone, Debug)]
pub struct LyapunovSolution {
    pub s: FockOperator,
    /// `max |Sρ₀ + ρ₀S − 2ρ̄|` over the retained support.
    pub residual: f64,
    /// Number of `ρ₀` eigenvalues above the floor.
    pub retained: usize,
    /// `Tr(ρ₀S²)`.
    pub weighted_norm: f64,
}

/// Eigen-basis Lyapunov solve: `S'ᵢⱼ = 2ρ̄'ᵢⱼ/(λᵢ+λⱼ)` where the denominator exceeds the floor.
pub fn solve_lyapunov(rho0: &FockOperator, rhobar: &FockOperator) -> LyapunovSolution {
    solve_lyapunov_with(&rho0.hermitian_eigen(), rhobar, OracleConfig::default().eig_floor)
}

pub(crate) fn solve_lyapunov_with(eig: &HermitianEigen, rhobar: &FockOperator, eig_floor: f64) -> LyapunovSolution {
    let d = eig.values.len();
    let lam = &eig.values;
    let lmax = lam.iter().fold(0.0f64, |a, &v| a.max(v));
    let floor = eig_floor * lmax;
    let rb = rhobar.conjugate_by(&eig.vectors);
    let mut sp = DMatrix::<Complex64>::zeros(d, d);
    let mut residual: f64 = 0.0;
    let mut weighted_norm = 0.0;
    for i in 0..d {
        for j in 0..d {
            let denom = lam[i] + lam[j];
            if denom > floor {
                let v = rb.entries[(i, j)] * (2.0 / denom);
                sp[(i, j)] = v;
                weighted_norm += lam[i] * v.norm_sqr();
            } else if lam[i].max(lam[j]) > floor {
                residual = residual.max(2.0 * rb.entries[(i, j)].norm());
            }
        }
    }
    let retained = lam.iter().filter(|&&v| 2.0 * v > floor).count();
    let sp = FockOperator::new(sp);
    let s = sp.conjugate_by(&eig.vectors.adjoint());
    let s = FockOperator::new((&s.entries + s.entries.adjoint()) * Complex64::new(0.5, 0.0));
    // Residual in the original basis, restricted to the retained support.
    let check = s.conjugate_by(&eig.vectors);
    for i in 0..d {
        for j in 0..d {
            if lam[i] + lam[j] > floor {
                let r = check.entries[(i, j)] * (lam[i] + lam[j]) - rb.entries[(i, j)] * 2.0;
                residual = residual.max(r.norm());
            }
        }
    }
    LyapunovSolution {
        s,
        residual,
        retained,
        weighted_norm,
    }
}

/// `Tr(ρ₀X²)` for Hermitian `X`.
pub fn weighted_norm_sq(x: &FockOperator, rho0: &FockOperator) -> f64 {
    rho0.matmul(x).trace_product(x).re
}

/// Compressed `ρ₀`, `ρ̄` and their trace deficit at dimension `d`.
pub(crate) struct AveragedStates {
    pub rho0: FockOperator,
    pub rhobar: FockOperator,
    pub deficit: f64,
}

pub(crate) fn build_averaged(problem: &EstimationProblem, rule: &[(f64, f64)], d: usize) -> Result<AveragedStates> {
    let per_node: Vec<Result<(f64, f64, super::states::StateColumns)>> = rule
        .par_iter()
        .map(|&(theta, w)| Ok((w, problem.f(theta), state_columns(&problem.model.encode(theta), d)?)))
        .collect();
    let mut columns_re: Vec<f64> = Vec::new();
    let mut columns_im: Vec<f64> = Vec::new();
    let mut fvals: Vec<f64> = Vec::new();
    let mut any_imag = false;
    let mut deficit = 0.0;
    let mut total_weight = 0.0;
    let mut ncols = 0;
    for node in per_node {
        let (w, f, cols) = node?;
        total_weight += w;
        deficit += w * cols.deficit;
        for (pm, x) in cols.vectors {
            let scale = (w * pm).sqrt();
            for c in &x {
                columns_re.push(scale * c.re);
                columns_im.push(scale * c.im);
                any_imag |= c.im != 0.0;
            }
            fvals.push(f);
            ncols += 1;
        }
    }
    let y_re = DMatrix::from_vec(d, ncols, columns_re);
    let yf_re = scale_columns(&y_re, &fvals);
    let (rho0, rhobar) = if any_imag {
        let y_im = DMatrix::from_vec(d, ncols, columns_im);
        let yf_im = scale_columns(&y_im, &fvals);
        // Y Zᵀ* with Y = A + iB, Z = C + iD: (AC' + BD') + i(BC' − AD')
        let prod = |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, e: &DMatrix<f64>| {
            let re = a * c.transpose() + b * e.transpose();
            let im = b * c.transpose() - a * e.transpose();
            FockOperator::new(re.zip_map(&im, Complex64::new))
        };
        (prod(&y_re, &y_im, &y_re, &y_im), prod(&yf_re, &yf_im, &y_re, &y_im))
    } else {
        (
            FockOperator::from_real(&y_re * y_re.transpose()),
            FockOperator::from_real(&yf_re * y_re.transpose()),
        )
    };
    let trace = rho0.trace().re;
    let deficit = deficit.max(total_weight - trace).max(0.0);
    Ok(AveragedStates { rho0, rhobar, deficit })
}

fn scale_columns(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &v) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(v);
    }
    out
}

/// `(ρ₀, ρ̄)` at dimension `d` over the problem's θ-rule; fails if the trace deficit exceeds `1e−8`.
pub fn averaged_states_fock(problem: &EstimationProblem, d: usize) -> Result<(FockOperator, FockOperator)> {
    let rule = problem.theta_rule()?;
    let avg = build_averaged(problem, &rule, d)?;
    if avg.deficit > TRACE_TOL {
        return Err(Error::TruncationDeficit {
            dim: d,
            deficit: avg.deficit,
        });
    }
    Ok((avg.rho0, avg.rhobar))
}

/// The oracle at one truncation dimension.
#[derive(Clone, Debug)]
pub struct FockOracle {
    pub dim: usize,
    pub lambda: f64,
    pub rho0: FockOperator,
    pub rhobar: FockOperator,
    pub rho0_eigen: HermitianEigen,
    pub lyapunov: LyapunovSolution,
    /// `1 − Tr ρ₀` (prior mass lost to truncation).
    pub trace_deficit: f64,
    /// Number of θ nodes used.
    pub theta_nodes: usize,
    pub config: OracleConfig,
}

/// Result of the truncation ladder.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub oracle: FockOracle,
    /// `(d, global MSL, trace deficit)` for every dimension visited.
    pub history: Vec<(usize, f64, f64)>,
    /// Change of the global MSL under θ-order doubling, when checked.
    pub quadrature_change: Option<f64>,
    pub converged: bool,
}

impl OracleRun {
    /// Change of the global MSL over the last doubling step.
    pub fn last_change(&self) -> f64 {
        let n = self.history.len();
        if n < 2 {
            f64::INFINITY
        } else {
            (self.history[n - 1].1 - self.history[n - 2].1).abs()
        }
    }
}

impl FockOracle {
    /// Builds the oracle at dimension `d` without convergence checks.
    pub fn build(problem: &EstimationProblem, d: usize, config: OracleConfig) -> Result<Self> {
        let rule = problem.theta_rule()?;
        Self::build_with_rule(problem, &rule, d, config)
    }

    fn build_with_rule(problem: &EstimationProblem, rule: &[(f64, f64)], d: usize, config: OracleConfig) -> Result<Self> {
        config.validate()?;
        let avg = build_averaged(problem, rule, d)?;
        let rho0_eigen = avg.rho0.hermitian_eigen();
        if rho0_eigen.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenFailure { dim: d });
        }
        let lyapunov = solve_lyapunov_with(&rho0_eigen, &avg.rhobar, config.eig_floor);
        log::debug!(
            "oracle d={d}: deficit {:.3e}, Lyapunov residual {:.3e}, retained {}",
            avg.deficit,
            lyapunov.residual,
            lyapunov.retained
        );
        Ok(Self {
            dim: d,
            lambda: problem.prior_lambda()?,
            rho0: avg.rho0,
            rhobar: avg.rhobar,
            rho0_eigen,
            lyapunov,
            trace_deficit: avg.deficit,
            theta_nodes: rule.len(),
            config,
        })
    }

    /// Doubles `d` from `config.dim` until the global MSL moves by less than
    /// `conv_tol` and the trace deficit is below `trace_tol`.
    pub fn converged(problem: &EstimationProblem, config: OracleConfig) -> Result<OracleRun> {
        let run = Self::ladder(problem, config)?;
        if run.converged {
            return Ok(run);
        }
        let (dim, value, _) = *run.history.last().expect("non-empty history");
        let change = match run.quadrature_change {
            Some(c) if c >= config.conv_tol => {
                return Err(Error::OracleNotConverged {
                    reason: "θ-quadrature refinement moved the global MSL".into(),
                    dim,
                    last_value: value,
                    last_change: c,
                })
            }
            _ => run.last_change(),
        };
        Err(Error::OracleNotConverged {
            reason: format!("no convergence up to d={}", config.max_dim),
            dim,
            last_value: value,
            last_change: change,
        })
    }

    /// Like [`FockOracle::converged`], but returns the largest dimension
    /// reached with `converged = false` instead of failing. A truncated global
    /// MSL never lies below the exact one.
    pub fn ladder(problem: &EstimationProblem, config: OracleConfig) -> Result<OracleRun> {
        config.validate()?;
        let rule = problem.theta_rule()?;
        let mut d = config.dim;
        let mut current = Self::build_with_rule(problem, &rule, d, config)?;
        let mut history = vec![(d, current.global_msl(), current.trace_deficit)];
        let mut converged = false;
        while d < config.max_dim {
            let next_d = (2 * d).min(config.max_dim);
            let next = Self::build_with_rule(problem, &rule, next_d, config)?;
            let v_prev = current.global_msl();
            let v_next = next.global_msl();
            if v_next > v_prev + 1e-9 {
                log::warn!("global MSL increased from {v_prev} (d={d}) to {v_next} (d={next_d})");
            }
            history.push((next_d, v_next, next.trace_deficit));
            d = next_d;
            current = next;
            if (v_next - v_prev).abs() < config.conv_tol && current.trace_deficit <= config.trace_tol {
                converged = true;
                break;
            }
        }
        let mut quadrature_change = None;
        if converged && config.check_quadrature && !problem.prior.is_discrete() {
            let refined = problem
                .prior
                .rule(2 * rule.len(), problem.quadrature.support_sigmas);
            let check = Self::build_with_rule(problem, &refined, d, config)?;
            let change = (check.global_msl() - current.global_msl()).abs();
            quadrature_change = Some(change);
            converged = change < config.conv_tol;
        }
        Ok(OracleRun {
            oracle: current,
            history,
            quadrature_change,
            converged,
        })
    }

    /// `λ − Tr(ρ₀S²)` at this dimension.
    pub fn global_msl(&self) -> f64 {
        self.lambda - self.lyapunov.weighted_norm
    }

    pub fn spm(&self) -> &FockOperator {
        &self.lyapunov.s
    }

    /// Weyl quantization at this dimension.
    pub fn quantize(&self, poly: &PhasePolynomial) -> FockOperator {
        poly_to_fock(poly, self.dim)
    }

    /// `Tr(ρ₀X²)`.
    pub fn weighted_norm_sq(&self, x: &FockOperator) -> f64 {
        weighted_norm_sq(x, &self.rho0)
    }

    /// `λ + Tr(ρ₀X²) − 2Tr(ρ̄X)` evaluated on the truncated space.
    pub fn msl_of_operator(&self, x: &FockOperator) -> f64 {
        self.lambda + self.weighted_norm_sq(x) - 2.0 * self.rhobar.trace_product(x).re
    }

    /// `Tr(ρ₀·½{X, B})`.
    pub fn jordan_trace(&self, x: &FockOperator, b: &FockOperator) -> f64 {
        self.rho0.matmul(x).trace_product(b).re
    }

    /// `Tr(ρ̄B)`.
    pub fn rhobar_trace(&self, b: &FockOperator) -> f64 {
        self.rhobar.trace_product(b).re
    }

    /// MSL of the eigen-PVM of `op` combined with the posterior-mean estimator.
    pub fn pm_msl_of(&self, op: &FockOperator) -> f64 {
        pm_msl_with(self.lambda, &self.rho0, &self.rhobar, op, &self.config)
    }
}

/// Global MSL with the convergence ladder.
pub fn global_msl(problem: &EstimationProblem, config: OracleConfig) -> Result<f64> {
    Ok(FockOracle::converged(problem, config)?.oracle.global_msl())
}

fn pm_msl_with(lambda: f64, rho0: &FockOperator, rhobar: &FockOperator, op: &FockOperator, config: &OracleConfig) -> f64 {
    let eig = op.hermitian_eigen();
    let d = eig.values.len();
    let u = &eig.vectors;
    let r0u = rho0.matmul(u);
    let rbu = rhobar.matmul(u);
    let diag = |m: &FockOperator, k: usize| -> f64 {
        (0..d).map(|i| (u.entries[(i, k)].conj() * m.entries[(i, k)]).re).sum()
    };
    let range = eig.values.last().copied().unwrap_or(0.0) - eig.values.first().copied().unwrap_or(0.0);
    let tol = config.cluster_tol * range.max(f64::MIN_POSITIVE);
    let mut gain = 0.0;
    let mut k = 0;
    while k < d {
        let start = k;
        let (mut p0, mut pb) = (0.0, 0.0);
        while k < d && eig.values[k] - eig.values[start] <= tol {
            p0 += diag(&r0u, k);
            pb += diag(&rbu, k);
            k += 1;
        }
        if p0 >= config.prob_floor {
            gain += pb * pb / p0;
        }
    }
    lambda - gain
}

/// PM-MSL of the eigen-PVM of `op` at dimension `d`.
pub fn pm_msl_operator_pvm(problem: &EstimationProblem, op: &FockOperator, d: usize) -> Result<f64> {
    let (rho0, rhobar) = averaged_states_fock(problem, d)?;
    let op = if op.dim() == d { op.clone() } else { op.crop(d.min(op.dim())) };
    Ok(pm_msl_with(problem.prior_lambda()?, &rho0, &rhobar, &op, &OracleConfig::default()))
}
