//! Homodyne strategies: likelihoods, estimators, MSL and Monte Carlo.
//!
//! Measuring `q_φ = q cos φ + p sin φ` on a Gaussian state gives a Gaussian
//! outcome with mean `cᵀr̄(θ)` and variance `cᵀV(θ)c`, `c = (cos φ, sin φ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bayes::{EstimationProblem, Prior};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_interval_lenient, QuadratureConfig};
use crate::solver::eval_ascending;

/// Half-width of the outcome window in likelihood standard deviations.
pub const OUTCOME_WINDOW: f64 = 10.0;

/// Outer θ-tolerance of nested integrals relative to the problem's tolerance.
const NESTED_OUTER_TOL_FACTOR: f64 = 10.0;

/// Homodyne detection of the quadrature at angle φ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomodyneMeasurement {
    pub angle: f64,
}

impl HomodyneMeasurement {
    pub fn new(angle: f64) -> Self {
        Self {
            angle: angle.rem_euclid(std::f64::consts::PI),
        }
    }
}

/// Map from outcome to estimate.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    /// `θ̃(x) = f⁻¹(Σ cₖ xᵏ)`; coefficients act in `f`-space, ascending.
    Polynomial(Vec<f64>),
    /// Bayes posterior mean of `f(θ)`.
    PosteriorMean,
}

/// Mean and variance of the outcome distribution at θ.
pub fn homodyne_likelihood(problem: &EstimationProblem, phi: f64, theta: f64) -> (f64, f64) {
    let state = problem.model.encode(theta);
    let (s, c) = phi.sin_cos();
    (c * state.mean[0] + s * state.mean[1], state.cov.quadrature_variance(phi))
}

/// θ-nodes of the posterior, with the likelihood parameters at each node.
struct PosteriorTable {
    /// `(ln w, outcome mean, outcome variance, f(θ))`.
    nodes: Vec<(f64, f64, f64, f64)>,
}

impl PosteriorTable {
    /// Uses the calibrated θ-rule at twice its order.
    fn new(problem: &EstimationProblem, phi: f64) -> Result<Self> {
        let rule = match &problem.prior {
            Prior::Grid(nodes) => nodes.clone(),
            prior => {
                let order = problem.theta_rule()?.len();
                prior.rule(2 * order, problem.quadrature.support_sigmas)
            }
        };
        let nodes = rule
            .iter()
            .filter(|&&(_, w)| w > 0.0)
            .map(|&(t, w)| {
                let (m, v) = homodyne_likelihood(problem, phi, t);
                (w.ln() - 0.5 * (2.0 * std::f64::consts::PI * v).ln(), m, v, problem.f(t))
            })
            .collect();
        Ok(Self { nodes })
    }

    /// `E[f(θ) | x]` with log-sum-exp weights.
    fn mean_f(&self, x: f64) -> Result<f64> {
        let top = self
            .nodes
            .iter()
            .map(|&(lw, m, v, _)| lw - 0.5 * (x - m).powi(2) / v)
            .fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::VanishingMarginal { outcome: x });
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(lw, m, v, f) in &self.nodes {
            let w = (lw - 0.5 * (x - m).powi(2) / v - top).exp();
            num += w * f;
            den += w;
        }
        Ok(num / den)
    }
}

/// Posterior-mean estimate `f⁻¹(E[f(θ) | x])`.
pub fn posterior_mean(problem: &EstimationProblem, phi: f64, outcome: f64) -> Result<f64> {
    let table = PosteriorTable::new(problem, phi)?;
    Ok(problem.loss.inverse(table.mean_f(outcome)?))
}

/// Estimate in `f`-space for one outcome.
struct PreparedEstimator<'a> {
    estimator: &'a Estimator,
    posterior: Option<PosteriorTable>,
}

impl<'a> PreparedEstimator<'a> {
    fn new(problem: &EstimationProblem, phi: f64, estimator: &'a Estimator) -> Result<Self> {
        let posterior = match estimator {
            Estimator::PosteriorMean => Some(PosteriorTable::new(problem, phi)?),
            Estimator::Polynomial(c) => {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("estimator coefficients must be finite".into()));
                }
                None
            }
        };
        Ok(Self { estimator, posterior })
    }

    fn f_estimate(&self, x: f64) -> f64 {
        match (self.estimator, &self.posterior) {
            (Estimator::Polynomial(c), _) => eval_ascending(c, x),
            // Vanishing marginals only occur for outcomes of negligible probability.
            (Estimator::PosteriorMean, Some(table)) => table.mean_f(x).unwrap_or(f64::NAN),
            (Estimator::PosteriorMean, None) => f64::NAN,
        }
    }
}

/// Outer-θ, inner-outcome integral of `g(θ, x)` against `p(θ)p(x|θ)`.
fn nested_integral<G>(problem: &EstimationProblem, phi: f64, what: &str, g: G) -> Result<f64>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    // Inner integrals are resolved well below the outer tolerance so their
    // noise cannot stall the outer order doubling.
    let inner_cfg = QuadratureConfig {
        rel_tol: 1e-2 * problem.quadrature.rel_tol,
        ..problem.quadrature
    };
    let outer = EstimationProblem {
        quadrature: QuadratureConfig {
            rel_tol: NESTED_OUTER_TOL_FACTOR * problem.quadrature.rel_tol,
            ..problem.quadrature
        },
        ..problem.clone()
    };
    // An unresolved inner integral at a θ of negligible prior weight cannot
    // spoil the outer integral; one that matters stalls the outer doubling.
    let integral = outer.theta_integrate(what, |theta| {
        let (m, v) = homodyne_likelihood(problem, phi, theta);
        let sd = v.sqrt();
        let density = |x: f64| (-0.5 * (x - m).powi(2) / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let (value, converged) =
            integrate_interval_lenient(&inner_cfg, m - OUTCOME_WINDOW * sd, m + OUTCOME_WINDOW * sd, |x| {
                density(x) * g(theta, x)
            });
        if !converged {
            log::debug!("{what}: outcome integral at θ={theta} did not reach tolerance");
        }
        vec![value]
    })?;
    Ok(integral.values[0])
}

/// `∫dθ dx p(θ)p(x|θ)[f(θ̃(x)) − f(θ)]²`.
pub fn classical_msl(problem: &EstimationProblem, measurement: HomodyneMeasurement, estimator: &Estimator) -> Result<f64> {
    let phi = measurement.angle;
    let prepared = PreparedEstimator::new(problem, phi, estimator)?;
    nested_integral(problem, phi, "classical MSL", |theta, x| {
        (prepared.f_estimate(x) - problem.f(theta)).powi(2)
    })
}

/// MSL of homodyne at φ with the posterior-mean estimator,
/// `λ − ∫dx [∫p f L]² / ∫p L`, evaluated as `λ − E[f(θ)·PM(x)]`.
pub fn pm_msl_homodyne(problem: &EstimationProblem, phi: f64) -> Result<f64> {
    let table = PosteriorTable::new(problem, phi)?;
    let gain = nested_integral(problem, phi, "PM MSL", |theta, x| {
        problem.f(theta) * table.mean_f(x).unwrap_or(f64::NAN)
    })?;
    Ok(problem.prior_lambda()? - gain)
}

/// `(value − global) / global`.
pub fn relative_msl(value: f64, global: f64) -> Result<f64> {
    if !(global > 0.0) {
        return Err(Error::NonPositiveGlobal(global));
    }
    Ok((value - global) / global)
}

/// Trials per independent random stream.
pub const MC_CHUNK: usize = 1 << 16;

/// Monte Carlo estimate of the MSL and its standard error.
///
/// Chunk `k` of [`MC_CHUNK`] trials draws from stream `k` of a ChaCha8
/// generator seeded with `seed`, so the result is independent of the number
/// of worker threads.
pub fn simulate_single_shot(
    problem: &EstimationProblem,
    measurement: HomodyneMeasurement,
    estimator: &Estimator,
    n_trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
    }
    let phi = measurement.angle;
    let prepared = PreparedEstimator::new(problem, phi, estimator)?;
    let chunks = n_trials.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let count = MC_CHUNK.min(n_trials - k * MC_CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                let theta = problem.prior.sample(&mut rng);
                let (m, v) = homodyne_likelihood(problem, phi, theta);
                let z: f64 = StandardNormal.sample(&mut rng);
                let x = m + v.sqrt() * z;
                let loss = (prepared.f_estimate(x) - problem.f(theta)).powi(2);
                sum += loss;
                sum_sq += loss * loss;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partials.iter().fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let n = n_trials as f64;
    let mean = sum / n;
    let var = if n_trials > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::LossMap;
    use crate::gaussian::{GaussianState, ParametricGaussianModel};
    use approx::assert_relative_eq;

    fn displacement(var: f64) -> EstimationProblem {
        EstimationProblem::new(
            ParametricGaussianModel::Displacement {
                probe: GaussianState::vacuum(),
            },
            Prior::Gaussian { mean: 0.2, variance: var },
            LossMap::Identity,
        )
        .unwrap()
    }

    fn squeezing(var: f64) -> EstimationProblem {
        EstimationProblem::new(
            ParametricGaussianModel::Squeezing {
                probe: GaussianState::vacuum(),
            },
            Prior::Gaussian { mean: 0.0, variance: var },
            LossMap::Identity,
        )
        .unwrap()
    }

    fn shrinkage(var: f64) -> Estimator {
        let k = var / (var + 0.5);
        Estimator::Polynomial(vec![0.2 * 0.5 / (var + 0.5), k])
    }

    #[test]
    fn likelihoods() {
        let (m, v) = homodyne_likelihood(&displacement(1.0), 0.0, 0.7);
        assert_relative_eq!(m, 0.7);
        assert_relative_eq!(v, 0.5);
        let (m, v) = homodyne_likelihood(&squeezing(1.0), 0.0, 0.3);
        assert_eq!(m, 0.0);
        assert_relative_eq!(v, (-0.6f64).exp() / 2.0, epsilon = 1e-15);
        let (_, v) = homodyne_likelihood(&squeezing(1.0), std::f64::consts::FRAC_PI_2, 0.0);
        assert_relative_eq!(v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn posterior_mean_is_shrinkage() {
        let var = 0.7;
        let p = displacement(var);
        for x in [-1.0, 0.0, 0.4, 2.5] {
            let pm = posterior_mean(&p, 0.0, x).unwrap();
            let expected = (var * x + 0.2 * 0.5) / (var + 0.5);
            assert_relative_eq!(pm, expected, epsilon = 1e-10);
        }
        let sq = squeezing(0.2);
        assert_relative_eq!(
            posterior_mean(&sq, 0.0, 0.8).unwrap(),
            posterior_mean(&sq, 0.0, -0.8).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn shrinkage_msl_closed_form() {
        let var = 1.0;
        let p = displacement(var);
        let msl = classical_msl(&p, HomodyneMeasurement::new(0.0), &shrinkage(var)).unwrap();
        assert_relative_eq!(msl, 1.0 / 3.0, epsilon = 1e-8);
        let constant = classical_msl(&p, HomodyneMeasurement::new(0.0), &Estimator::Polynomial(vec![0.2])).unwrap();
        assert_relative_eq!(constant, var, epsilon = 1e-10);
        let pm = pm_msl_homodyne(&p, 0.0).unwrap();
        assert_relative_eq!(pm, 1.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn squeezing_quadratic_estimator() {
        let s: f64 = 0.1;
        let p = squeezing(s);
        let spm = crate::solver::solve_projected_spm(&p, &crate::solver::OperatorBasis::quadratic_homodyne(0.0)).unwrap();
        let (phi, coeffs) = spm.single_quadrature().unwrap();
        assert!(phi.abs() < 1e-12);
        let msl = classical_msl(&p, HomodyneMeasurement::new(0.0), &Estimator::Polynomial(coeffs)).unwrap();
        let target = s - 4.0 * s * s / (3.0 * (4.0 * s).exp() - 1.0);
        assert_relative_eq!(msl, target, epsilon = 1e-8);
        let pm = pm_msl_homodyne(&p, 0.0).unwrap();
        assert!(pm <= target + 1e-8, "pm {pm} target {target}");
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let p = displacement(1.0);
        let est = shrinkage(1.0);
        let a = simulate_single_shot(&p, HomodyneMeasurement::new(0.0), &est, 100_000, 11).unwrap();
        let b = simulate_single_shot(&p, HomodyneMeasurement::new(0.0), &est, 100_000, 11).unwrap();
        assert_eq!(a, b);
        assert!((a.0 - 1.0 / 3.0).abs() < 4.0 * a.1);
        let point = EstimationProblem::new(
            ParametricGaussianModel::Displacement {
                probe: GaussianState::vacuum(),
            },
            Prior::point(0.5),
            LossMap::Identity,
        )
        .unwrap();
        let z = simulate_single_shot(&point, HomodyneMeasurement::new(0.0), &Estimator::Polynomial(vec![0.5]), 1000, 1).unwrap();
        assert_eq!(z, (0.0, 0.0));
    }

    #[test]
    fn relative_msl_errors() {
        assert_eq!(relative_msl(0.2, 0.2).unwrap(), 0.0);
        assert!(relative_msl(0.2, 0.0).is_err());
    }
}
