//! Priors, loss maps and prior-averaged functionals.
//!
//! The two prior-averaged states `ρ₀ = ∫p(θ)ρ(θ)dθ` and
//! `ρ̄ = ∫p(θ)f(θ)ρ(θ)dθ` are never formed here. Instead their expectation
//! values on polynomial operators are obtained by averaging exact Gaussian
//! moments over a θ-quadrature rule.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform as UniformDist};

use crate::error::{Error, Result};
use crate::gaussian::ParametricGaussianModel;
use crate::phase_space::PhasePolynomial;
use crate::quadrature::{integrate_adaptive, interval_rule, Integral, QuadratureConfig};

/// Prior distribution of the parameter θ.
#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    Gaussian { mean: f64, variance: f64 },
    Uniform { mean: f64, width: f64 },
    /// Discrete prior given as `(θ, weight)` pairs.
    Grid(Vec<(f64, f64)>),
}

impl Prior {
    /// Point mass at `theta`.
    pub fn point(theta: f64) -> Self {
        Self::Grid(vec![(theta, 1.0)])
    }

    /// Uniform prior with the given variance, `width = √(12 σ²)`.
    pub fn uniform_from_variance(mean: f64, variance: f64) -> Self {
        Self::Uniform {
            mean,
            width: (12.0 * variance).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { mean, variance } => {
                if !(*variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "Gaussian prior needs finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
            }
            Self::Uniform { mean, width } => {
                if !(*width > 0.0) || !width.is_finite() || !mean.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "uniform prior needs finite mean and positive width, got ({mean}, {width})"
                    )));
                }
            }
            Self::Grid(nodes) => {
                if nodes.is_empty() {
                    return Err(Error::InvalidParameter("grid prior has no nodes".into()));
                }
                if nodes.iter().any(|&(t, w)| !t.is_finite() || !(w >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "grid prior needs finite nodes and non-negative weights".into(),
                    ));
                }
                let total: f64 = nodes.iter().map(|&(_, w)| w).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "grid prior weights sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } | Self::Uniform { mean, .. } => *mean,
            Self::Grid(nodes) => nodes.iter().map(|&(t, w)| t * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian { variance, .. } => *variance,
            Self::Uniform { width, .. } => width * width / 12.0,
            Self::Grid(nodes) => {
                let m = self.mean();
                nodes.iter().map(|&(t, w)| w * (t - m).powi(2)).sum()
            }
        }
    }

    /// Probability density; `None` for grid priors.
    pub fn density(&self, theta: f64) -> Option<f64> {
        match self {
            Self::Gaussian { mean, variance } => {
                let z = theta - mean;
                Some((-0.5 * z * z / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt())
            }
            Self::Uniform { mean, width } => {
                Some(if (theta - mean).abs() <= 0.5 * width { 1.0 / width } else { 0.0 })
            }
            Self::Grid(_) => None,
        }
    }

    /// Integration interval; Gaussian priors are cut at `±support_sigmas·σ`.
    pub fn support(&self, support_sigmas: f64) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, variance } => {
                let half = support_sigmas * variance.sqrt();
                (mean - half, mean + half)
            }
            Self::Uniform { mean, width } => (mean - 0.5 * width, mean + 0.5 * width),
            Self::Grid(nodes) => nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(t, _)| {
                (lo.min(t), hi.max(t))
            }),
        }
    }

    /// Quadrature rule `(θ_k, w_k)` with the prior density folded into the weights.
    pub fn rule(&self, order: usize, support_sigmas: f64) -> Vec<(f64, f64)> {
        match self {
            Self::Grid(nodes) => nodes.clone(),
            _ => {
                let (a, b) = self.support(support_sigmas);
                interval_rule(order, a, b)
                    .into_iter()
                    .map(|(t, w)| (t, w * self.density(t).unwrap_or(0.0)))
                    .collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { mean, variance } => Normal::new(*mean, variance.sqrt())
                .expect("validated Gaussian prior")
                .sample(rng),
            Self::Uniform { mean, width } => {
                UniformDist::new_inclusive(mean - 0.5 * width, mean + 0.5 * width)
                    .expect("validated uniform prior")
                    .sample(rng)
            }
            Self::Grid(nodes) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(t, w) in nodes {
                    acc += w;
                    if u < acc {
                        return t;
                    }
                }
                nodes.last().expect("validated grid prior").0
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Grid(_))
    }
}

/// The map `f` under which the parameter is a location parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossMap {
    #[default]
    Identity,
    /// `f(θ) = ln θ`, for positive scale parameters.
    Log,
}

impl LossMap {
    pub fn apply(&self, theta: f64) -> f64 {
        match self {
            Self::Identity => theta,
            Self::Log => theta.ln(),
        }
    }

    pub fn inverse(&self, s: f64) -> f64 {
        match self {
            Self::Identity => s,
            Self::Log => s.exp(),
        }
    }
}

/// Which prior-averaged state an expectation is taken in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    /// `ρ₀`
    Unit,
    /// `ρ̄`
    F,
}

/// A complete single-parameter estimation problem.
#[derive(Clone, Debug)]
pub struct EstimationProblem {
    pub model: ParametricGaussianModel,
    pub prior: Prior,
    pub loss: LossMap,
    pub quadrature: QuadratureConfig,
}

impl EstimationProblem {
    pub fn new(model: ParametricGaussianModel, prior: Prior, loss: LossMap) -> Result<Self> {
        Self::with_quadrature(model, prior, loss, QuadratureConfig::default())
    }

    pub fn with_quadrature(
        model: ParametricGaussianModel,
        prior: Prior,
        loss: LossMap,
        quadrature: QuadratureConfig,
    ) -> Result<Self> {
        let problem = Self {
            model,
            prior,
            loss,
            quadrature,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.quadrature.validate()?;
        if self.loss == LossMap::Log {
            let (lo, _) = self.prior.support(self.quadrature.support_sigmas);
            if !(lo > 0.0) {
                return Err(Error::InvalidParameter(
                    "log loss map needs a prior supported on positive θ".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn f(&self, theta: f64) -> f64 {
        self.loss.apply(theta)
    }

    /// Integrates a vector function of θ against the prior.
    pub fn theta_integrate<F>(&self, what: &str, f: F) -> Result<Integral>
    where
        F: Fn(f64) -> Vec<f64> + Sync,
    {
        match &self.prior {
            Prior::Grid(nodes) => {
                let (values, _) = crate::quadrature::apply_rule(nodes, &f);
                Ok(Integral { values, order: nodes.len() })
            }
            prior => {
                let sigmas = self.quadrature.support_sigmas;
                integrate_adaptive(&self.quadrature, what, |order| prior.rule(order, sigmas), f)
            }
        }
    }

    /// `λ = ∫p(θ) f(θ)² dθ`.
    pub fn prior_lambda(&self) -> Result<f64> {
        match (&self.prior, self.loss) {
            (Prior::Gaussian { .. } | Prior::Uniform { .. }, LossMap::Identity) => {
                Ok(self.prior.mean().powi(2) + self.prior.variance())
            }
            _ => {
                let f = |t: f64| vec![self.f(t).powi(2)];
                Ok(self.theta_integrate("prior λ", f)?.values[0])
            }
        }
    }

    /// `∫p(θ) f(θ) dθ`.
    pub fn mean_f(&self) -> Result<f64> {
        match (&self.prior, self.loss) {
            (Prior::Gaussian { .. } | Prior::Uniform { .. }, LossMap::Identity) => Ok(self.prior.mean()),
            _ => Ok(self.theta_integrate("prior mean of f", |t| vec![self.f(t)])?.values[0]),
        }
    }

    /// Prior loss `λ − (∫p f)²`: the MSL of the best constant estimate.
    pub fn prior_loss(&self) -> Result<f64> {
        Ok(self.prior_lambda()? - self.mean_f()?.powi(2))
    }

    /// `Tr(ρ₀ B)` or `Tr(ρ̄ B)` for the Weyl quantization `B` of `poly`.
    pub fn averaged_moment(&self, poly: &PhasePolynomial, weight: Weight) -> Result<f64> {
        Ok(self.averaged_moments(std::slice::from_ref(poly), weight)?[0])
    }

    /// Batched [`Self::averaged_moment`] sharing one θ-quadrature.
    pub fn averaged_moments(&self, polys: &[PhasePolynomial], weight: Weight) -> Result<Vec<f64>> {
        let what = match weight {
            Weight::Unit => "ρ₀ moments",
            Weight::F => "ρ̄ moments",
        };
        let integral = self.theta_integrate(what, |t| {
            let state = self.model.encode(t);
            let scale = match weight {
                Weight::Unit => 1.0,
                Weight::F => self.f(t),
            };
            polys.iter().map(|p| scale * state.moment(p).re).collect()
        })?;
        Ok(integral.values)
    }

    /// Both `Tr(ρ₀ B)` and `Tr(ρ̄ B)` per polynomial from one integration.
    pub fn averaged_moment_pairs(&self, polys: &[PhasePolynomial]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = polys.len();
        let integral = self.theta_integrate("ρ₀/ρ̄ moments", |t| {
            let state = self.model.encode(t);
            let ft = self.f(t);
            let unit: Vec<f64> = polys.iter().map(|p| state.moment(p).re).collect();
            let weighted: Vec<f64> = unit.iter().map(|v| ft * v).collect();
            [unit, weighted].concat()
        })?;
        let mut values = integral.values;
        let weighted = values.split_off(n);
        Ok((values, weighted))
    }

    /// `E[e^{kθ} θ^m]` under a Gaussian prior, for `m ≤ 2`.
    pub fn closed_form_theta_moment(&self, k: f64, m: u32) -> Result<f64> {
        let Prior::Gaussian { mean, variance } = self.prior else {
            return Err(Error::UnsupportedMoment(
                "closed-form θ moments need a Gaussian prior".into(),
            ));
        };
        let mgf = (k * mean + 0.5 * k * k * variance).exp();
        let shifted = mean + k * variance;
        match m {
            0 => Ok(mgf),
            1 => Ok(shifted * mgf),
            2 => Ok((shifted * shifted + variance) * mgf),
            _ => Err(Error::UnsupportedMoment(format!("θ^{m} with m > 2"))),
        }
    }

    /// θ-rule shared with the Fock oracle: the smallest doubling order at
    /// which `f`, `f²` and all averaged moments of degree ≤ 4 converge.
    pub fn theta_rule(&self) -> Result<Vec<(f64, f64)>> {
        if let Prior::Grid(nodes) = &self.prior {
            return Ok(nodes.clone());
        }
        let probes: Vec<PhasePolynomial> = (0..=4u32)
            .flat_map(|deg| (0..=deg).map(move |m| PhasePolynomial::monomial(m, deg - m, 1.0)))
            .collect();
        let integral = self.theta_integrate("θ rule calibration", |t| {
            let state = self.model.encode(t);
            let ft = self.f(t);
            let mut out = vec![ft, ft * ft];
            for p in &probes {
                let v = state.moment(p).re;
                out.push(v);
                out.push(ft * v);
            }
            out
        })?;
        Ok(self.prior.rule(integral.order, self.quadrature.support_sigmas))
    }
}
