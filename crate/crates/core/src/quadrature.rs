//! Gauss–Legendre quadrature with order doubling.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Settings for θ- and outcome-space quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// First Gauss–Legendre order tried.
    pub min_order: usize,
    /// Order at which doubling stops with a divergence error.
    pub max_order: usize,
    /// Relative change between successive orders accepted as converged.
    pub rel_tol: f64,
    /// Half-width of the truncated support of a Gaussian prior, in standard deviations.
    pub support_sigmas: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            min_order: 32,
            max_order: 2048,
            rel_tol: 1e-10,
            support_sigmas: 12.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_order < 2 || self.max_order < self.min_order {
            return Err(Error::InvalidParameter(format!(
                "quadrature orders must satisfy 2 <= min_order <= max_order, got {} and {}",
                self.min_order, self.max_order
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("quadrature rel_tol must be positive".into()));
        }
        if !(self.support_sigmas >= 10.0) {
            return Err(Error::InvalidParameter(format!(
                "Gaussian prior support must cover at least 10 standard deviations, got {}",
                self.support_sigmas
            )));
        }
        Ok(())
    }

    /// Orders visited by the doubling ladder.
    pub fn orders(&self) -> impl Iterator<Item = usize> {
        let max = self.max_order;
        std::iter::successors(Some(self.min_order), move |&o| (o < max).then(|| (2 * o).min(max)))
    }
}

/// Nodes and weights on `[-1, 1]`, cached per order.
pub fn gauss_legendre(order: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&order) {
        return rule.clone();
    }
    let rule = GaussLegendre::new(order.max(2)).expect("Gauss-Legendre order is at least 2");
    let pairs = Arc::new(rule.as_node_weight_pairs().to_vec());
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(order, pairs.clone());
    pairs
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn interval_rule(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(order)
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

/// A converged vector-valued integral and the order that produced it.
#[derive(Clone, Debug)]
pub struct Integral {
    pub values: Vec<f64>,
    pub order: usize,
}

/// Weighted sum `Σ w f(x)` and per-component absolute mass `Σ |w f(x)|`.
pub fn apply_rule<F>(rule: &[(f64, f64)], f: &F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    let evaluated: Vec<(f64, Vec<f64>)> = rule.par_iter().map(|&(x, w)| (w, f(x))).collect();
    let dim = evaluated.first().map_or(0, |(_, v)| v.len());
    let mut sum = vec![0.0; dim];
    let mut mass = vec![0.0; dim];
    for (w, vals) in &evaluated {
        for k in 0..dim {
            sum[k] += w * vals[k];
            mass[k] += (w * vals[k]).abs();
        }
    }
    (sum, mass)
}

/// Integrates a vector function with rules from `rule(order)`, doubling the
/// order until every component changes by at most `rel_tol` times its
/// absolute mass.
pub fn integrate_adaptive<R, F>(config: &QuadratureConfig, what: &str, rule: R, f: F) -> Result<Integral>
where
    R: Fn(usize) -> Vec<(f64, f64)>,
    F: Fn(f64) -> Vec<f64> + Sync,
{
    let mut previous: Option<Vec<f64>> = None;
    let mut last_change = f64::INFINITY;
    let mut last_order = config.min_order;
    for order in config.orders() {
        let (values, mass) = apply_rule(&rule(order), &f);
        if let Some(prev) = &previous {
            let mut worst: f64 = 0.0;
            let mut converged = true;
            for k in 0..values.len() {
                let change = (values[k] - prev[k]).abs();
                let scale = mass[k].max(values[k].abs());
                if change > config.rel_tol * scale {
                    converged = false;
                }
                if scale > 0.0 {
                    worst = worst.max(change / scale);
                }
            }
            last_change = worst;
            if converged {
                return Ok(Integral { values, order });
            }
        }
        previous = Some(values);
        last_order = order;
    }
    Err(Error::QuadratureDivergence {
        what: what.to_string(),
        order: last_order,
        last_change,
    })
}

/// Like [`integrate_interval`], but returns the highest-order estimate and
/// `false` instead of failing when the tolerance is not met.
pub fn integrate_interval_lenient<F>(config: &QuadratureConfig, a: f64, b: f64, f: F) -> (f64, bool)
where
    F: Fn(f64) -> f64 + Sync,
{
    let mut previous: Option<f64> = None;
    let mut last = 0.0;
    for order in config.orders() {
        let (values, mass) = apply_rule(&interval_rule(order, a, b), &|x| vec![f(x)]);
        let value = values[0];
        if let Some(prev) = previous {
            if (value - prev).abs() <= config.rel_tol * mass[0].max(value.abs()) {
                return (value, true);
            }
        }
        previous = Some(value);
        last = value;
    }
    (last, false)
}

/// Scalar integral over `[a, b]` with order doubling.
pub fn integrate_interval<F>(config: &QuadratureConfig, what: &str, a: f64, b: f64, f: F) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    integrate_adaptive(config, what, |order| interval_rule(order, a, b), |x| vec![f(x)])
        .map(|i| i.values[0])
}
