//! Polynomial fits of the Wigner-function ratio `W_ρ̄ / W_ρ₀`.
//!
//! The optimal estimator operator is a polynomial of degree `R` in the
//! quadratures exactly when this ratio is; the fit residual per degree
//! measures how far a problem is from that case.

use nalgebra::{DMatrix, DVector};

use crate::bayes::EstimationProblem;
use crate::error::{Error, Result};

/// Square phase-space grid centred on the mean of `ρ₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitGrid {
    /// Points per axis.
    pub points: usize,
    /// Half-width in standard deviations of `ρ₀`'s marginals.
    pub half_width_sigmas: f64,
    /// Points with `W_ρ₀` below this fraction of its maximum are excluded.
    pub wigner_floor: f64,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self {
            points: 21,
            half_width_sigmas: 2.5,
            wigner_floor: 1e-8,
        }
    }
}

/// Normalised least-squares residual `‖Φ − fit‖₂ / ‖Φ‖₂` per degree `0..=R`.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub residuals: Vec<f64>,
    pub points_used: usize,
}

impl FitReport {
    /// Smallest degree whose residual is below `tol`.
    pub fn exact_degree(&self, tol: f64) -> Option<usize> {
        self.residuals.iter().position(|&r| r < tol)
    }
}

pub fn fit_wigner_ratio(problem: &EstimationProblem, max_degree: usize, grid: FitGrid) -> Result<FitReport> {
    if grid.points < 2 {
        return Err(Error::InvalidParameter("fit grid needs at least 2 points per axis".into()));
    }
    // Centre and spread of ρ₀ from its first and second moments.
    let moments = problem.theta_integrate("ρ₀ grid moments", |t| {
        let s = problem.model.encode(t);
        vec![s.mean[0], s.mean[1], s.cov.qq + s.mean[0].powi(2), s.cov.pp + s.mean[1].powi(2)]
    })?;
    let [mq, mp, q2, p2] = [moments.values[0], moments.values[1], moments.values[2], moments.values[3]];
    let sq = (q2 - mq * mq).max(0.0).sqrt();
    let sp = (p2 - mp * mp).max(0.0).sqrt();
    let n = grid.points;
    let axis = |centre: f64, spread: f64, k: usize| {
        centre + spread * grid.half_width_sigmas * (2.0 * k as f64 / (n - 1) as f64 - 1.0)
    };
    let points: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (axis(mq, sq, i), axis(mp, sp, j)))
        .collect();
    let wigners = problem.theta_integrate("Wigner ratio", |t| {
        let s = problem.model.encode(t);
        let f = problem.f(t);
        points
            .iter()
            .flat_map(|&(q, p)| {
                let w = s.wigner(q, p);
                [w, f * w]
            })
            .collect()
    })?;
    let w0max = (0..points.len()).map(|k| wigners.values[2 * k]).fold(0.0f64, f64::max);
    let mut coords = Vec::new();
    let mut ratio = Vec::new();
    for (k, &(q, p)) in points.iter().enumerate() {
        let w0 = wigners.values[2 * k];
        if w0 > grid.wigner_floor * w0max && w0 > 0.0 {
            // scaled coordinates keep the design matrix well conditioned
            let u = if sq > 0.0 { (q - mq) / (sq * grid.half_width_sigmas) } else { 0.0 };
            let v = if sp > 0.0 { (p - mp) / (sp * grid.half_width_sigmas) } else { 0.0 };
            coords.push((u, v));
            ratio.push(wigners.values[2 * k + 1] / w0);
        }
    }
    if ratio.is_empty() {
        return Err(Error::EmptyFitGrid);
    }
    let phi = DVector::from_vec(ratio);
    let norm = phi.norm().max(f64::MIN_POSITIVE);
    let mut residuals = Vec::with_capacity(max_degree + 1);
    for degree in 0..=max_degree {
        let exps: Vec<(i32, i32)> = (0..=degree as i32)
            .flat_map(|tot| (0..=tot).map(move |a| (a, tot - a)))
            .collect();
        let design = DMatrix::from_fn(coords.len(), exps.len(), |r, c| {
            let (u, v) = coords[r];
            u.powi(exps[c].0) * v.powi(exps[c].1)
        });
        let svd = design.clone().svd(true, true);
        let coef = svd
            .solve(&phi, 1e-13 * svd.singular_values.max())
            .map_err(|e| Error::InvalidParameter(format!("least-squares fit failed: {e}")))?;
        let resid = &design * coef - &phi;
        residuals.push(resid.norm() / norm);
    }
    Ok(FitReport {
        residuals,
        points_used: coords.len(),
    })
}
