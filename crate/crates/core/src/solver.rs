//! Subspace-constrained optimum: Gram systems and the projected estimator operator.
//!
//! For a basis `B₁…B_N` of Hermitian polynomial operators the constrained
//! problem is the linear system `G α = b` with
//! `G_ij = ½Tr(ρ₀{B_i, B_j})` and `b_i = Tr(ρ̄ B_i)`; its MSL is `λ − bᵀα`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::bayes::{EstimationProblem, LossMap, Weight};
use crate::error::{Error, Result};
use crate::phase_space::{jordan_product, PhasePolynomial};

/// Relative eigenvalue cutoff of the pseudoinverse.
pub const RCOND: f64 = 1e-12;
/// Relative ρ₀-norm² below which Gram–Schmidt drops an element.
pub const DROP_TOL: f64 = 1e-10;

/// Span of real (Hermitian) polynomial symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorBasis {
    elements: Vec<PhasePolynomial>,
}

impl OperatorBasis {
    pub fn new(elements: Vec<PhasePolynomial>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::EmptyBasis);
        }
        if let Some(index) = elements.iter().position(|e| !e.is_real()) {
            return Err(Error::NonHermitian { index });
        }
        let elements: Vec<_> = elements.into_iter().map(|e| e.real_part()).collect();
        if elements
            .iter()
            .any(|e| e.degree().unwrap_or(0) > 2 && e.terms().any(|((m, n), _)| m > 0 && n > 0))
        {
            log::warn!("basis mixes quadratures beyond degree 2; the projected operator's self-adjointness is not checked and its MSL is reported as a bound");
        }
        Ok(Self { elements })
    }

    /// `{1, q}`
    pub fn linear_q() -> Self {
        Self::new(vec![PhasePolynomial::one(), PhasePolynomial::q()]).expect("static basis")
    }

    /// `{1, q, q³}`
    pub fn cubic_q() -> Self {
        Self::new(vec![
            PhasePolynomial::one(),
            PhasePolynomial::q(),
            PhasePolynomial::monomial(3, 0, 1.0),
        ])
        .expect("static basis")
    }

    /// `{1, q², p²}`
    pub fn quadratic_qp() -> Self {
        Self::new(vec![
            PhasePolynomial::one(),
            PhasePolynomial::monomial(2, 0, 1.0),
            PhasePolynomial::monomial(0, 2, 1.0),
        ])
        .expect("static basis")
    }

    /// `{1, q_φ²}` with `q_φ = q cos φ + p sin φ`.
    pub fn quadratic_homodyne(phi: f64) -> Self {
        let x = PhasePolynomial::quadrature(phi);
        Self::new(vec![PhasePolynomial::one(), &x * &x]).expect("static basis")
    }

    pub fn elements(&self) -> &[PhasePolynomial] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `Σ αᵢ Bᵢ`.
    pub fn combine(&self, alpha: &[f64]) -> PhasePolynomial {
        self.elements
            .iter()
            .zip(alpha)
            .fold(PhasePolynomial::zero(), |acc, (b, &a)| acc + b.scale(a))
    }

    fn constant_index(&self) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| e.degree() == Some(0))
    }
}

/// Uncentred Gram system of a basis.
#[derive(Clone, Debug)]
pub struct GramSystem {
    pub gram: DMatrix<f64>,
    pub bvec: DVector<f64>,
    pub lambda: f64,
    /// `Tr(ρ₀ Bᵢ)`, used for centring.
    pub means: DVector<f64>,
    /// `∫p f`.
    pub mean_f: f64,
}

/// Assembles `G`, `b` and `λ` for `basis`.
pub fn build_system(problem: &EstimationProblem, basis: &OperatorBasis) -> Result<GramSystem> {
    let n = basis.len();
    let elems = basis.elements();
    let mut polys = Vec::with_capacity(n * (n + 1) / 2 + n + 1);
    for i in 0..n {
        for j in i..n {
            polys.push(jordan_product(&elems[i], &elems[j]));
        }
    }
    polys.extend(elems.iter().cloned());
    polys.push(PhasePolynomial::one());
    let (unit, weighted) = problem.averaged_moment_pairs(&polys)?;
    let mut gram = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            gram[(i, j)] = unit[k];
            gram[(j, i)] = unit[k];
            k += 1;
        }
    }
    let means = DVector::from_iterator(n, unit[k..k + n].iter().copied());
    let bvec = DVector::from_iterator(n, weighted[k..k + n].iter().copied());
    let lambda = problem.prior_lambda()?;
    let mean_f = match (&problem.prior, problem.loss) {
        (crate::bayes::Prior::Grid(_), _) | (_, LossMap::Log) => weighted[k + n],
        _ => problem.prior.mean(),
    };
    Ok(GramSystem {
        gram,
        bvec,
        lambda,
        means,
        mean_f,
    })
}

/// Subspace-optimal estimator operator `Σ αᵢ Bᵢ` and its MSL.
#[derive(Clone, Debug)]
pub struct ProjectedSpm {
    /// Basis actually used; the identity is prepended when the input had no constant element.
    pub basis: OperatorBasis,
    pub augmented: bool,
    pub alpha: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub bvec: DVector<f64>,
    pub lambda: f64,
    pub msl: f64,
    pub symbol: PhasePolynomial,
    /// Numerical rank of the centred Gram block plus one.
    pub rank: usize,
}

impl ProjectedSpm {
    /// `‖Gα − b‖∞`.
    pub fn residual(&self) -> f64 {
        (&self.gram * &self.alpha - &self.bvec).amax()
    }

    /// Quadratic-form MSL `λ + αᵀGα − 2bᵀα`.
    pub fn quadratic_form_msl(&self) -> f64 {
        msl_quadratic(self.lambda, &self.gram, &self.bvec, &self.alpha)
    }

    /// Ratio of extreme Gram eigenvalues; infinite when singular.
    pub fn gram_condition(&self) -> f64 {
        let eig = SymmetricEigen::new(self.gram.clone()).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Angle φ and ascending coefficients `g` with `symbol(q, p) = g(q cos φ + p sin φ)`.
    pub fn single_quadrature(&self) -> Result<(f64, Vec<f64>)> {
        single_quadrature_form(&self.symbol)
    }
}

fn msl_quadratic(lambda: f64, gram: &DMatrix<f64>, bvec: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    lambda + alpha.dot(&(gram * alpha)) - 2.0 * bvec.dot(alpha)
}

/// Prepends the identity when `basis` has no constant element.
pub fn with_identity(basis: &OperatorBasis) -> (OperatorBasis, bool) {
    if basis.constant_index().is_some() {
        (basis.clone(), false)
    } else {
        let mut elements = vec![PhasePolynomial::one()];
        elements.extend(basis.elements().iter().cloned());
        (OperatorBasis { elements }, true)
    }
}

/// Solves the stationarity system for the best operator in `span(basis ∪ {1})`.
///
/// The system is solved in ρ₀-centred coordinates `Bᵢ − Tr(ρ₀Bᵢ)` with a
/// symmetric-eigen pseudoinverse, then mapped back to the basis and made
/// minimum-norm there.
pub fn solve_projected_spm(problem: &EstimationProblem, basis: &OperatorBasis) -> Result<ProjectedSpm> {
    let (basis, augmented) = with_identity(basis);
    let system = build_system(problem, &basis)?;
    solve_system(basis, augmented, &system)
}

/// Solves an already assembled system for `basis`, which must contain a constant element.
pub fn solve_system(basis: OperatorBasis, augmented: bool, system: &GramSystem) -> Result<ProjectedSpm> {
    let n = basis.len();
    let c_idx = basis.constant_index().ok_or(Error::DegenerateBasis)?;
    let c_val = basis.elements()[c_idx].coeff(0, 0).re;
    let others: Vec<usize> = (0..n).filter(|&i| i != c_idx).collect();
    let m = others.len();

    let g = &system.gram;
    let mu = &system.means;
    let mut centred = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (a, &i) in others.iter().enumerate() {
        rhs[a] = system.bvec[i] - mu[i] * system.mean_f;
        for (b, &j) in others.iter().enumerate() {
            centred[(a, b)] = g[(i, j)] - mu[i] * mu[j];
        }
    }
    let (beta, null_dirs) = pinv_solve(&centred, &rhs);

    let to_basis = |v: &DVector<f64>, constant_part: f64| {
        let mut alpha = DVector::zeros(n);
        let mut shift = constant_part;
        for (a, &i) in others.iter().enumerate() {
            alpha[i] = v[a];
            shift -= v[a] * mu[i];
        }
        alpha[c_idx] = shift / c_val;
        alpha
    };
    let mut alpha = to_basis(&beta, system.mean_f);

    if !null_dirs.is_empty() {
        let cols: Vec<DVector<f64>> = null_dirs.iter().map(|v| to_basis(v, 0.0)).collect();
        let q = DMatrix::from_columns(&cols).qr().q();
        let proj = &q * (q.transpose() * &alpha);
        alpha -= proj;
    }

    let msl = system.lambda - system.bvec.dot(&alpha);
    let symbol = basis.combine(alpha.as_slice());
    Ok(ProjectedSpm {
        rank: m - null_dirs.len() + 1,
        basis,
        augmented,
        alpha,
        gram: system.gram.clone(),
        bvec: system.bvec.clone(),
        lambda: system.lambda,
        msl,
        symbol,
    })
}

/// Minimum-norm solution of `K x = r` for symmetric PSD `K`, plus a basis of
/// the numerical null space.
fn pinv_solve(k: &DMatrix<f64>, r: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
    let dim = k.nrows();
    if dim == 0 {
        return (DVector::zeros(0), Vec::new());
    }
    let eig = SymmetricEigen::new(k.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut x = DVector::zeros(dim);
    let mut null = Vec::new();
    for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(idx).into_owned();
        if ev > RCOND * max && ev > 0.0 {
            x += &v * (v.dot(r) / ev);
        } else {
            null.push(v);
        }
    }
    (x, null)
}

/// ρ₀-orthogonal Gram–Schmidt; degenerate elements are dropped.
pub fn orthogonalize(problem: &EstimationProblem, basis: &OperatorBasis) -> Result<OperatorBasis> {
    let system = build_system(problem, basis)?;
    let g = &system.gram;
    let n = basis.len();
    let max_norm = (0..n).map(|i| g[(i, i)]).fold(0.0f64, f64::max);
    let inner = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(g * b));
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for u in &kept {
            let coeff = inner(u, &v) / inner(u, u);
            v -= u * coeff;
        }
        if inner(&v, &v) > DROP_TOL * max_norm {
            kept.push(v);
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateBasis);
    }
    let elements = kept.iter().map(|v| basis.combine(v.as_slice())).collect();
    Ok(OperatorBasis { elements })
}

/// `λ − Σ bᵢ²/Gᵢᵢ` for a ρ₀-orthogonal basis.
pub fn constrained_msl_diagonal(problem: &EstimationProblem, ortho_basis: &OperatorBasis) -> Result<f64> {
    let system = build_system(problem, ortho_basis)?;
    let gain: f64 = (0..ortho_basis.len())
        .filter(|&i| system.gram[(i, i)] > 0.0)
        .map(|i| system.bvec[i].powi(2) / system.gram[(i, i)])
        .sum();
    Ok(system.lambda - gain)
}

/// Expresses `symbol` as a polynomial in one rotated quadrature.
pub fn single_quadrature_form(symbol: &PhasePolynomial) -> Result<(f64, Vec<f64>)> {
    let dq = symbol.derivative(1, 0);
    let dp = symbol.derivative(0, 1);
    if dq.is_zero() && dp.is_zero() {
        return Ok((0.0, vec![symbol.coeff(0, 0).re]));
    }
    // S depends on x = q cos φ + p sin φ only iff −sin φ ∂_q S + cos φ ∂_p S = 0.
    let keys: std::collections::BTreeSet<_> = dq.terms().chain(dp.terms()).map(|(k, _)| k).collect();
    let a: Vec<f64> = keys.iter().map(|&(m, n)| dq.coeff(m, n).re).collect();
    let b: Vec<f64> = keys.iter().map(|&(m, n)| dp.coeff(m, n).re).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>();
    let m = nalgebra::Matrix2::new(dot(&a, &a), dot(&a, &b), dot(&a, &b), dot(&b, &b));
    let eig = m.symmetric_eigen();
    let idx = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let v = eig.eigenvectors.column(idx);
    let (neg_sin, cos) = (v[0], v[1]);
    let scale = (dot(&a, &a) + dot(&b, &b)).sqrt();
    if eig.eigenvalues[idx].max(0.0).sqrt() > 1e-9 * scale {
        return Err(Error::NotSingleQuadrature);
    }
    let phi = (-neg_sin).atan2(cos).rem_euclid(PI);
    let coeffs = symbol.along_direction(phi).into_iter().map(|c| c.re).collect();
    Ok((phi, coeffs))
}

/// Evaluates the estimator `f⁻¹(g(x))` attached to a single-quadrature projected operator.
pub fn constrained_estimator(spm: &ProjectedSpm, loss: LossMap, outcome: f64) -> Result<f64> {
    let (_, coeffs) = spm.single_quadrature()?;
    Ok(loss.inverse(eval_ascending(&coeffs, outcome)))
}

pub fn eval_ascending(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Minimises the `{1, q_φ²}` MSL over `φ ∈ [0, π)` by a coarse scan and golden-section refinement.
pub fn optimize_homodyne_angle(problem: &EstimationProblem) -> Result<(f64, ProjectedSpm)> {
    const SCAN: usize = 64;
    let eval = |phi: f64| solve_projected_spm(problem, &OperatorBasis::quadratic_homodyne(phi)).map(|s| s.msl);
    let step = PI / SCAN as f64;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..SCAN {
        let phi = k as f64 * step;
        let v = eval(phi)?;
        if v < best.1 {
            best = (phi, v);
        }
    }
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while hi - lo > 1e-6 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    let mut phi = (0.5 * (lo + hi)).rem_euclid(PI);
    if best.1 < eval(phi)? {
        phi = best.0;
    }
    let spm = solve_projected_spm(problem, &OperatorBasis::quadratic_homodyne(phi))?;
    Ok((phi, spm))
}

/// `Tr(ρ₀·½{S_V, Bᵢ}) − Tr(ρ̄ Bᵢ)` for every basis element, from a fresh quadrature.
pub fn stationarity_residuals(problem: &EstimationProblem, spm: &ProjectedSpm) -> Result<Vec<f64>> {
    stationarity_residuals_for(problem, &spm.basis, &spm.symbol)
}

/// Stationarity residuals of an arbitrary candidate operator `symbol`.
pub fn stationarity_residuals_for(
    problem: &EstimationProblem,
    basis: &OperatorBasis,
    symbol: &PhasePolynomial,
) -> Result<Vec<f64>> {
    let jordans: Vec<_> = basis.elements().iter().map(|b| jordan_product(symbol, b)).collect();
    let lhs = problem.averaged_moments(&jordans, Weight::Unit)?;
    let rhs = problem.averaged_moments(basis.elements(), Weight::F)?;
    Ok(lhs.iter().zip(&rhs).map(|(l, r)| l - r).collect())
}

/// MSL of the operator `Σ αᵢ Bᵢ` (not necessarily optimal).
pub fn msl_of_coefficients(problem: &EstimationProblem, basis: &OperatorBasis, alpha: &[f64]) -> Result<f64> {
    let system = build_system(problem, basis)?;
    let alpha = DVector::from_column_slice(alpha);
    Ok(msl_quadratic(system.lambda, &system.gram, &system.bvec, &alpha))
}
