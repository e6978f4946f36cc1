//! Single-mode Gaussian states and parametric encodings.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phase_space::PhasePolynomial;

/// Symmetric 2×2 covariance matrix on `(q, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covariance {
    pub qq: f64,
    pub qp: f64,
    pub pp: f64,
}

impl Covariance {
    pub fn new(qq: f64, qp: f64, pp: f64) -> Self {
        Self { qq, qp, pp }
    }

    pub fn diagonal(qq: f64, pp: f64) -> Self {
        Self { qq, qp: 0.0, pp }
    }

    pub fn det(&self) -> f64 {
        self.qq * self.pp - self.qp * self.qp
    }

    /// `M V Mᵀ` for a real 2×2 matrix `M` given row-major.
    pub fn transform(&self, m: [[f64; 2]; 2]) -> Self {
        let v = [[self.qq, self.qp], [self.qp, self.pp]];
        let mut mv = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                mv[i][j] = m[i][0] * v[0][j] + m[i][1] * v[1][j];
            }
        }
        let out = |i: usize, j: usize| mv[i][0] * m[j][0] + mv[i][1] * m[j][1];
        Self {
            qq: out(0, 0),
            qp: 0.5 * (out(0, 1) + out(1, 0)),
            pp: out(1, 1),
        }
    }

    /// Variance of the rotated quadrature `q cos φ + p sin φ`.
    pub fn quadrature_variance(&self, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        c * c * self.qq + 2.0 * s * c * self.qp + s * s * self.pp
    }
}

fn rotation(phi: f64) -> [[f64; 2]; 2] {
    let (s, c) = phi.sin_cos();
    [[c, -s], [s, c]]
}

/// Mean vector and covariance of a single-mode Gaussian state (`ħ = 1`,
/// vacuum covariance `½·I`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianState {
    pub mean: [f64; 2],
    pub cov: Covariance,
}

impl GaussianState {
    /// Builds a state, warning (not failing) when `det V < 1/4`.
    pub fn new(mean: [f64; 2], cov: Covariance) -> Self {
        if cov.det() < 0.25 - 1e-12 {
            log::warn!(
                "covariance violates the uncertainty relation: det V = {} < 1/4",
                cov.det()
            );
        }
        Self { mean, cov }
    }

    pub fn vacuum() -> Self {
        Self::new([0.0, 0.0], Covariance::diagonal(0.5, 0.5))
    }

    /// Coherent state `|α⟩`, mean `(√2 Re α, √2 Im α)`.
    pub fn coherent(alpha: Complex64) -> Self {
        let s = std::f64::consts::SQRT_2;
        Self::new([s * alpha.re, s * alpha.im], Covariance::diagonal(0.5, 0.5))
    }

    pub fn thermal(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "thermal occupation must be finite and non-negative, got {nbar}"
            )));
        }
        Ok(Self::new([0.0, 0.0], Covariance::diagonal(nbar + 0.5, nbar + 0.5)))
    }

    /// Phase-space rotation by `φ` (counter-clockwise), i.e. `e^{iφn̂} ρ e^{-iφn̂}`.
    pub fn rotated(&self, phi: f64) -> Self {
        let r = rotation(phi);
        let m = self.mean;
        Self {
            mean: [r[0][0] * m[0] + r[0][1] * m[1], r[1][0] * m[0] + r[1][1] * m[1]],
            cov: self.cov.transform(r),
        }
    }

    pub fn displaced(&self, dq: f64, dp: f64) -> Self {
        Self {
            mean: [self.mean[0] + dq, self.mean[1] + dp],
            cov: self.cov,
        }
    }

    /// Faithful (full-rank) iff `det V > 1/4` strictly.
    pub fn is_faithful(&self) -> bool {
        self.cov.det() > 0.25
    }

    /// Symplectic eigenvalue `ν = √det V`; the state is pure iff `ν = ½`.
    pub fn symplectic_eigenvalue(&self) -> f64 {
        self.cov.det().max(0.0).sqrt()
    }

    /// `∫ W(r) poly(r) d²r`, exact via Isserlis pairings about the mean.
    pub fn moment(&self, poly: &PhasePolynomial) -> Complex64 {
        let Some(deg) = poly.degree() else {
            return Complex64::new(0.0, 0.0);
        };
        let table = MomentTable::new(&self.cov, deg as usize);
        poly.terms()
            .map(|((m, n), c)| c * self.raw_monomial(&table, m as usize, n as usize))
            .sum()
    }

    /// `E[q^m p^n]` for a single monomial.
    pub fn monomial_moment(&self, m: u32, n: u32) -> f64 {
        let table = MomentTable::new(&self.cov, (m + n) as usize);
        self.raw_monomial(&table, m as usize, n as usize)
    }

    fn raw_monomial(&self, table: &MomentTable, m: usize, n: usize) -> f64 {
        let [mq, mp] = self.mean;
        let mut total = 0.0;
        for i in 0..=m {
            let ci = binomial(m, i) * mq.powi((m - i) as i32);
            if ci == 0.0 {
                continue;
            }
            for j in 0..=n {
                let cj = binomial(n, j) * mp.powi((n - j) as i32);
                if cj == 0.0 {
                    continue;
                }
                total += ci * cj * table.get(i, j);
            }
        }
        total
    }

    /// Wigner function `W(q, p)`.
    pub fn wigner(&self, q: f64, p: f64) -> f64 {
        let det = self.cov.det();
        let dq = q - self.mean[0];
        let dp = p - self.mean[1];
        let quad = (self.cov.pp * dq * dq - 2.0 * self.cov.qp * dq * dp + self.cov.qq * dp * dp) / det;
        (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Central moments `E[x^a y^b]` for `a + b ≤ max_degree`, filled by the
/// recursion `E[x^a y^b] = (a−1)V_qq E[x^{a−2}y^b] + b V_qp E[x^{a−1}y^{b−1}]`.
struct MomentTable {
    size: usize,
    values: Vec<f64>,
}

impl MomentTable {
    fn new(cov: &Covariance, max_degree: usize) -> Self {
        let size = max_degree + 1;
        let mut values = vec![0.0; size * size];
        let idx = |a: usize, b: usize| a * size + b;
        for total in 0..size {
            for a in 0..=total {
                let b = total - a;
                let value = if total == 0 {
                    1.0
                } else if total % 2 == 1 {
                    0.0
                } else if a > 0 {
                    let mut v = 0.0;
                    if a >= 2 {
                        v += (a - 1) as f64 * cov.qq * values[idx(a - 2, b)];
                    }
                    if b >= 1 {
                        v += b as f64 * cov.qp * values[idx(a - 1, b - 1)];
                    }
                    v
                } else {
                    (b - 1) as f64 * cov.pp * values[idx(0, b - 2)]
                };
                values[idx(a, b)] = value;
            }
        }
        Self { size, values }
    }

    fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size + b]
    }
}

pub type MeanMap = Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>;
pub type CovarianceMap = Arc<dyn Fn(f64) -> Covariance + Send + Sync>;

/// User-supplied encoding `θ ↦ (mean(θ), V(θ))`.
#[derive(Clone)]
pub struct CustomSymplectic {
    pub name: String,
    pub mean: MeanMap,
    pub cov: CovarianceMap,
}

impl fmt::Debug for CustomSymplectic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSymplectic").field("name", &self.name).finish()
    }
}

/// How the parameter θ enters the probe state.
#[derive(Clone, Debug)]
pub enum ParametricGaussianModel {
    /// `mean(θ) = (q₀ + θ, p₀)`, covariance unchanged.
    Displacement { probe: GaussianState },
    /// `mean(θ) = M(θ)·mean`, `V(θ) = M(θ) V M(θ)ᵀ` with `M(θ) = diag(e^{−θ}, e^{θ})`.
    Squeezing { probe: GaussianState },
    Custom(CustomSymplectic),
}

impl ParametricGaussianModel {
    pub fn encode(&self, theta: f64) -> GaussianState {
        match self {
            Self::Displacement { probe } => GaussianState {
                mean: [probe.mean[0] + theta, probe.mean[1]],
                cov: probe.cov,
            },
            Self::Squeezing { probe } => {
                let (shrink, grow) = ((-theta).exp(), theta.exp());
                GaussianState {
                    mean: [shrink * probe.mean[0], grow * probe.mean[1]],
                    cov: Covariance {
                        qq: shrink * shrink * probe.cov.qq,
                        qp: probe.cov.qp,
                        pp: grow * grow * probe.cov.pp,
                    },
                }
            }
            Self::Custom(c) => GaussianState {
                mean: (c.mean)(theta),
                cov: (c.cov)(theta),
            },
        }
    }

    /// Probe state at θ = 0 for the built-in encodings.
    pub fn probe(&self) -> Option<&GaussianState> {
        match self {
            Self::Displacement { probe } | Self::Squeezing { probe } => Some(probe),
            Self::Custom(_) => None,
        }
    }
}
