//! Weyl quantization of polynomial symbols on a truncated Fock space.
//!
//! `Weyl(q^m p^n) = 2^{−m} Σ_k C(m,k) q̂^k p̂^n q̂^{m−k}` (McCoy). Products are
//! formed in dimension `d + degree` and cropped, so every returned entry
//! equals the corresponding entry of the untruncated operator.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FockOperator;
use crate::phase_space::PhasePolynomial;

/// Truncated `q̂ = (a + a†)/√2`.
pub fn position_matrix(d: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(d, d);
    for n in 1..d {
        let v = (n as f64 / 2.0).sqrt();
        q[(n - 1, n)] = v;
        q[(n, n - 1)] = v;
    }
    q
}

/// Left-multiplies by the tridiagonal `q̂` (`sign = +1`) or by
/// `A = (a − a†)/√2` (`sign = −1`), where `p̂ = −iA`.
fn apply_tridiagonal(x: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    let d = x.nrows();
    let up: Vec<f64> = (0..d).map(|n| ((n + 1) as f64 / 2.0).sqrt()).collect();
    let down: Vec<f64> = (0..d).map(|n| sign * (n as f64 / 2.0).sqrt()).collect();
    let mut out = DMatrix::zeros(d, x.ncols());
    for c in 0..x.ncols() {
        let src = x.column(c);
        let mut dst = out.column_mut(c);
        // row n: entry (n, n+1) = √((n+1)/2), entry (n, n−1) = sign·√(n/2)
        for n in 0..d {
            let mut v = 0.0;
            if n + 1 < d {
                v += up[n] * src[n + 1];
            }
            if n > 0 {
                v += down[n] * src[n - 1];
            }
            dst[n] = v;
        }
    }
    out
}

/// Weyl quantization of a real-or-complex polynomial symbol.
pub fn poly_to_fock(poly: &PhasePolynomial, d: usize) -> FockOperator {
    let degree = poly.degree().unwrap_or(0) as usize;
    let work = d + degree + 1;
    let mut re = DMatrix::<f64>::zeros(work, work);
    let mut im = DMatrix::<f64>::zeros(work, work);
    for ((m, n), c) in poly.terms() {
        let (m, n) = (m as usize, n as usize);
        for k in 0..=m {
            let weight = binomial(m, k) / 2f64.powi(m as i32);
            let mut x = DMatrix::<f64>::identity(work, work);
            for _ in 0..(m - k) {
                x = apply_tridiagonal(&x, 1.0);
            }
            for _ in 0..n {
                x = apply_tridiagonal(&x, -1.0);
            }
            for _ in 0..k {
                x = apply_tridiagonal(&x, 1.0);
            }
            // p̂^n = (−i)^n A^n
            let phase = Complex64::new(0.0, -1.0).powu(n as u32) * c * weight;
            re += &x * phase.re;
            im += &x * phase.im;
        }
    }
    let entries = DMatrix::from_fn(d, d, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
    FockOperator::new(entries)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}
