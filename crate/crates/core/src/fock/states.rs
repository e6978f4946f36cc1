//! Gaussian states on a truncated Fock space.
//!
//! A Gaussian state is written as `D(β) R(φ) S(r) ρ_th(n̄) S(r)† R(φ)† D(β)†`
//! from the Williamson form of its covariance. Each factor is applied through
//! its normal-ordered (disentangled) expansion:
//!
//! - `S(r) = exp(−½τa†²) sech(r)^{n̂+½} exp(½τa²)`, `τ = tanh r`;
//! - `R(φ) = e^{iφn̂}`;
//! - `D(β) = e^{−|β|²/2} e^{βa†} e^{−β*a}`.
//!
//! Raising factors only feed higher indices, so the leading `d` components
//! come out exact once the input to each lowering factor is long enough.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FockOperator;
use crate::error::{Error, Result};
use crate::gaussian::{Covariance, GaussianState};

/// Default tolerated trace deficit of a truncated state.
pub const TRACE_TOL: f64 = 1e-8;

/// Williamson data: `V = ν R(φ) diag(e^{−2r}, e^{2r}) R(φ)ᵀ`, `ν = n̄ + ½`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Williamson {
    pub nbar: f64,
    /// Signed squeezing parameter `r`.
    pub squeeze: f64,
    /// Rotation angle in `(−π/4, π/4]`.
    pub angle: f64,
}

pub fn williamson(cov: &Covariance) -> Result<Williamson> {
    let det = cov.det();
    if !(det >= 0.25 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "covariance with det V = {det} < 1/4 is not a quantum state"
        )));
    }
    let nu = det.max(0.25).sqrt();
    // V/ν = cosh2r·I − sinh2r·[[cos2φ, sin2φ], [sin2φ, −cos2φ]]
    let x = -(cov.qq - cov.pp) / (2.0 * nu);
    let y = -cov.qp / nu;
    let mut amp = x.hypot(y);
    let mut two_phi = if amp == 0.0 { 0.0 } else { y.atan2(x) };
    if two_phi > std::f64::consts::FRAC_PI_2 {
        two_phi -= std::f64::consts::PI;
        amp = -amp;
    } else if two_phi <= -std::f64::consts::FRAC_PI_2 {
        two_phi += std::f64::consts::PI;
        amp = -amp;
    }
    Ok(Williamson {
        nbar: (nu - 0.5).max(0.0),
        squeeze: 0.5 * amp.asinh(),
        angle: 0.5 * two_phi,
    })
}

/// Weighted pure components `ρ ≈ Σ wₘ |xₘ⟩⟨xₘ|` on the leading `d` levels.
pub(crate) struct StateColumns {
    pub vectors: Vec<(f64, Vec<Complex64>)>,
    pub deficit: f64,
}

fn thermal_weights(nbar: f64, cap: usize) -> (Vec<f64>, f64) {
    if nbar == 0.0 {
        return (vec![1.0], 0.0);
    }
    let ratio = nbar / (nbar + 1.0);
    let mut weights = Vec::new();
    let mut p = 1.0 / (nbar + 1.0);
    let mut tail = 1.0;
    while weights.len() < cap {
        weights.push(p);
        tail -= p;
        if ratio.powi(weights.len() as i32) < 1e-17 {
            break;
        }
        p *= ratio;
    }
    (weights, tail.max(0.0))
}

/// `S(r)|m⟩` on the leading `len` levels.
fn squeezed_number_state(m: usize, r: f64, len: usize) -> Vec<f64> {
    let tau = r.tanh();
    let sech = 1.0 / r.cosh();
    // exp(½τa²)|m⟩ followed by sech^{n̂+½}
    let mut lowered = vec![0.0; m + 1];
    let mut c = 1.0;
    let mut k = 0;
    loop {
        let j = m - 2 * k;
        lowered[j] = c * sech.powf(j as f64 + 0.5);
        if j < 2 {
            break;
        }
        k += 1;
        c *= 0.5 * tau / k as f64 * (((j) * (j - 1)) as f64).sqrt();
    }
    // exp(−½τa†²)
    let mut out = vec![0.0; len];
    for (j, &v) in lowered.iter().enumerate() {
        if v == 0.0 || j >= len {
            continue;
        }
        let mut c = v;
        let mut idx = j;
        let mut k = 0;
        loop {
            out[idx] += c;
            idx += 2;
            k += 1;
            if idx >= len {
                break;
            }
            c *= -0.5 * tau / k as f64 * ((idx * (idx - 1)) as f64).sqrt();
            if c == 0.0 {
                break;
            }
        }
    }
    out
}

/// `D(β)x` on the leading `d` levels; `x` must extend well past `d`.
fn displace(x: &[Complex64], beta: Complex64, d: usize) -> Vec<Complex64> {
    let w = x.len();
    let neg_conj = -beta.conj();
    // e^{−β*a}
    let mut lowered = vec![Complex64::new(0.0, 0.0); d.min(w)];
    for (j, slot) in lowered.iter_mut().enumerate() {
        let mut c = Complex64::new(1.0, 0.0);
        let mut acc = x[j];
        for k in 1..(w - j) {
            c *= neg_conj / k as f64 * ((j + k) as f64).sqrt();
            acc += c * x[j + k];
        }
        *slot = acc;
    }
    // e^{βa†}
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    for (j, &v) in lowered.iter().enumerate() {
        let mut c = v;
        out[j] += c;
        for i in (j + 1)..d {
            c *= beta / (i - j) as f64 * (i as f64).sqrt();
            out[i] += c;
        }
    }
    let damp = (-0.5 * beta.norm_sqr()).exp();
    out.iter_mut().for_each(|v| *v *= damp);
    out
}

pub(crate) fn state_columns(state: &GaussianState, d: usize) -> Result<StateColumns> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("Fock dimension must be at least 2, got {d}")));
    }
    let w = williamson(&state.cov)?;
    let beta = Complex64::new(state.mean[0], state.mean[1]) / std::f64::consts::SQRT_2;
    let displaced = beta.norm_sqr() > 0.0;
    let len = if displaced {
        let spread = (w.nbar + 0.5) * (2.0 * w.squeeze.abs()).cosh();
        (2 * d + 40 + (4.0 * beta.norm_sqr() + 20.0 * spread).ceil() as usize).min(8 * d + 400)
    } else {
        d
    };
    let (weights, thermal_tail) = thermal_weights(w.nbar, len);
    let mut vectors = Vec::with_capacity(weights.len());
    let mut captured = 0.0;
    for (m, &pm) in weights.iter().enumerate() {
        if m >= len {
            break;
        }
        let squeezed = squeezed_number_state(m, w.squeeze, len);
        let mut x: Vec<Complex64> = if w.angle != 0.0 {
            squeezed
                .iter()
                .enumerate()
                .map(|(n, &v)| Complex64::from_polar(v, w.angle * n as f64))
                .collect()
        } else {
            squeezed.iter().map(|&v| Complex64::new(v, 0.0)).collect()
        };
        if displaced {
            x = displace(&x, beta, d);
        }
        captured += pm * x.iter().map(|c| c.norm_sqr()).sum::<f64>();
        vectors.push((pm, x));
    }
    let kept: f64 = weights.iter().sum::<f64>();
    let deficit = (kept - captured).max(0.0) + thermal_tail;
    Ok(StateColumns { vectors, deficit })
}

/// Truncated density matrix and its trace deficit `1 − Tr(PρP)`.
pub fn gaussian_to_fock_lenient(state: &GaussianState, d: usize) -> Result<(FockOperator, f64)> {
    let cols = state_columns(state, d)?;
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for (w, x) in &cols.vectors {
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += *w * x[i] * x[j].conj();
            }
        }
    }
    Ok((FockOperator::new(m), cols.deficit))
}

/// Truncated density matrix; fails when more than `1e−8` of the trace is lost.
pub fn gaussian_to_fock(state: &GaussianState, d: usize) -> Result<FockOperator> {
    let (rho, deficit) = gaussian_to_fock_lenient(state, d)?;
    if deficit > TRACE_TOL {
        return Err(Error::TruncationDeficit { dim: d, deficit });
    }
    Ok(rho)
}
