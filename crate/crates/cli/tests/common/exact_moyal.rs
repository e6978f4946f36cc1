//! Moyal product in exact Gaussian-integer arithmetic, used as an oracle for
//! the floating-point implementation.
//!
//! A polynomial is stored as integer coefficients over a common denominator.
//! Every operation uses checked `i128` arithmetic, so an overflow panics
//! instead of wrapping.

use std::collections::BTreeMap;

use spm_core::PhasePolynomial;

/// Highest Moyal order a product may reach; fixes the denominator `2^K K!`.
pub const MAX_ORDER: u32 = 4;

/// `re + i·im`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussInt {
    pub re: i128,
    pub im: i128,
}

impl GaussInt {
    fn mul(self, o: Self) -> Self {
        let re = mul(self.re, o.re).checked_sub(mul(self.im, o.im)).expect("overflow");
        let im = mul(self.re, o.im).checked_add(mul(self.im, o.re)).expect("overflow");
        Self { re, im }
    }

    fn scale(self, s: i128) -> Self {
        Self {
            re: mul(self.re, s),
            im: mul(self.im, s),
        }
    }

    fn is_zero(self) -> bool {
        self.re == 0 && self.im == 0
    }
}

fn mul(a: i128, b: i128) -> i128 {
    a.checked_mul(b).expect("overflow")
}

/// `Σ c_{mn} qᵐpⁿ / den`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactPoly {
    pub coeffs: BTreeMap<(u32, u32), GaussInt>,
    pub den: i128,
}

impl ExactPoly {
    /// Real polynomial with integer numerators over `den`.
    pub fn from_integers(terms: &[((u32, u32), i128)], den: i128) -> Self {
        let mut out = Self {
            coeffs: BTreeMap::new(),
            den,
        };
        for &(k, num) in terms {
            out.accumulate(k, GaussInt { re: num, im: 0 });
        }
        out
    }

    fn accumulate(&mut self, k: (u32, u32), v: GaussInt) {
        let e = self.coeffs.entry(k).or_insert(GaussInt { re: 0, im: 0 });
        e.re = e.re.checked_add(v.re).expect("overflow");
        e.im = e.im.checked_add(v.im).expect("overflow");
        if e.is_zero() {
            self.coeffs.remove(&k);
        }
    }

    /// `Σ_k (i/2)^k / k! Σ_j C(k,j) (−1)^j ∂_q^{k−j}∂_p^j a · ∂_p^{k−j}∂_q^j b`.
    ///
    /// For monomials `qᵐ¹pⁿ¹` and `qᵐ²pⁿ²` every `j` at order `k` lands on
    /// `q^{m₁+m₂−k} p^{n₁+n₂−k}`. The factor `(i/2)^k/k!` is carried as
    /// `i^k 2^{K−k} K!/k!` over the extra denominator `2^K K!`.
    pub fn star(&self, o: &Self) -> Self {
        let kfact = factorial(MAX_ORDER);
        let mut out = Self {
            coeffs: BTreeMap::new(),
            den: mul(mul(self.den, o.den), mul(1 << MAX_ORDER, kfact)),
        };
        for (&(m1, n1), &c1) in &self.coeffs {
            for (&(m2, n2), &c2) in &o.coeffs {
                let c12 = c1.mul(c2);
                for k in 0..=(m1 + n1).min(m2 + n2) {
                    assert!(k <= MAX_ORDER, "Moyal order {k} exceeds MAX_ORDER");
                    let mut weight = 0i128;
                    for j in 0..=k {
                        let (aq, ap, bq, bp) = (k - j, j, j, k - j);
                        if aq > m1 || ap > n1 || bq > m2 || bp > n2 {
                            continue;
                        }
                        let sign = if j % 2 == 0 { 1 } else { -1 };
                        weight += sign
                            * binomial(k, j)
                            * falling(m1, aq)
                            * falling(n1, ap)
                            * falling(m2, bq)
                            * falling(n2, bp);
                    }
                    if weight == 0 {
                        continue;
                    }
                    let real = mul(weight, (1 << (MAX_ORDER - k)) * kfact / factorial(k));
                    let i_pow = match k % 4 {
                        0 => GaussInt { re: 1, im: 0 },
                        1 => GaussInt { re: 0, im: 1 },
                        2 => GaussInt { re: -1, im: 0 },
                        _ => GaussInt { re: 0, im: -1 },
                    };
                    out.accumulate((m1 + m2 - k, n1 + n2 - k), c12.mul(i_pow).scale(real));
                }
            }
        }
        out
    }

    /// `max |c|` over coefficients.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .values()
            .map(|c| c.re.abs().max(c.im.abs()) as f64 / self.den as f64)
            .fold(0.0, f64::max)
    }

    /// `max |self − poly|` over real and imaginary parts of every coefficient.
    pub fn distance(&self, poly: &PhasePolynomial) -> f64 {
        let den = self.den as f64;
        let mut worst: f64 = 0.0;
        for (&k, c) in &self.coeffs {
            let v = poly.coeff(k.0, k.1);
            worst = worst
                .max((c.re as f64 / den - v.re).abs())
                .max((c.im as f64 / den - v.im).abs());
        }
        for (k, v) in poly.terms() {
            if !self.coeffs.contains_key(&k) {
                worst = worst.max(v.norm());
            }
        }
        worst
    }
}

fn factorial(n: u32) -> i128 {
    (1..=n as i128).product()
}

fn binomial(n: u32, k: u32) -> i128 {
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128)
}

/// `n (n−1) ⋯ (n−k+1)`
fn falling(n: u32, k: u32) -> i128 {
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128)
}
