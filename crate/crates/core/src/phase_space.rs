//! Polynomials on single-mode phase space and their Moyal algebra.
//!
//! A [`PhasePolynomial`] is the Weyl symbol of a polynomial operator in the
//! quadratures. Coordinates are ordered `(q, p)` with symplectic form
//! `Ω = [[0, 1], [-1, 0]]` and `ħ = 1`, so that `q ⋆ p - p ⋆ q = i`.
//!
//! Two products live here:
//!
//! - the pointwise (commutative) product, exposed as `*` / [`poly_mul`];
//! - the Moyal star product [`moyal_star`], the symbol of the operator product.
//!
//! The symmetric combination [`jordan_product`] is the symbol of the
//! anticommutator `½{A, B}` and is what the ρ₀-weighted inner product uses.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Imaginary parts below this magnitude count as zero when deciding reality.
pub const REALITY_TOL: f64 = 1e-14;

/// Weyl symbol of a polynomial operator: a finite sum `Σ c_{mn} q^m p^n`.
///
/// Terms with an exactly-zero coefficient are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhasePolynomial {
    terms: BTreeMap<(u32, u32), Complex64>,
}

impl PhasePolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        Self::monomial(0, 0, c)
    }

    pub fn q() -> Self {
        Self::monomial(1, 0, 1.0)
    }

    pub fn p() -> Self {
        Self::monomial(0, 1, 1.0)
    }

    /// `c · q^m p^n`.
    pub fn monomial(m: u32, n: u32, c: impl Into<Complex64>) -> Self {
        let mut out = Self::zero();
        out.accumulate(m, n, c.into());
        out
    }

    /// Rotated quadrature `q cos φ + p sin φ`.
    pub fn quadrature(phi: f64) -> Self {
        // cos(π/2) evaluates to 6e-17; exact zeros keep symbols free of stray terms
        let snap = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
        Self::monomial(1, 0, snap(phi.cos())) + Self::monomial(0, 1, snap(phi.sin()))
    }

    pub fn from_terms<I, C>(terms: I) -> Self
    where
        I: IntoIterator<Item = ((u32, u32), C)>,
        C: Into<Complex64>,
    {
        let mut out = Self::zero();
        for ((m, n), c) in terms {
            out.accumulate(m, n, c.into());
        }
        out
    }

    fn accumulate(&mut self, m: u32, n: u32, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        let entry = self.terms.entry((m, n)).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
        if *entry == Complex64::new(0.0, 0.0) {
            self.terms.remove(&(m, n));
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree, or `None` for the zero polynomial (degree −∞).
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|&(m, n)| m + n).max()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: u32, n: u32) -> Complex64 {
        self.terms.get(&(m, n)).copied().unwrap_or_default()
    }

    /// Terms in ascending `(m, n)` order.
    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), Complex64)> + '_ {
        self.terms.iter().map(|(&k, &c)| (k, c))
    }

    pub fn max_imag(&self) -> f64 {
        self.terms.values().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    /// True when every coefficient is real within [`REALITY_TOL`]; real
    /// symbols quantize to Hermitian operators.
    pub fn is_real(&self) -> bool {
        self.max_imag() < REALITY_TOL
    }

    pub fn real_part(&self) -> Self {
        Self::from_terms(self.terms().map(|(k, c)| (k, c.re)))
    }

    pub fn scale(&self, s: impl Into<Complex64>) -> Self {
        let s = s.into();
        Self::from_terms(self.terms().map(|(k, c)| (k, c * s)))
    }

    /// `∂_q^{dq} ∂_p^{dp}` of the polynomial.
    pub fn derivative(&self, dq: u32, dp: u32) -> Self {
        let mut out = Self::zero();
        for ((m, n), c) in self.terms() {
            if m < dq || n < dp {
                continue;
            }
            let f = falling(m, dq) * falling(n, dp);
            out.accumulate(m - dq, n - dp, c * f);
        }
        out
    }

    pub fn eval(&self, q: f64, p: f64) -> Complex64 {
        self.terms()
            .map(|((m, n), c)| c * q.powi(m as i32) * p.powi(n as i32))
            .sum()
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::one(), |acc, _| &acc * self)
    }

    /// Restriction to the line `(q, p) = x (cos φ, sin φ)`, returned as
    /// univariate coefficients in ascending powers of `x`.
    pub fn along_direction(&self, phi: f64) -> Vec<Complex64> {
        let (s, c) = phi.sin_cos();
        let deg = self.degree().unwrap_or(0) as usize;
        let mut out = vec![Complex64::new(0.0, 0.0); deg + 1];
        for ((m, n), coef) in self.terms() {
            out[(m + n) as usize] += coef * c.powi(m as i32) * s.powi(n as i32);
        }
        out
    }
}

fn falling(n: u32, k: u32) -> f64 {
    (0..k).map(|j| (n - j) as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Coefficient-wise sum.
pub fn poly_add(a: &PhasePolynomial, b: &PhasePolynomial) -> PhasePolynomial {
    let mut out = a.clone();
    for ((m, n), c) in b.terms() {
        out.accumulate(m, n, c);
    }
    out
}

/// Pointwise (commutative) product of two symbols.
pub fn poly_mul(a: &PhasePolynomial, b: &PhasePolynomial) -> PhasePolynomial {
    let mut out = PhasePolynomial::zero();
    for ((m1, n1), c1) in a.terms() {
        for ((m2, n2), c2) in b.terms() {
            out.accumulate(m1 + m2, n1 + n2, c1 * c2);
        }
    }
    out
}

/// Moyal star product `a ⋆ b`.
///
/// With `Ω^{qp} = 1`, the order-`k` bidifferential term expands as
/// `Σ_j C(k, j) (−1)^{k−j} (∂_q^j ∂_p^{k−j} a)(∂_q^{k−j} ∂_p^j b)`, weighted by
/// `(i/2)^k / k!`. For polynomials the series stops once the derivatives
/// vanish, so the result is exact.
pub fn moyal_star(a: &PhasePolynomial, b: &PhasePolynomial) -> PhasePolynomial {
    star_orders(a, b, 1)
}

/// Moyal series of `a ⋆ b` keeping only orders that are multiples of `step`.
fn star_orders(a: &PhasePolynomial, b: &PhasePolynomial, step: u32) -> PhasePolynomial {
    let mut out = PhasePolynomial::zero();
    let half_i = Complex64::new(0.0, 0.5);
    for ((m1, n1), c1) in a.terms() {
        for ((m2, n2), c2) in b.terms() {
            let max_order = (m1 + n1).min(m2 + n2);
            for k in (0..=max_order).step_by(step as usize) {
                let prefactor = half_i.powu(k) / factorial(k);
                for j in 0..=k {
                    // a differentiated j times in q and k-j in p;
                    // b differentiated k-j times in q and j in p.
                    let (aq, ap, bq, bp) = (j, k - j, k - j, j);
                    if aq > m1 || ap > n1 || bq > m2 || bp > n2 {
                        continue;
                    }
                    let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                    let weight = binomial(k, j)
                        * sign
                        * falling(m1, aq)
                        * falling(n1, ap)
                        * falling(m2, bq)
                        * falling(n2, bp);
                    out.accumulate(
                        m1 - aq + m2 - bq,
                        n1 - ap + n2 - bp,
                        c1 * c2 * prefactor * weight,
                    );
                }
            }
        }
    }
    out
}

/// Symbol of the anticommutator `½{A, B}`: `½(a ⋆ b + b ⋆ a)`.
///
/// Odd Moyal orders cancel between `a ⋆ b` and `b ⋆ a`, so only the even
/// orders are summed and two real symbols give an exactly real result.
pub fn jordan_product(a: &PhasePolynomial, b: &PhasePolynomial) -> PhasePolynomial {
    star_orders(a, b, 2)
}

impl Add for &PhasePolynomial {
    type Output = PhasePolynomial;
    fn add(self, rhs: Self) -> PhasePolynomial {
        poly_add(self, rhs)
    }
}

impl Add for PhasePolynomial {
    type Output = PhasePolynomial;
    fn add(self, rhs: Self) -> PhasePolynomial {
        poly_add(&self, &rhs)
    }
}

impl Sub for &PhasePolynomial {
    type Output = PhasePolynomial;
    fn sub(self, rhs: Self) -> PhasePolynomial {
        poly_add(self, &rhs.scale(-1.0))
    }
}

impl Sub for PhasePolynomial {
    type Output = PhasePolynomial;
    fn sub(self, rhs: Self) -> PhasePolynomial {
        &self - &rhs
    }
}

impl Neg for PhasePolynomial {
    type Output = PhasePolynomial;
    fn neg(self) -> PhasePolynomial {
        self.scale(-1.0)
    }
}

impl Mul for &PhasePolynomial {
    type Output = PhasePolynomial;
    fn mul(self, rhs: Self) -> PhasePolynomial {
        poly_mul(self, rhs)
    }
}

impl Mul for PhasePolynomial {
    type Output = PhasePolynomial;
    fn mul(self, rhs: Self) -> PhasePolynomial {
        poly_mul(&self, &rhs)
    }
}

// ---------------------------------------------------------------------------
// Canonical text form: "c * q^m p^n + ..." with terms sorted by (m+n, m)
// descending. Real coefficients print bare, imaginary ones as "2i", general
// complex ones parenthesized as "(1.5-0.25i)".

fn fmt_magnitude(c: Complex64) -> (bool, String) {
    if c.im == 0.0 {
        (c.re < 0.0 || (c.re == 0.0 && c.re.is_sign_negative()), format!("{}", c.re.abs()))
    } else if c.re == 0.0 {
        (c.im < 0.0, format!("{}i", c.im.abs()))
    } else {
        let sign = if c.im < 0.0 { '-' } else { '+' };
        (false, format!("({}{}{}i)", c.re, sign, c.im.abs()))
    }
}

fn fmt_monomial(m: u32, n: u32) -> String {
    let factor = |name: &str, e: u32| match e {
        0 => None,
        1 => Some(name.to_string()),
        _ => Some(format!("{name}^{e}")),
    };
    [factor("q", m), factor("p", n)]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(" ")
}

impl fmt::Display for PhasePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut keys: Vec<_> = self.terms.keys().copied().collect();
        keys.sort_by(|a, b| (b.0 + b.1, b.0).cmp(&(a.0 + a.1, a.0)));
        for (idx, (m, n)) in keys.into_iter().enumerate() {
            let (negative, mag) = fmt_magnitude(self.terms[&(m, n)]);
            match (idx, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            write!(f, "{mag}")?;
            if m + n > 0 {
                write!(f, " * {}", fmt_monomial(m, n))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(char),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i] as char;
        if ch.is_ascii_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part: e.g. 1e-3, but not the identifier e in isolation
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| Error::Parse {
                position: start,
                message: format!("invalid number '{text}'"),
            })?;
            out.push((start, Token::Num(value)));
        } else if matches!(ch, 'q' | 'p' | 'i') {
            out.push((i, Token::Ident(ch)));
            i += 1;
        } else if matches!(ch, '+' | '-' | '*' | '^' | '(' | ')') {
            out.push((i, Token::Op(ch)));
            i += 1;
        } else {
            return Err(Error::Parse {
                position: i,
                message: format!("unexpected character '{ch}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            position: self.offset(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<PhasePolynomial> {
        let mut acc = match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                -self.term()?
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.term()?
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Some(Token::Op('+')) => {
                    self.pos += 1;
                    acc = acc + self.term()?;
                }
                Some(Token::Op('-')) => {
                    self.pos += 1;
                    acc = acc - self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<PhasePolynomial> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(Token::Op('*')) => {
                    self.pos += 1;
                    acc = acc * self.power()?;
                }
                Some(Token::Num(_)) | Some(Token::Ident(_)) | Some(Token::Op('(')) => {
                    acc = acc * self.power()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<PhasePolynomial> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            match self.peek().cloned() {
                Some(Token::Num(e)) if e >= 0.0 && e.fract() == 0.0 && e < 64.0 => {
                    self.pos += 1;
                    return Ok(base.pow(e as u32));
                }
                _ => return Err(self.err("exponent must be a small non-negative integer")),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<PhasePolynomial> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                // "2i" is an imaginary literal
                if let Some(Token::Ident('i')) = self.peek() {
                    self.pos += 1;
                    return Ok(PhasePolynomial::constant(Complex64::new(0.0, v)));
                }
                Ok(PhasePolynomial::constant(v))
            }
            Some(Token::Ident('q')) => {
                self.pos += 1;
                Ok(PhasePolynomial::q())
            }
            Some(Token::Ident('p')) => {
                self.pos += 1;
                Ok(PhasePolynomial::p())
            }
            Some(Token::Ident('i')) => {
                self.pos += 1;
                Ok(PhasePolynomial::constant(Complex64::new(0.0, 1.0)))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::Op(')')) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.err("expected ')'")),
                }
            }
            Some(tok) => Err(self.err(format!("unexpected token {tok:?}"))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

impl FromStr for PhasePolynomial {
    type Err = Error;

    /// Parses the canonical form as well as looser input such as
    /// `"q^2 + p^2 - 1"`, `"0.5 q p"` or `"(q - 1)^2"`.
    fn from_str(s: &str) -> Result<Self> {
        let tokens = tokenize(s)?;
        if tokens.is_empty() {
            return Err(Error::Parse {
                position: 0,
                message: "empty polynomial".into(),
            });
        }
        let mut parser = Parser {
            tokens,
            pos: 0,
            len: s.len(),
        };
        let poly = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.err("trailing input"));
        }
        Ok(poly)
    }
}
