use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Dense operator on a truncated Fock space of dimension `d`.
///
/// Most oracle matrices are exactly real (no displacement in `p`, no
/// rotation), so products and eigendecompositions switch to real arithmetic
/// whenever both operands have identically zero imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    pub entries: DMatrix<Complex64>,
}

/// Eigenvalues (ascending) and unitary eigenvectors of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: FockOperator,
}

/// Entries below this fraction of the largest are zeroed before diagonalising.
const FLUSH_RELATIVE: f64 = 1e-60;

impl FockOperator {
    pub fn new(entries: DMatrix<Complex64>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols(), "Fock operators are square");
        Self { entries }
    }

    pub fn from_real(m: DMatrix<f64>) -> Self {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        Self::new(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    pub fn is_exactly_real(&self) -> bool {
        self.entries.iter().all(|c| c.im == 0.0)
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.entries.map(|c| c.re)
    }

    pub fn imag_part(&self) -> DMatrix<f64> {
        self.entries.map(|c| c.im)
    }

    fn from_parts(re: DMatrix<f64>, im: Option<DMatrix<f64>>) -> Self {
        match im {
            None => Self::from_real(re),
            Some(im) => Self::new(re.zip_map(&im, |r, i| Complex64::new(r, i))),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.entries.adjoint())
    }

    /// `max |X − X†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() < tol
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// `max |X_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |a, c| a.max(c.norm()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.entries.map(|c| c * s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.entries + &other.entries)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.entries - &other.entries)
    }

    /// Matrix product, in real arithmetic when possible.
    pub fn matmul(&self, other: &Self) -> Self {
        let (ar, br) = (self.real_part(), other.real_part());
        match (self.is_exactly_real(), other.is_exactly_real()) {
            (true, true) => Self::from_real(ar * br),
            (true, false) => {
                let bi = other.imag_part();
                Self::from_parts(&ar * br, Some(&ar * bi))
            }
            (false, true) => {
                let ai = self.imag_part();
                Self::from_parts(&ar * &br, Some(ai * &br))
            }
            (false, false) => {
                let (ai, bi) = (self.imag_part(), other.imag_part());
                let re = &ar * &br - &ai * &bi;
                let im = &ar * &bi + &ai * &br;
                Self::from_parts(re, Some(im))
            }
        }
    }

    /// `Tr(XY)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += self.entries[(i, j)] * other.entries[(j, i)];
            }
        }
        acc
    }

    /// Eigendecomposition of a Hermitian operator (the Hermitian part is used).
    pub fn hermitian_eigen(&self) -> HermitianEigen {
        // nalgebra's QR sweeps return inf/NaN when entries span ~200 decades.
        let cutoff = self.max_abs() * FLUSH_RELATIVE;
        let flushed = Self::new(self.entries.map(|z| if z.norm() < cutoff { Complex64::new(0.0, 0.0) } else { z }));
        let (values, vectors) = if flushed.is_exactly_real() {
            let re = flushed.real_part();
            let sym = (&re + re.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym);
            (eig.eigenvalues, FockOperator::from_real(eig.eigenvectors))
        } else {
            let herm = (&flushed.entries + flushed.entries.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = SymmetricEigen::new(herm);
            (eig.eigenvalues, FockOperator::new(eig.eigenvectors))
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted_values: Vec<f64> = order.iter().map(|&k| values[k]).collect();
        let cols: Vec<DVector<Complex64>> = order.iter().map(|&k| vectors.entries.column(k).into_owned()).collect();
        HermitianEigen {
            values: sorted_values,
            vectors: FockOperator::new(DMatrix::from_columns(&cols)),
        }
    }

    /// `U† X U`.
    pub fn conjugate_by(&self, u: &FockOperator) -> Self {
        u.adjoint().matmul(&self.matmul(u))
    }

    /// Leading `k×k` block.
    pub fn crop(&self, k: usize) -> Self {
        Self::new(self.entries.view((0, 0), (k, k)).into_owned())
    }
}
