//! Bayesian single-shot estimation strategies for single-mode Gaussian states.
//!
//! The crate computes the mean square loss (MSL) of the globally optimal
//! strategy and of strategies whose estimator operator is restricted to a
//! span of polynomial quadrature operators. Everything is expressed through
//! two prior-averaged states: `ρ₀ = ∫p(θ)ρ(θ)` and `ρ̄ = ∫p(θ)f(θ)ρ(θ)`.
//!
//! - [`phase_space`]: Weyl symbols and the Moyal algebra.
//! - [`gaussian`]: Gaussian states, parameter encodings, exact moments.
//! - [`bayes`]: priors, loss maps and prior-averaged functionals.
//! - [`solver`]: Gram systems and the subspace-optimal estimator operator.
//! - [`fock`]: truncated Fock-space oracle for the global optimum.
//! - [`homodyne`]: classical homodyne likelihoods, estimators and Monte Carlo.

pub mod bayes;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod homodyne;
pub mod phase_space;
pub mod quadrature;
pub mod solver;

pub use bayes::{EstimationProblem, LossMap, Prior, Weight};
pub use error::{Error, Result};
pub use fock::{FockOperator, FockOracle, OracleConfig};
pub use gaussian::{Covariance, GaussianState, ParametricGaussianModel};
pub use homodyne::{Estimator, HomodyneMeasurement};
pub use phase_space::{jordan_product, moyal_star, poly_add, poly_mul, PhasePolynomial};
pub use quadrature::QuadratureConfig;
pub use solver::{OperatorBasis, ProjectedSpm};
