//! Truncated Fock-space oracle.
//!
//! States are represented on `span{|0⟩,…,|d−1⟩}` by their exact compressions
//! `PρP`. Because the MSL of an operator `X = PXP` depends on `ρ₀` and `ρ̄`
//! only through their compressions, the optimum found here is the optimum
//! over operators supported on the truncated space and therefore an upper
//! bound on the global MSL that decreases as `d` grows.

mod dump;
mod operator;
mod oracle;
mod ratio;
mod states;
mod weyl;

pub use dump::{read_operator, write_operator, DUMP_MAGIC};
pub use operator::{FockOperator, HermitianEigen};
pub use oracle::{
    averaged_states_fock, global_msl, pm_msl_operator_pvm, solve_lyapunov, weighted_norm_sq, FockOracle,
    LyapunovSolution, OracleConfig, OracleRun,
};
pub use ratio::{fit_wigner_ratio, FitGrid, FitReport};
pub use states::{gaussian_to_fock, gaussian_to_fock_lenient, williamson, Williamson};
pub use weyl::{poly_to_fock, position_matrix};
