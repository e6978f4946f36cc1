//! Acceptance suite: one line per criterion, with the measured quantity,
//! its tolerance and the wall-clock time against the budget.
//!
//! Lines go straight to stderr so they appear even when the harness
//! captures output.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::{Duration, Instant};

use common::exact_moyal::ExactPoly;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spm_cli::commands::{sweep_rows, SweepRow};
use spm_cli::ExperimentConfig;
use spm_core::homodyne::simulate_single_shot;
use spm_core::solver::{build_system, solve_projected_spm, stationarity_residuals};
use spm_core::{
    jordan_product, moyal_star, Covariance, EstimationProblem, Estimator, FockOracle, GaussianState,
    HomodyneMeasurement, LossMap, OperatorBasis, OracleConfig, ParametricGaussianModel, PhasePolynomial, Prior,
};

type Outcome = Result<String, String>;

fn log(line: &str) {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{line}");
}

fn run(id: u32, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let (ok, detail) = match outcome {
        Ok(d) => (in_time, d),
        Err(d) => (false, d),
    };
    let status = if ok { "PASS" } else { "FAIL" };
    let timing = format!(
        "{:.2} s of {} s{}",
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    log(&format!("criterion {id:>2} [{status}] {title}: {detail} ({timing})"));
    ok
}

fn displacement(probe: GaussianState, prior: Prior) -> EstimationProblem {
    EstimationProblem::new(ParametricGaussianModel::Displacement { probe }, prior, LossMap::Identity).unwrap()
}

fn squeezing(probe: GaussianState, mean: f64, variance: f64) -> EstimationProblem {
    EstimationProblem::new(
        ParametricGaussianModel::Squeezing { probe },
        Prior::Gaussian { mean, variance },
        LossMap::Identity,
    )
    .unwrap()
}

/// Pure squeezed probe with `V_qq = vqq`.
fn squeezed_probe(vqq: f64) -> GaussianState {
    GaussianState::new([0.0, 0.0], Covariance::diagonal(vqq, 0.25 / vqq))
}

fn shrinkage_msl(vqq: f64, var: f64) -> f64 {
    1.0 / (1.0 / vqq + 1.0 / var)
}

fn homodyne_quadratic_msl(var: f64) -> f64 {
    var - 4.0 * var * var / (3.0 * (4.0 * var).exp() - 1.0)
}

fn full_quadratic_denominator(cov: &Covariance, var: f64) -> f64 {
    1.0 + 2.0 * (3.0 * (8.0 * var).exp() - 1.0) * cov.qq * cov.pp - 4.0 * cov.qp * cov.qp
}

fn full_quadratic_msl(cov: &Covariance, var: f64) -> f64 {
    var - 16.0 * var * var * (4.0 * var).exp() * cov.qq * cov.pp / full_quadratic_denominator(cov, var)
}

/// Coefficients of `Δq²` and `Δp²` in the full-quadratic optimum.
fn full_quadratic_alphas(cov: &Covariance, mean: f64, var: f64) -> (f64, f64) {
    let pre = 4.0 * var * (2.0 * var).exp() / full_quadratic_denominator(cov, var);
    (-pre * cov.pp * (2.0 * mean).exp(), pre * cov.qq * (-2.0 * mean).exp())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn criterion_1() -> Outcome {
    let vqqs = [0.5, 0.875, 1.25, 1.625, 2.0];
    let vars = log_grid(0.01, 1.0, 5);
    let mut worst: f64 = 0.0;
    for &vqq in &vqqs {
        for &var in &vars {
            let problem = displacement(squeezed_probe(vqq), Prior::Gaussian { mean: 0.2, variance: var });
            let msl = solve_projected_spm(&problem, &OperatorBasis::linear_q())
                .map_err(|e| e.to_string())?
                .msl;
            let target = shrinkage_msl(vqq, var);
            worst = worst.max(((msl - target) / target).abs());
        }
    }
    let spot = solve_projected_spm(
        &displacement(GaussianState::vacuum(), Prior::Gaussian { mean: 0.0, variance: 1.0 }),
        &OperatorBasis::linear_q(),
    )
    .map_err(|e| e.to_string())?
    .msl;
    let detail = format!("max relative error {worst:.2e} on 5x5 grid (tol 1e-8); spot {spot:.10} vs 1/3");
    if worst < 1e-8 && (spot - 1.0 / 3.0).abs() < 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for &(vqq, var, mean) in &[(0.5, 0.3, 0.0), (0.7, 1.0, 0.3), (1.6, 0.05, -0.4)] {
        let problem = displacement(squeezed_probe(vqq), Prior::Gaussian { mean, variance: var });
        let dq = PhasePolynomial::q() - PhasePolynomial::constant(mean);
        let basis = OperatorBasis::new(vec![PhasePolynomial::one(), dq]).map_err(|e| e.to_string())?;
        let sys = build_system(&problem, &basis).map_err(|e| e.to_string())?;
        let expect_g = [[1.0, 0.0], [0.0, vqq + var]];
        let expect_b = [mean, var];
        for i in 0..2 {
            worst = worst.max((sys.bvec[i] - expect_b[i]).abs());
            for j in 0..2 {
                worst = worst.max((sys.gram[(i, j)] - expect_g[i][j]).abs());
            }
        }
    }
    let detail = format!("max entry error {worst:.2e} over 3 configurations (tol 1e-10)");
    if worst < 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let probes = [("vacuum", GaussianState::vacuum()), ("thermal 0.1", GaussianState::thermal(0.1).unwrap())];
    let vars = [0.01, 0.05, 0.1, 0.3, 1.0];
    let mut worst: f64 = 0.0;
    let mut spot = f64::NAN;
    for (name, probe) in &probes {
        for &var in &vars {
            for phi in [0.0, FRAC_PI_2] {
                let problem = squeezing(probe.clone(), 0.0, var);
                let msl = solve_projected_spm(&problem, &OperatorBasis::quadratic_homodyne(phi))
                    .map_err(|e| e.to_string())?
                    .msl;
                worst = worst.max((msl - homodyne_quadratic_msl(var)).abs());
                if *name == "vacuum" && var == 0.1 && phi == 0.0 {
                    spot = msl;
                }
            }
        }
    }
    // The closed form at 0.1 evaluates to 0.08849073; the quoted 0.0884921
    // sits 1.4e-6 above it, so the spot is held to the closed form and the
    // quoted figure is only reported.
    let spot_target = homodyne_quadratic_msl(0.1);
    let detail = format!(
        "max abs error {worst:.2e} over vacuum/thermal, 5 variances, both angles (tol 1e-8); \
         spot {spot:.8} vs closed form {spot_target:.8}, quoted 0.0884921 differs by {:.1e}",
        (spot - 0.0884921).abs()
    );
    if worst < 1e-8 && (spot - spot_target).abs() < 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    let rotated = GaussianState::new([0.0, 0.0], Covariance::diagonal(1.2, 0.3)).rotated(0.4);
    let probes = [GaussianState::vacuum(), GaussianState::thermal(0.1).unwrap(), rotated];
    let mut worst_msl: f64 = 0.0;
    let mut worst_alpha: f64 = 0.0;
    for probe in &probes {
        for &mean in &[0.0, 0.2] {
            for &var in &[0.05, 0.1, 0.5] {
                let problem = squeezing(probe.clone(), mean, var);
                let spm = solve_projected_spm(&problem, &OperatorBasis::quadratic_qp()).map_err(|e| e.to_string())?;
                worst_msl = worst_msl.max((spm.msl - full_quadratic_msl(&probe.cov, var)).abs());
                let (aq, ap) = full_quadratic_alphas(&probe.cov, mean, var);
                worst_alpha = worst_alpha.max((spm.alpha[1] - aq).abs()).max((spm.alpha[2] - ap).abs());
            }
        }
    }
    let spm = solve_projected_spm(&squeezing(GaussianState::vacuum(), 0.0, 0.1), &OperatorBasis::quadratic_qp())
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "max MSL error {worst_msl:.2e}, max coefficient error {worst_alpha:.2e} (tol 1e-8); spot {:.6} vs 0.084453, q^2 {:.6} p^2 {:.6}",
        spm.msl, spm.alpha[1], spm.alpha[2]
    );
    let spot_ok = (spm.msl - 0.084453).abs() < 5e-7
        && (spm.alpha[1] + 0.063643).abs() < 5e-7
        && (spm.alpha[2] - 0.063643).abs() < 5e-7;
    if worst_msl < 1e-8 && worst_alpha < 1e-8 && spot_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let mut worst_msl: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for &vqq in &[0.5, 1.0] {
        for &var in &[0.1, 0.5, 1.0] {
            let problem = displacement(squeezed_probe(vqq), Prior::Gaussian { mean: 0.3, variance: var });
            let oracle = FockOracle::build(&problem, 60, OracleConfig::default()).map_err(|e| e.to_string())?;
            let spm = solve_projected_spm(&problem, &OperatorBasis::linear_q()).map_err(|e| e.to_string())?;
            let diff = oracle.quantize(&spm.symbol).sub(oracle.spm());
            worst_msl = worst_msl.max((oracle.global_msl() - shrinkage_msl(vqq, var)).abs());
            worst_norm = worst_norm.max(oracle.weighted_norm_sq(&diff));
        }
    }
    let detail = format!(
        "d=60: max |global - closed form| {worst_msl:.2e} (tol 1e-5), max weighted norm {worst_norm:.2e} (tol 1e-6)"
    );
    if worst_msl < 1e-5 && worst_norm < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for &var in &[0.05, 0.1, 0.3] {
        let problem = squeezing(GaussianState::vacuum(), 0.0, var);
        let spm = solve_projected_spm(&problem, &OperatorBasis::quadratic_qp()).map_err(|e| e.to_string())?;
        let oracle = FockOracle::build(&problem, 60, OracleConfig::default()).map_err(|e| e.to_string())?;
        let diff = oracle.quantize(&spm.symbol).sub(oracle.spm());
        let residual = ((spm.msl - oracle.global_msl()) - oracle.weighted_norm_sq(&diff)).abs();
        ok &= residual < 1e-4;
        parts.push(format!("var {var}: {residual:.2e}"));
    }
    let detail = format!(
        "|(msl - global) - excess norm| at d=60: {} (tol 1e-4)",
        parts.join(", ")
    );
    if ok {
        Ok(detail)
    } else {
        // Diagnostic only: the same identity along the truncation ladder.
        let problem = squeezing(GaussianState::vacuum(), 0.0, 0.3);
        let spm = solve_projected_spm(&problem, &OperatorBasis::quadratic_qp()).map_err(|e| e.to_string())?;
        let ladder: Vec<String> = [120, 240, 480]
            .iter()
            .map(|&d| {
                let o = FockOracle::build(&problem, d, OracleConfig::default()).expect("oracle");
                let diff = o.quantize(&spm.symbol).sub(o.spm());
                let r = ((spm.msl - o.global_msl()) - o.weighted_norm_sq(&diff)).abs();
                format!("d={d}: {r:.2e} (deficit {:.1e})", o.trace_deficit)
            })
            .collect();
        Err(format!("{detail}; var 0.3 ladder {}", ladder.join(", ")))
    }
}

fn sweep_config(model: &str, prior: &str, bases: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "seed = 11\nbases = {bases}\n[model]\n{model}\n[prior]\n{prior}\n"
    ))
    .expect("valid sweep config")
}

struct ChainTally {
    worst_slack: f64,
    worst_link: String,
    worst_order: f64,
    missing: Vec<String>,
    points: usize,
    bounded: usize,
}

impl ChainTally {
    fn new() -> Self {
        Self {
            worst_slack: f64::INFINITY,
            worst_link: String::new(),
            worst_order: f64::INFINITY,
            missing: Vec::new(),
            points: 0,
            bounded: 0,
        }
    }

    fn chain(&mut self, row: &SweepRow) {
        let (Some(pert), Some(cons), Some(pm), Some(global)) =
            (row.msl_perturbed, row.msl_constrained, row.msl_pm, row.msl_global_oracle)
        else {
            self.missing.push(format!("{}@{:.3e}: {}", row.basis, row.sigma0_sq, row.errors.join("; ")));
            return;
        };
        self.points += 1;
        if row.errors.iter().any(|e| e.contains("upper bound")) {
            self.bounded += 1;
        }
        for (link, slack) in [("perturbed-constrained", pert - cons), ("constrained-pm", cons - pm), ("pm-global", pm - global)] {
            if slack < self.worst_slack {
                self.worst_slack = slack;
                self.worst_link = format!("{link} at {} {:.3e}", row.basis, row.sigma0_sq);
            }
        }
    }

    /// `smaller ≤ larger` pointwise.
    fn order(&mut self, smaller: &[SweepRow], larger: &[SweepRow], pick: fn(&SweepRow) -> Option<f64>) {
        for (s, l) in smaller.iter().zip(larger) {
            if let (Some(a), Some(b)) = (pick(s), pick(l)) {
                self.worst_order = self.worst_order.min(b - a);
            }
        }
    }
}

fn criterion_7() -> Outcome {
    let mut tally = ChainTally::new();
    let squeezing_probes = ["{ kind = \"vacuum\" }", "{ kind = \"thermal\", nbar = 0.1 }"];
    for probe in squeezing_probes {
        let config = sweep_config(
            &format!("kind = \"squeezing\"\nprobe = {probe}"),
            "kind = \"gaussian\"",
            "[\"quadratic-qp\", \"quadratic-homodyne(auto)\"]",
        );
        let rows = sweep_rows(&config).map_err(|e| e.to_string())?;
        let n = rows.len() / 2;
        rows.iter().for_each(|r| tally.chain(r));
        tally.order(&rows[..n], &rows[n..], |r| r.msl_constrained);
    }
    let config = sweep_config(
        "kind = \"displacement\"\nprobe = { kind = \"coherent\", re = 0.5, im = 0.5 }",
        "kind = \"uniform\"",
        "[\"linear-q\", \"cubic-q\"]",
    );
    let rows = sweep_rows(&config).map_err(|e| e.to_string())?;
    let n = rows.len() / 2;
    rows.iter().for_each(|r| tally.chain(r));
    tally.order(&rows[n..], &rows[..n], |r| r.msl_constrained);
    tally.order(&rows[n..], &rows[..n], |r| r.msl_pm);

    let detail = format!(
        "{} grid points, min chain slack {:.2e} ({}, tol -1e-6), min ordering margin {:.2e}, {} points against a truncated upper bound{}",
        tally.points,
        tally.worst_slack,
        tally.worst_link,
        tally.worst_order,
        tally.bounded,
        if tally.missing.is_empty() {
            String::new()
        } else {
            format!(", missing: {}", tally.missing.join(" | "))
        }
    );
    if tally.missing.is_empty() && tally.worst_slack >= -1e-6 && tally.worst_order >= -1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let coherent = GaussianState::coherent(num_complex::Complex64::new(0.5, 0.5));
    let thermal = GaussianState::thermal(0.1).unwrap();
    let mut cases: Vec<(String, EstimationProblem, OperatorBasis)> = Vec::new();
    for &var in &[0.1, 0.5] {
        cases.push((
            format!("displacement/gaussian {var}"),
            displacement(GaussianState::vacuum(), Prior::Gaussian { mean: 0.2, variance: var }),
            OperatorBasis::linear_q(),
        ));
        for basis in [OperatorBasis::linear_q(), OperatorBasis::cubic_q()] {
            cases.push((
                format!("displacement/uniform {var}"),
                displacement(coherent.clone(), Prior::uniform_from_variance(0.0, var)),
                basis,
            ));
        }
    }
    for probe in [GaussianState::vacuum(), thermal] {
        for &var in &[0.05, 0.1] {
            for basis in [
                OperatorBasis::quadratic_qp(),
                OperatorBasis::quadratic_homodyne(0.0),
                OperatorBasis::quadratic_homodyne(FRAC_PI_2),
            ] {
                cases.push((format!("squeezing {var}"), squeezing(probe.clone(), 0.0, var), basis));
            }
        }
    }
    let mut worst_stat: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    let mut worst_case = String::new();
    for (name, problem, basis) in &cases {
        let spm = solve_projected_spm(problem, basis).map_err(|e| e.to_string())?;
        let stat = stationarity_residuals(problem, &spm)
            .map_err(|e| e.to_string())?
            .iter()
            .fold(0.0f64, |a, r| a.max(r.abs()));
        let run = FockOracle::converged(problem, OracleConfig::default()).map_err(|e| format!("{name}: {e}"))?;
        let o = &run.oracle;
        let diff = o.spm().sub(&o.quantize(&spm.symbol));
        let orth = spm
            .basis
            .elements()
            .iter()
            .map(|b| o.jordan_trace(&diff, &o.quantize(b)).abs())
            .fold(0.0f64, f64::max);
        if orth.max(stat) > worst_orth.max(worst_stat) {
            worst_case = name.clone();
        }
        worst_stat = worst_stat.max(stat);
        worst_orth = worst_orth.max(orth);
    }
    let detail = format!(
        "{} configurations: max stationarity {worst_stat:.2e}, max orthogonality {worst_orth:.2e} (tol 1e-6), worst {worst_case}",
        cases.len()
    );
    if worst_stat < 1e-6 && worst_orth < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Common denominator of the random coefficients (lcm of 1..=8).
const COEFF_DEN: i128 = 840;

/// Random real polynomial of degree ≤ 4 with small rational coefficients,
/// as floats and exactly.
fn random_poly(rng: &mut ChaCha8Rng) -> (PhasePolynomial, ExactPoly) {
    let denominators = [1, 2, 3, 4, 5, 7, 8];
    let mut terms = Vec::new();
    for tot in 0..=4u32 {
        for m in 0..=tot {
            if rng.random_bool(0.6) {
                let num = rng.random_range(-9..=9i128);
                let den = denominators[rng.random_range(0..denominators.len())];
                terms.push(((m, tot - m), num, den));
            }
        }
    }
    let float = PhasePolynomial::from_terms(terms.iter().map(|&(k, n, d)| (k, n as f64 / d as f64)));
    let ints: Vec<_> = terms.iter().map(|&(k, n, d)| (k, n * (COEFF_DEN / d))).collect();
    (float, ExactPoly::from_integers(&ints, COEFF_DEN))
}

fn criterion_9() -> Outcome {
    let q = PhasePolynomial::q();
    let p = PhasePolynomial::p();
    let commutator = moyal_star(&q, &p) - moyal_star(&p, &q);
    let ccr_exact = commutator == PhasePolynomial::constant(num_complex::Complex64::new(0.0, 1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut exact_assoc = true;
    let mut worst_float: f64 = 0.0;
    let mut worst_vs_exact: f64 = 0.0;
    let mut worst_jordan: f64 = 0.0;
    for _ in 0..100 {
        let ((a, ea), (b, eb), (c, ec)) = (random_poly(&mut rng), random_poly(&mut rng), random_poly(&mut rng));
        let left = moyal_star(&moyal_star(&a, &b), &c);
        let right = moyal_star(&a, &moyal_star(&b, &c));
        let exact_left = ea.star(&eb).star(&ec);
        let exact_right = ea.star(&eb.star(&ec));
        exact_assoc &= exact_left == exact_right;
        let scale = exact_left.max_abs().max(1.0);
        worst_float = worst_float.max((&left - &right).terms().fold(0.0f64, |m, (_, v)| m.max(v.norm())) / scale);
        worst_vs_exact = worst_vs_exact
            .max(exact_left.distance(&left) / scale)
            .max(exact_right.distance(&right) / scale);
        worst_jordan = worst_jordan.max(jordan_product(&a, &b).max_imag());
    }
    let detail = format!(
        "commutator exact: {ccr_exact}; exact associativity on 100 triples: {exact_assoc}; \
         float vs exact {worst_vs_exact:.1e}, float associativity {worst_float:.1e} (relative); max Jordan imaginary part {worst_jordan:.1e} (tol 1e-14)"
    );
    if ccr_exact && exact_assoc && worst_vs_exact < 1e-13 && worst_float < 1e-13 && worst_jordan < 1e-14 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_10() -> Outcome {
    let (vqq, var) = (0.5, 0.4);
    let problem = displacement(GaussianState::vacuum(), Prior::Gaussian { mean: 0.1, variance: var });
    let spm = solve_projected_spm(&problem, &OperatorBasis::linear_q()).map_err(|e| e.to_string())?;
    let (phi, coeffs) = spm.single_quadrature().map_err(|e| e.to_string())?;
    let (msl, se) = simulate_single_shot(
        &problem,
        HomodyneMeasurement::new(phi),
        &Estimator::Polynomial(coeffs),
        1_000_000,
        20240601,
    )
    .map_err(|e| e.to_string())?;
    let target = shrinkage_msl(vqq, var);
    let z = (msl - target).abs() / se;
    let detail = format!("1e6 trials: {msl:.6} ± {se:.1e} vs {target:.6}, |z| = {z:.2} (tol 3)");
    if z < 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let results = [
        run(1, "displacement closed form", secs(1), criterion_1),
        run(2, "Gram system anchor", secs(1), criterion_2),
        run(3, "squeezing homodyne closed form", secs(5), criterion_3),
        run(4, "squeezing full-quadratic closed form", secs(5), criterion_4),
        run(5, "oracle equivalence for displacement", secs(60), criterion_5),
        run(6, "excess-MSL identity", secs(120), criterion_6),
        run(7, "inequality chain and curve orderings", secs(600), criterion_7),
        run(8, "stationarity and orthogonality", secs(120), criterion_8),
        run(9, "Moyal algebra", secs(1), criterion_9),
        run(10, "Monte Carlo shrinkage", secs(30), criterion_10),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    log(&format!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len()));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
