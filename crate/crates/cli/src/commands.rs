//! The `solve`, `sweep`, `oracle` and `verify` commands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spm_core::fock::{fit_wigner_ratio, write_operator, FitGrid, OracleRun};
use spm_core::homodyne::{pm_msl_homodyne, relative_msl, simulate_single_shot};
use spm_core::solver::{msl_of_coefficients, solve_projected_spm, stationarity_residuals_for};
use spm_core::{
    EstimationProblem, Estimator, FockOracle, HomodyneMeasurement, OperatorBasis, PhasePolynomial, ProjectedSpm,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::{format_number, Report};

/// Text written by a command, plus the failure that sets the exit code.
#[derive(Debug)]
pub struct Outcome {
    pub body: String,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(body: String) -> Self {
        Self { body, failure: None }
    }
}

/// How the posterior-mean MSL of a projected operator is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PmRoute {
    /// The operator is a constant; no measurement is needed.
    Trivial,
    /// Homodyne detection at the angle of the single-quadrature operator.
    Homodyne(f64),
    /// Spectral measurement of the operator on the truncated Fock space.
    FockPvm,
}

pub fn pm_route(spm: &ProjectedSpm) -> PmRoute {
    if spm.symbol.degree().unwrap_or(0) == 0 {
        return PmRoute::Trivial;
    }
    match spm.single_quadrature() {
        Ok((phi, _)) => PmRoute::Homodyne(phi),
        Err(_) => PmRoute::FockPvm,
    }
}

/// Posterior-mean MSL along `route`; the Fock route needs an oracle.
pub fn pm_msl(
    problem: &EstimationProblem,
    spm: &ProjectedSpm,
    route: PmRoute,
    oracle: Option<&FockOracle>,
) -> Result<f64, spm_core::Error> {
    match route {
        PmRoute::Trivial => Ok(spm.msl),
        PmRoute::Homodyne(phi) => pm_msl_homodyne(problem, phi),
        PmRoute::FockPvm => {
            let oracle = oracle.ok_or_else(|| {
                spm_core::Error::InvalidParameter("the Fock-space PVM needs a converged oracle".into())
            })?;
            Ok(oracle.pm_msl_of(&oracle.quantize(&spm.symbol)))
        }
    }
}

/// Coefficients moved by `scale·(1 + |αᵢ|)·uᵢ`, `uᵢ` uniform in `[−1, 1]`.
pub fn perturbed_alpha(alpha: &[f64], scale: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    alpha
        .iter()
        .map(|&a| a + scale * (1.0 + a.abs()) * rng.random_range(-1.0..=1.0))
        .collect()
}

/// One CSV row of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub basis: String,
    pub sigma0_sq: f64,
    pub msl_constrained: Option<f64>,
    pub msl_pm: Option<f64>,
    pub msl_global_oracle: Option<f64>,
    pub rel_constrained: Option<f64>,
    pub rel_pm: Option<f64>,
    pub rel_prior: Option<f64>,
    /// MSL of randomly perturbed coefficients; not written to the CSV.
    pub msl_perturbed: Option<f64>,
    pub pm_route: Option<PmRoute>,
    pub errors: Vec<String>,
}

pub const CSV_HEADER: &str =
    "basis,sigma0_sq,msl_constrained,msl_pm,msl_global_oracle,rel_constrained,rel_pm,rel_prior,errors";

impl SweepRow {
    fn empty(basis: String, sigma0_sq: f64) -> Self {
        Self {
            basis,
            sigma0_sq,
            msl_constrained: None,
            msl_pm: None,
            msl_global_oracle: None,
            rel_constrained: None,
            rel_pm: None,
            rel_prior: None,
            msl_perturbed: None,
            pm_route: None,
            errors: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), format_number);
        let errors = self.errors.join("; ").replace('"', "'");
        format!(
            "{},{},{},{},{},{},{},{},\"{}\"",
            csv_field(&self.basis),
            format_number(self.sigma0_sq),
            num(self.msl_constrained),
            num(self.msl_pm),
            num(self.msl_global_oracle),
            num(self.rel_constrained),
            num(self.rel_pm),
            num(self.rel_prior),
            errors
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// All bases at one prior variance, sharing one oracle run.
pub fn sweep_point(config: &ExperimentConfig, index: usize, variance: f64) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = config
        .bases
        .iter()
        .map(|b| SweepRow::empty(b.name(), variance))
        .collect();
    let problem = match config.problem(variance) {
        Ok(p) => p,
        Err(e) => {
            rows.iter_mut().for_each(|r| r.errors.push(e.to_string()));
            return rows;
        }
    };
    let run = FockOracle::ladder(&problem, config.oracle_config());
    let (oracle, global, oracle_note) = match &run {
        Ok(run) => {
            let note = (!run.converged).then(|| {
                format!(
                    "oracle not converged (d={}, last change {:.3e}); global value is an upper bound",
                    run.oracle.dim,
                    run.last_change()
                )
            });
            (Some(&run.oracle), Some(run.oracle.global_msl()), note)
        }
        Err(e) => (None, None, Some(format!("oracle: {e}"))),
    };
    let prior_loss = problem.prior_loss();
    for (k, (spec, row)) in config.bases.iter().zip(rows.iter_mut()).enumerate() {
        row.msl_global_oracle = global;
        if let Some(note) = &oracle_note {
            row.errors.push(note.clone());
        }
        match spec.solve(&problem) {
            Ok(spm) => {
                row.msl_constrained = Some(spm.msl);
                let stream = (index * config.bases.len() + k) as u64;
                let alpha = perturbed_alpha(spm.alpha.as_slice(), config.verify.perturbation, config.seed, stream);
                match msl_of_coefficients(&problem, &spm.basis, &alpha) {
                    Ok(v) => row.msl_perturbed = Some(v),
                    Err(e) => row.errors.push(format!("perturbed: {e}")),
                }
                let route = pm_route(&spm);
                row.pm_route = Some(route);
                match pm_msl(&problem, &spm, route, oracle) {
                    Ok(v) => row.msl_pm = Some(v),
                    Err(e) => row.errors.push(format!("pm: {e}")),
                }
            }
            Err(e) => row.errors.push(format!("constrained: {e}")),
        }
        match &prior_loss {
            Ok(v) => row.rel_prior = relative(*v, global, &mut row.errors),
            Err(e) => row.errors.push(format!("prior loss: {e}")),
        }
        row.rel_constrained = row.msl_constrained.and_then(|v| relative(v, global, &mut row.errors));
        row.rel_pm = row.msl_pm.and_then(|v| relative(v, global, &mut row.errors));
        row.errors.dedup();
    }
    rows
}

fn relative(value: f64, global: Option<f64>, errors: &mut Vec<String>) -> Option<f64> {
    let global = global?;
    match relative_msl(value, global) {
        Ok(r) => Some(r),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    }
}

/// Rows for the whole grid, sorted by basis order then ascending variance.
pub fn sweep_rows(config: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let grid = config.sweep_grid()?;
    let points: Vec<Vec<SweepRow>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &v)| sweep_point(config, i, v))
        .collect();
    let nb = config.bases.len();
    let mut rows = Vec::with_capacity(nb * grid.len());
    for b in 0..nb {
        rows.extend(points.iter().map(|p| p[b].clone()));
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let rows = sweep_rows(config)?;
    Ok(Outcome::ok(sweep_csv(&rows)))
}

fn push_solution(report: &mut Report, prefix: &str, spm: &ProjectedSpm) {
    for (k, (b, a)) in spm.basis.elements().iter().zip(spm.alpha.iter()).enumerate() {
        report.text(format!("{prefix}.element.{k}"), b);
        report.number(format!("{prefix}.alpha.{k}"), *a);
    }
    report.text(format!("{prefix}.identity_added"), spm.augmented);
    report.text(format!("{prefix}.symbol"), &spm.symbol);
    report.number(format!("{prefix}.lambda"), spm.lambda);
    report.number(format!("{prefix}.msl_constrained"), spm.msl);
    report.number(format!("{prefix}.gram_condition"), spm.gram_condition());
    report.text(format!("{prefix}.rank"), spm.rank);
    if let Ok((phi, coeffs)) = spm.single_quadrature() {
        report.number(format!("{prefix}.homodyne_angle"), phi);
        let text: Vec<String> = coeffs.iter().map(|c| format_number(*c)).collect();
        report.text(format!("{prefix}.estimator_coefficients"), text.join(" "));
    }
}

pub fn cmd_solve(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let problem = config.single_problem()?;
    let mut report = Report::new();
    report.text("command", "solve");
    report.number("sigma0_sq", problem.prior.variance());
    report.number("prior_loss", problem.prior_loss()?);
    for spec in &config.bases {
        let spm = spec.solve(&problem)?;
        push_solution(&mut report, &format!("basis.{}", spec.name()), &spm);
    }
    Ok(Outcome::ok(report.to_string()))
}

fn push_oracle(report: &mut Report, run: &OracleRun) {
    let o = &run.oracle;
    for (d, v, deficit) in &run.history {
        report.number(format!("oracle.history.{d}.global_msl"), *v);
        report.number(format!("oracle.history.{d}.trace_deficit"), *deficit);
    }
    report.text("oracle.converged", run.converged);
    report.text("oracle.dim", o.dim);
    report.number("oracle.global_msl", o.global_msl());
    report.number("oracle.trace_deficit", o.trace_deficit);
    report.number("oracle.lyapunov_residual", o.lyapunov.residual);
    report.text("oracle.lyapunov_retained", o.lyapunov.retained);
    report.text("oracle.theta_nodes", o.theta_nodes);
    if let Some(c) = run.quadrature_change {
        report.number("oracle.quadrature_change", c);
    }
}

pub fn cmd_oracle(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let problem = config.single_problem()?;
    let run = FockOracle::ladder(&problem, config.oracle_config())?;
    let o = &run.oracle;
    let mut report = Report::new();
    report.text("command", "oracle");
    report.number("sigma0_sq", problem.prior.variance());
    push_oracle(&mut report, &run);
    for spec in &config.bases {
        let prefix = format!("basis.{}", spec.name());
        let spm = spec.solve(&problem)?;
        let sv = o.quantize(&spm.symbol);
        report.number(format!("{prefix}.msl_constrained"), spm.msl);
        report.number(format!("{prefix}.msl_fock"), o.msl_of_operator(&sv));
        report.number(format!("{prefix}.excess_norm_sq"), o.weighted_norm_sq(&sv.sub(o.spm())));
        report.number(format!("{prefix}.msl_pm_fock_pvm"), o.pm_msl_of(&sv));
    }
    if let Some(path) = &config.oracle.dump {
        write_operator(path, o.spm())?;
        report.text("oracle.dump", path.display());
    }
    let failure = (!run.converged).then(|| {
        CliError::Numerical(spm_core::Error::OracleNotConverged {
            reason: format!("no convergence up to d={}", config.oracle.max_dim),
            dim: o.dim,
            last_value: o.global_msl(),
            last_change: run.quadrature_change.unwrap_or_else(|| run.last_change()),
        })
    });
    Ok(Outcome {
        body: report.to_string(),
        failure,
    })
}

/// Outcome of one verification check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

fn check(checks: &mut Vec<Check>, name: String, value: f64, threshold: f64, passed: bool) {
    checks.push(Check {
        name,
        passed,
        value,
        threshold,
    });
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Weyl symbols `qᵃpᵇ` with `a + b ≤ degree`.
fn full_polynomial_basis(degree: u32) -> OperatorBasis {
    let elements = (0..=degree)
        .flat_map(|tot| (0..=tot).map(move |a| PhasePolynomial::monomial(a, tot - a, 1.0)))
        .collect();
    OperatorBasis::new(elements).expect("monomials are real")
}

/// Runs the invariant battery on the configured problem.
pub fn verify_checks(config: &ExperimentConfig) -> Result<(Vec<Check>, Report), CliError> {
    let problem = config.single_problem()?;
    let v = &config.verify;
    let run = FockOracle::ladder(&problem, config.oracle_config())?;
    let o = &run.oracle;
    let global = o.global_msl();
    let mut report = Report::new();
    let mut checks = Vec::new();
    report.text("command", "verify");
    report.number("sigma0_sq", problem.prior.variance());
    push_oracle(&mut report, &run);
    if !run.converged {
        report.text(
            "oracle.note",
            "truncated global MSL is an upper bound; identity and orthogonality checks carry truncation error",
        );
    }

    for (k, spec) in config.bases.iter().enumerate() {
        let name = spec.name();
        let spm = spec.solve(&problem)?;
        let alpha = spm.alpha.as_slice().to_vec();
        let perturbed = perturbed_alpha(&alpha, v.perturbation, config.seed, k as u64);

        let tested = if v.inject_perturbation { &perturbed } else { &alpha };
        let symbol = spm.basis.combine(tested);
        let stat = max_abs(&stationarity_residuals_for(&problem, &spm.basis, &symbol)?);
        check(&mut checks, format!("{name}.stationarity"), stat, v.residual_tol, stat < v.residual_tol);

        let perturbed_symbol = spm.basis.combine(&perturbed);
        let control = max_abs(&stationarity_residuals_for(&problem, &spm.basis, &perturbed_symbol)?);
        check(
            &mut checks,
            format!("{name}.negative_control_detected"),
            control,
            v.residual_tol,
            control > v.residual_tol,
        );

        let sv = o.quantize(&spm.symbol);
        let diff = o.spm().sub(&sv);
        let ortho = spm
            .basis
            .elements()
            .iter()
            .map(|b| o.jordan_trace(&diff, &o.quantize(b)).abs())
            .fold(0.0f64, f64::max);
        check(&mut checks, format!("{name}.orthogonality"), ortho, v.residual_tol, ortho < v.residual_tol);

        let excess = o.weighted_norm_sq(&diff);
        let identity = ((spm.msl - global) - excess).abs();
        check(&mut checks, format!("{name}.excess_identity"), identity, v.identity_tol, identity < v.identity_tol);

        let msl_perturbed = msl_of_coefficients(&problem, &spm.basis, &perturbed)?;
        let route = pm_route(&spm);
        let pm = pm_msl(&problem, &spm, route, Some(o))?;
        let links = [
            ("perturbed_ge_constrained", msl_perturbed - spm.msl),
            ("constrained_ge_pm", spm.msl - pm),
            ("pm_ge_global", pm - global),
        ];
        for (label, slack) in links {
            check(&mut checks, format!("{name}.chain.{label}"), slack, -v.chain_slack, slack >= -v.chain_slack);
        }
        report.number(format!("basis.{name}.msl_constrained"), spm.msl);
        report.number(format!("basis.{name}.msl_pm"), pm);
        report.number(format!("basis.{name}.msl_perturbed"), msl_perturbed);
        report.number(format!("basis.{name}.excess_norm_sq"), excess);

        if let PmRoute::Homodyne(phi) = route {
            let (_, coeffs) = spm.single_quadrature()?;
            let trials = v.mc_trials;
            let (mc, se) = simulate_single_shot(
                &problem,
                HomodyneMeasurement::new(phi),
                &Estimator::Polynomial(coeffs),
                trials,
                config.seed,
            )?;
            let z = if se > 0.0 { (mc - spm.msl).abs() / se } else { (mc - spm.msl).abs() };
            report.number(format!("basis.{name}.monte_carlo_msl"), mc);
            report.number(format!("basis.{name}.monte_carlo_stderr"), se);
            check(&mut checks, format!("{name}.monte_carlo_z"), z, 4.0, z < 4.0);
        }
    }

    let fit = fit_wigner_ratio(&problem, v.fit_degree, FitGrid::default())?;
    for (deg, r) in fit.residuals.iter().enumerate() {
        report.number(format!("wigner_ratio.fit_residual.{deg}"), *r);
    }
    match fit.exact_degree(v.fit_tol) {
        Some(deg) => {
            report.text("wigner_ratio.exact_degree", deg);
            let full = solve_projected_spm(&problem, &full_polynomial_basis(deg as u32))?;
            let gap = (full.msl - global).abs();
            check(
                &mut checks,
                format!("wigner_ratio.degree_{deg}_basis_attains_global"),
                gap,
                v.identity_tol,
                gap < v.identity_tol,
            );
        }
        None => report.text("wigner_ratio.exact_degree", "none"),
    }
    Ok((checks, report))
}

pub fn cmd_verify(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (checks, mut report) = verify_checks(config)?;
    let mut failures = Vec::new();
    for c in &checks {
        let status = if c.passed { "pass" } else { "fail" };
        report.text(
            format!("check.{}", c.name),
            format!("{status} value={} threshold={}", format_number(c.value), format_number(c.threshold)),
        );
        if !c.passed {
            failures.push(format!("{} = {:.3e}", c.name, c.value));
        }
    }
    report.text("checks.failed", failures.len());
    let failure = (!failures.is_empty()).then_some(CliError::Verification(failures));
    Ok(Outcome {
        body: report.to_string(),
        failure,
    })
}
