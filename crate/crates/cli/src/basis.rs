//! Operator-basis specifications: named presets or explicit symbols.

use std::f64::consts::PI;

use serde::Deserialize;
use spm_core::solver::{optimize_homodyne_angle, solve_projected_spm};
use spm_core::{EstimationProblem, OperatorBasis, PhasePolynomial, ProjectedSpm};

use crate::error::CliError;

/// Either a preset name (`"linear-q"`, `"cubic-q"`, `"quadratic-qp"`,
/// `"quadratic-homodyne(<angle>|auto)"`) or an explicit list of symbols.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BasisSpec {
    Preset(String),
    Explicit {
        name: String,
        elements: Vec<String>,
    },
}

/// Basis with the homodyne angle left open when it is to be optimised.
#[derive(Clone, Debug)]
pub enum ResolvedBasis {
    Fixed(OperatorBasis),
    HomodyneAuto,
}

impl BasisSpec {
    pub fn name(&self) -> String {
        match self {
            BasisSpec::Preset(s) => s.trim().to_string(),
            BasisSpec::Explicit { name, .. } => name.clone(),
        }
    }

    /// Parses the basis description without reference to a problem.
    pub fn resolve_static(&self) -> Result<ResolvedBasis, CliError> {
        match self {
            BasisSpec::Preset(s) => parse_preset(s.trim()),
            BasisSpec::Explicit { name, elements } => {
                let polys = elements
                    .iter()
                    .map(|e| {
                        e.parse::<PhasePolynomial>()
                            .map_err(|err| CliError::Config(format!("basis {name}: element {e:?}: {err}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                OperatorBasis::new(polys)
                    .map(ResolvedBasis::Fixed)
                    .map_err(|err| CliError::Config(format!("basis {name}: {err}")))
            }
        }
    }

    /// Solves the constrained problem; the homodyne angle is optimised when requested.
    pub fn solve(&self, problem: &EstimationProblem) -> Result<ProjectedSpm, spm_core::Error> {
        match self.resolve_static() {
            Ok(ResolvedBasis::Fixed(basis)) => solve_projected_spm(problem, &basis),
            Ok(ResolvedBasis::HomodyneAuto) => optimize_homodyne_angle(problem).map(|(_, spm)| spm),
            Err(e) => Err(spm_core::Error::InvalidParameter(e.to_string())),
        }
    }
}

fn parse_preset(s: &str) -> Result<ResolvedBasis, CliError> {
    match s {
        "linear-q" => return Ok(ResolvedBasis::Fixed(OperatorBasis::linear_q())),
        "cubic-q" => return Ok(ResolvedBasis::Fixed(OperatorBasis::cubic_q())),
        "quadratic-qp" => return Ok(ResolvedBasis::Fixed(OperatorBasis::quadratic_qp())),
        _ => {}
    }
    let arg = s
        .strip_prefix("quadratic-homodyne(")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| CliError::Config(format!("unknown basis preset {s:?}")))?
        .trim();
    if arg == "auto" {
        return Ok(ResolvedBasis::HomodyneAuto);
    }
    let phi = parse_angle(arg).ok_or_else(|| CliError::Config(format!("bad homodyne angle {arg:?} in {s:?}")))?;
    Ok(ResolvedBasis::Fixed(OperatorBasis::quadratic_homodyne(phi)))
}

/// A number, or a multiple of `pi` such as `pi/2` or `0.25*pi`.
fn parse_angle(s: &str) -> Option<f64> {
    let s = s.replace(' ', "");
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let (factor, rest) = match s.split_once("pi") {
        Some((pre, post)) => {
            let f = match pre.trim_end_matches('*') {
                "" => 1.0,
                "-" => -1.0,
                num => num.parse::<f64>().ok()?,
            };
            (f, post)
        }
        None => return None,
    };
    let divisor = match rest {
        "" => 1.0,
        r => r.strip_prefix('/')?.parse::<f64>().ok()?,
    };
    Some(factor * PI / divisor)
}
