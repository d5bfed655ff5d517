//! Oracle suites by id.

use crate::config::{ConfigError, Settings};
use softboltz::collision::CollisionOperator;
use softboltz::distribution::{random_mixture, VelocityGrid};
use softboltz::oracles::{self, OracleReport};
use std::sync::Arc;

pub const SUITES: [&str; 8] = ["elementary", "delta_phi", "povzner", "entropic", "isotropic", "gronwall", "villani", "lemma22"];

/// Operator on the coarse grid of the dissipation suites.
fn oracle_operator(s: &Settings) -> Result<CollisionOperator, ConfigError> {
    let mut c = s.sim()?;
    c.points_per_axis = s.oracle_points;
    let grid = Arc::new(VelocityGrid::new(c.dim, c.points_per_axis, c.extent).map_err(ConfigError::Core)?);
    CollisionOperator::new(grid, c.kernel, c.quadrature).map_err(ConfigError::Core)
}

/// Runs one suite. Configuration problems are `Err`; a numerical failure
/// inside a suite is a failed report.
pub fn run_suite(id: &str, s: &Settings) -> Result<OracleReport, ConfigError> {
    let failed = |e: softboltz::Error| OracleReport {
        id: id.to_string(),
        samples: 0,
        skipped: 0,
        worst_margin: f64::NAN,
        violations: 1,
        seed: s.seed,
        pass: false,
        inconclusive: false,
        notes: vec![format!("suite error: {e}")],
    };
    let n = s.samples;
    let seed = s.seed;
    Ok(match id {
        "elementary" => oracles::check_elementary_ineqs(n, seed),
        "delta_phi" => oracles::check_delta_phi_bounds(n, seed),
        "povzner" => oracles::check_povzner(n, seed).unwrap_or_else(failed),
        "entropic" => oracles::check_entropic_pointwise(n, seed),
        "isotropic" => oracles::check_isotropic_convolution(s.cases, seed),
        "gronwall" => oracles::check_gronwall(s.ode_cases, seed),
        "villani" => {
            let op = oracle_operator(s)?;
            let fields: Result<Vec<_>, _> = (0..s.fields).map(|i| random_mixture(&op.grid, seed, i as u64)).collect();
            match fields {
                Ok(f) => oracles::check_villani(&op, &f).unwrap_or_else(failed),
                Err(e) => failed(e),
            }
        }
        "lemma22" => {
            let op = oracle_operator(s)?;
            let fields = oracles::perturbed_maxwellians(s.dim, s.fields, seed);
            match oracles::check_lemma22_integral(&op, s.lemma22_m, &fields) {
                Ok(r) => r,
                Err(softboltz::Error::InvalidInput(m)) => {
                    return Err(ConfigError::Invalid { key: "experiment.lemma22_m".into(), message: m })
                }
                Err(e) => failed(e),
            }
        }
        other => {
            return Err(ConfigError::Invalid {
                key: "--suite".into(),
                message: format!("unknown suite {other:?}; expected all or one of {}", SUITES.join(", ")),
            })
        }
    })
}
