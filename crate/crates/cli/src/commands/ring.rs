use std::path::Path;

use serde_json::{Map, Value};

use photonet_core::certifier::{build_ring_lp, solve_feasibility};
use photonet_core::distribution::ring_distribution;
use photonet_core::NoiseParams;

use crate::commands::{core_error, identity, params_value};
use crate::config::{grid, RingConfig};
use crate::output::{run_sweep, Cell, Report, ResumeState, Table};
use crate::CliError;

pub fn run(cfg: &RingConfig, output: Option<&Path>) -> Result<Report, CliError> {
    match cfg.t {
        Some(t) => distributions(cfg, t),
        None => verdicts(cfg, output),
    }
}

/// Emits the full outcome distribution of each requested ring size.
fn distributions(cfg: &RingConfig, t: f64) -> Result<Report, CliError> {
    let mut table = Table::new(vec!["parties", "outcome", "probability"]);
    let mut raw = Map::new();
    for &n in &cfg.parties {
        let phases = vec![0.0; n];
        let dist = ring_distribution(n, t, &phases, cfg.variant, &NoiseParams::ideal())
            .map_err(core_error)?;
        for (outcome, probability) in dist.iter() {
            table.push(vec![
                Cell::Int(n as i64),
                Cell::Text(outcome),
                Cell::Float(probability),
            ]);
        }
        raw.insert(
            n.to_string(),
            serde_json::to_value(&dist).map_err(|e| CliError::Runtime(e.to_string()))?,
        );
    }
    let mut report = Report::new("ring", params_value(cfg), table);
    report.extra.insert("distributions".into(), Value::Object(raw));
    Ok(report)
}

/// Scans source-local feasibility over ring size and transmissivity.
fn verdicts(cfg: &RingConfig, output: Option<&Path>) -> Result<Report, CliError> {
    let ts = grid(cfg.t_min, cfg.t_max, cfg.t_step)?;
    let mut points = Vec::new();
    for &n in &cfg.parties {
        for &t in &ts {
            points.push((format!("n={n};t={t:.16e}"), (n, t)));
        }
    }

    let mut resume = ResumeState::load(output, &identity("ring", cfg));
    let mut table = Table::new(vec!["parties", "t", "feasible", "violation", "iterations"]);
    let failures = run_sweep(&mut table, &mut resume, points, |&(n, t)| {
        let phases = vec![0.0; n];
        let dist = ring_distribution(n, t, &phases, cfg.variant, &NoiseParams::ideal())
            .map_err(|e| e.to_string())?;
        let problem = build_ring_lp(n, t, &dist).map_err(|e| e.to_string())?;
        let result = solve_feasibility(&problem, cfg.tolerance).map_err(|e| e.to_string())?;
        Ok(vec![
            Cell::Int(n as i64),
            Cell::Float(t),
            Cell::Bool(result.feasible),
            Cell::Float(result.violation),
            Cell::Int(result.iterations as i64),
        ])
    })?;

    let mut report = Report::new("ring", params_value(cfg), table);
    report.failures = failures;
    Ok(report)
}
