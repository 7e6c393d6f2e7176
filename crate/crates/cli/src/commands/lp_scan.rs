use std::path::Path;

use serde_json::{Map, Value};

use photonet_core::certifier::{
    build_triangle_lp, scan_boundary, solve_feasibility, triangle_feasible,
};

use crate::commands::{core_error, identity, params_value};
use crate::config::{grid, LpScanConfig};
use crate::output::{run_sweep, Cell, Report, ResumeState, Table};
use crate::CliError;

pub fn run(cfg: &LpScanConfig, output: Option<&Path>) -> Result<Report, CliError> {
    let ts = grid(cfg.t_min, cfg.t_max, cfg.t_step)?;
    let points: Vec<(String, f64)> =
        ts.iter().map(|&t| (format!("t={t:.16e}"), t)).collect();

    let mut resume = ResumeState::load(output, &identity("lp-scan", cfg));
    let mut table = Table::new(vec!["t", "feasible", "violation", "iterations"]);
    let failures = run_sweep(&mut table, &mut resume, points, |&t| {
        let problem = build_triangle_lp(t).map_err(|e| e.to_string())?;
        let result = solve_feasibility(&problem, cfg.tolerance).map_err(|e| e.to_string())?;
        Ok(vec![
            Cell::Float(t),
            Cell::Bool(result.feasible),
            Cell::Float(result.violation),
            Cell::Int(result.iterations as i64),
        ])
    })?;

    let mut report = Report::new("lp-scan", params_value(cfg), table);
    report.failures = failures;

    // Certificates are cheap; recompute them for the export rather than
    // persisting vectors in the sidecar.
    let mut certificates = Map::new();
    for &t in &ts {
        let problem = build_triangle_lp(t).map_err(core_error)?;
        let result = solve_feasibility(&problem, cfg.tolerance).map_err(core_error)?;
        certificates.insert(
            format!("t={t:.16e}"),
            serde_json::to_value(&result).map_err(|e| CliError::Runtime(e.to_string()))?,
        );
    }
    report.extra.insert("certificates".into(), Value::Object(certificates));

    if cfg.t_max > cfg.t_min {
        let boundary = scan_boundary(
            |t| triangle_feasible(t, cfg.tolerance),
            cfg.t_min,
            cfg.t_max,
            cfg.boundary_precision,
        )
        .map_err(core_error)?;
        for bracket in &boundary.brackets {
            report.notes.push((
                "boundary".into(),
                format!(
                    "({:.16e}, {:.16e}) lower_feasible={}",
                    bracket.lower, bracket.upper, bracket.lower_feasible
                ),
            ));
        }
        report.extra.insert(
            "boundary".into(),
            serde_json::to_value(&boundary).map_err(|e| CliError::Runtime(e.to_string()))?,
        );
    }
    Ok(report)
}
