use std::path::Path;

use serde_json::{Map, Value};

use photonet_core::distribution::triangle_distribution;
use photonet_core::fitter::{fit_best_of, mix_seed};
use photonet_core::NoiseParams;

use crate::commands::{identity, params_value};
use crate::config::{grid, FitConfig};
use crate::output::{run_sweep, Cell, Report, ResumeState, Table};
use crate::CliError;

pub fn run(cfg: &FitConfig, output: Option<&Path>) -> Result<Report, CliError> {
    let ts = grid(cfg.t_min, cfg.t_max, cfg.t_step)?;
    let phases = [cfg.phases[0], cfg.phases[1], cfg.phases[2]];

    // Transmissivity-major order; the per-point seed is tied to the grid
    // position, so a resumed sweep retrains identically.
    let mut points = Vec::new();
    for &t in &ts {
        for &r in &cfg.visibilities {
            let index = points.len() as u64;
            points.push((format!("t={t:.16e};r={r:.16e}"), (t, r, index)));
        }
    }

    let mut resume = ResumeState::load(output, &identity("fit", cfg));
    let mut table = Table::new(vec!["t", "visibility", "distance", "best_restart"]);
    let mut spreads = Map::new();
    let failures = run_sweep(&mut table, &mut resume, points, |&(t, r, index)| {
        let noise = NoiseParams { werner_visibility: r, ..NoiseParams::ideal() };
        let target =
            triangle_distribution(t, &phases, cfg.variant, &noise).map_err(|e| e.to_string())?;
        let mut training = cfg.training.clone();
        training.seed = mix_seed(cfg.training.seed, index);
        let fit = fit_best_of(&target, &training).map_err(|e| e.to_string())?;
        spreads.insert(
            format!("t={t:.16e};r={r:.16e}"),
            Value::from(fit.per_restart_distances.clone()),
        );
        Ok(vec![
            Cell::Float(t),
            Cell::Float(r),
            Cell::Float(fit.distance),
            Cell::Int(fit.best_restart as i64),
        ])
    })?;

    let mut report = Report::new("fit", params_value(cfg), table);
    report.failures = failures;
    // Restart-by-restart distances; replayed points carry no spread.
    report.extra.insert("per_restart_distances".into(), Value::Object(spreads));
    Ok(report)
}
