use std::path::Path;

use photonet_core::distribution::triangle_distribution;
use photonet_core::fitter::{fit_best_of, mix_seed};
use photonet_core::{NoiseParams, PovmVariant};

use crate::commands::{identity, params_value};
use crate::config::{grid, NoiseSweepConfig};
use crate::output::{run_sweep, Cell, Report, ResumeState, Table};
use crate::CliError;

pub fn run(cfg: &NoiseSweepConfig, output: Option<&Path>) -> Result<Report, CliError> {
    let values = grid(cfg.grid_min, cfg.grid_max, cfg.grid_step)?;
    let phases = [cfg.phases[0], cfg.phases[1], cfg.phases[2]];

    // Transmission-major order over the (loss, detector efficiency) grid.
    let mut points = Vec::new();
    for &transmissivity in &values {
        for &efficiency in &values {
            let index = points.len() as u64;
            points.push((
                format!("T={transmissivity:.16e};nu={efficiency:.16e}"),
                (transmissivity, efficiency, index),
            ));
        }
    }

    let mut resume = ResumeState::load(output, &identity("noise-sweep", cfg));
    let mut table =
        Table::new(vec!["transmissivity", "efficiency", "distance", "best_restart"]);
    let failures =
        run_sweep(&mut table, &mut resume, points, |&(transmissivity, efficiency, index)| {
            let noise = NoiseParams {
                impurity: cfg.impurity,
                transmissivity,
                detector_efficiency: efficiency,
                werner_visibility: cfg.werner_visibility,
                fidelity: cfg.fidelity,
            };
            let target = triangle_distribution(cfg.t, &phases, PovmVariant::Passive, &noise)
                .map_err(|e| e.to_string())?;
            let mut training = cfg.training.clone();
            training.seed = mix_seed(cfg.training.seed, index);
            let fit = fit_best_of(&target, &training).map_err(|e| e.to_string())?;
            Ok(vec![
                Cell::Float(transmissivity),
                Cell::Float(efficiency),
                Cell::Float(fit.distance),
                Cell::Int(fit.best_restart as i64),
            ])
        })?;

    let mut report = Report::new("noise-sweep", params_value(cfg), table);
    report.failures = failures;
    Ok(report)
}
