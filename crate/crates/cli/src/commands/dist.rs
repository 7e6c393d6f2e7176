use photonet_core::distribution::triangle_distribution;

use crate::commands::{core_error, params_value};
use crate::config::DistConfig;
use crate::output::{Cell, Report, Table};
use crate::CliError;

pub fn run(cfg: &DistConfig) -> Result<Report, CliError> {
    let phases = [cfg.phases[0], cfg.phases[1], cfg.phases[2]];
    let dist =
        triangle_distribution(cfg.t, &phases, cfg.variant, &cfg.noise).map_err(core_error)?;

    let mut table = Table::new(vec!["outcome", "probability"]);
    for (outcome, probability) in dist.iter() {
        table.push(vec![Cell::Text(outcome), Cell::Float(probability)]);
    }

    let mut report = Report::new("dist", params_value(cfg), table);
    // The full structured distribution, for lossless re-parsing.
    report.extra.insert(
        "distribution".into(),
        serde_json::to_value(&dist).map_err(|e| CliError::Runtime(e.to_string()))?,
    );
    Ok(report)
}
