use photonet_core::optics::{heralding_impurity, repetition_rate};

use crate::commands::{core_error, params_value};
use crate::config::HeraldConfig;
use crate::output::{Cell, Report, Table};
use crate::CliError;

pub fn run(cfg: &HeraldConfig) -> Result<Report, CliError> {
    let number_resolved = heralding_impurity(&cfg.spec, true).map_err(core_error)?;
    let threshold = heralding_impurity(&cfg.spec, false).map_err(core_error)?;
    let rate = repetition_rate(&cfg.spec).map_err(core_error)?;

    let mut table = Table::new(vec!["quantity", "value"]);
    table.push(vec![
        Cell::Text("impurity_number_resolved".into()),
        Cell::Float(number_resolved),
    ]);
    table.push(vec![Cell::Text("impurity_threshold".into()), Cell::Float(threshold)]);
    table.push(vec![Cell::Text("repetition_rate_hz".into()), Cell::Float(rate)]);

    Ok(Report::new("herald", params_value(cfg), table))
}
