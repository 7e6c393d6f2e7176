//! `photonet`: simulate and certify single-photon network experiments.
//!
//! Each subcommand resolves its parameters from defaults, an optional JSON
//! config file, and command-line overrides, then writes a provenance-stamped
//! table.  `photonet run --config job.json` executes a job description that
//! names the command itself.
//!
//! Exit codes: 0 on success, 2 on a validation error, 3 when some grid
//! points of a sweep failed (completed points are still written, failures
//! are listed in the output and the resume sidecar allows a retry).

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use photonet_core::{ChannelFidelity, NoiseParams, PovmVariant};

use config::{
    load_config, DistConfig, FitConfig, HeraldConfig, LpScanConfig, NoiseSweepConfig,
    RingConfig, RunConfig,
};
use output::Format;

#[derive(Debug)]
pub enum CliError {
    /// Rejected before any computation started; exit code 2.
    Validation(String),
    /// Failed while computing or writing results; exit code 1.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(name = "photonet", version, about = "Photonic network nonlocality toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a triangle outcome distribution.
    Dist(DistArgs),
    /// Scan triangle local-model feasibility over a transmissivity grid and
    /// bracket the feasibility boundaries.
    LpScan(LpScanArgs),
    /// Train local response models against triangle targets over a
    /// transmissivity and visibility grid.
    Fit(FitArgs),
    /// Train local models at fixed transmissivity over a loss and detector
    /// efficiency grid.
    NoiseSweep(NoiseSweepArgs),
    /// Ring networks: outcome distributions or feasibility verdicts.
    Ring(RingArgs),
    /// Heralding impurity and repetition rate for a source specification.
    Herald(HeraldArgs),
    /// Execute a job description file containing command and parameters.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Passive,
    Projective,
    NumberResolved,
}

impl From<VariantArg> for PovmVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Passive => PovmVariant::Passive,
            VariantArg::Projective => PovmVariant::Projective,
            VariantArg::NumberResolved => PovmVariant::NumberResolved,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FidelityArg {
    Exact,
    FirstOrder,
}

impl From<FidelityArg> for ChannelFidelity {
    fn from(v: FidelityArg) -> Self {
        match v {
            FidelityArg::Exact => ChannelFidelity::Exact,
            FidelityArg::FirstOrder => ChannelFidelity::FirstOrder,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// JSON file with this command's parameters; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted (disables resume checkpoints).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args)]
struct NoiseArgs {
    /// Double-excitation impurity of each source.
    #[arg(long)]
    impurity: Option<f64>,
    /// Transmissivity of each source-to-detector channel.
    #[arg(long)]
    transmissivity: Option<f64>,
    /// Efficiency of each detector.
    #[arg(long)]
    detector_efficiency: Option<f64>,
    /// Werner visibility of each source.
    #[arg(long)]
    werner_visibility: Option<f64>,
    /// Channel model: exact Kraus operators or first-order truncation.
    #[arg(long, value_enum)]
    fidelity: Option<FidelityArg>,
}

impl NoiseArgs {
    fn apply(&self, noise: &mut NoiseParams) {
        if let Some(v) = self.impurity {
            noise.impurity = v;
        }
        if let Some(v) = self.transmissivity {
            noise.transmissivity = v;
        }
        if let Some(v) = self.detector_efficiency {
            noise.detector_efficiency = v;
        }
        if let Some(v) = self.werner_visibility {
            noise.werner_visibility = v;
        }
        if let Some(v) = self.fidelity {
            noise.fidelity = v.into();
        }
    }
}

#[derive(Args)]
struct TrainingArgs {
    /// Hidden-variable samples per gradient step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Gradient steps per restart.
    #[arg(long)]
    steps: Option<usize>,
    /// Independent restarts per grid point.
    #[arg(long)]
    restarts: Option<usize>,
    /// Samples for the final distance estimate.
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Step-size decay factor applied at each third of the run.
    #[arg(long)]
    decay: Option<f64>,
    /// Width of each hidden layer.
    #[arg(long)]
    hidden_width: Option<usize>,
    /// Base seed for initializations and sampling.
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainingArgs {
    fn apply(&self, training: &mut photonet_core::TrainingConfig) {
        if let Some(v) = self.batch_size {
            training.batch_size = v;
        }
        if let Some(v) = self.steps {
            training.steps = v;
        }
        if let Some(v) = self.restarts {
            training.restarts = v;
        }
        if let Some(v) = self.eval_samples {
            training.eval_samples = v;
        }
        if let Some(v) = self.learning_rate {
            training.learning_rate = v;
        }
        if let Some(v) = self.decay {
            training.decay = v;
        }
        if let Some(v) = self.hidden_width {
            training.hidden_width = v;
        }
        if let Some(v) = self.seed {
            training.seed = v;
        }
    }
}

#[derive(Args)]
struct DistArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Beamsplitter transmissivity.
    #[arg(long)]
    t: Option<f64>,
    /// Three per-party phases, comma separated.
    #[arg(long, value_delimiter = ',')]
    phases: Option<Vec<f64>>,
    /// Measurement variant.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Args)]
struct LpScanArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    /// Bisection width for the feasibility boundaries.
    #[arg(long)]
    boundary_precision: Option<f64>,
    /// Feasibility tolerance of the solver.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    /// Werner visibilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    visibilities: Option<Vec<f64>>,
    /// Three per-party phases, comma separated.
    #[arg(long, value_delimiter = ',')]
    phases: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct NoiseSweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Transmissivity of the measured triangle.
    #[arg(long)]
    t: Option<f64>,
    /// Heralding impurity held fixed across the sweep.
    #[arg(long)]
    impurity: Option<f64>,
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    werner_visibility: Option<f64>,
    #[arg(long, value_enum)]
    fidelity: Option<FidelityArg>,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct RingArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ring sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    parties: Option<Vec<usize>>,
    /// Single transmissivity: emit distributions instead of verdicts.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct HeraldArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Photon-pair emission probability per pulse.
    #[arg(long)]
    pair_emission: Option<f64>,
    /// Heralding detector efficiency.
    #[arg(long)]
    detector_efficiency: Option<f64>,
    /// Pixels of the multiplexed heralding detector.
    #[arg(long)]
    pixel_count: Option<u32>,
    /// Pump pulse rate in Hz.
    #[arg(long)]
    pulse_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Job description: {"command": "...", "params": {...}}.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

fn main() -> ExitCode {
    init_worker_pool();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        // Some grid points failed; partial results and a manifest were
        // written.
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            let (kind, code) = match &err {
                CliError::Validation(_) => ("validation", 2),
                CliError::Runtime(_) => ("runtime", 1),
            };
            eprintln!(
                "{}",
                serde_json::json!({"error": err.to_string(), "kind": kind})
            );
            ExitCode::from(code)
        }
    }
}

/// Honors `PHOTONET_WORKERS` for the size of the shared worker pool.
fn init_worker_pool() {
    let Ok(value) = std::env::var("PHOTONET_WORKERS") else {
        return;
    };
    if let Ok(workers) = value.parse::<usize>() {
        if workers > 0 {
            // Ignore failure: the pool may already exist under a test
            // harness, and the default size is a safe fallback.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
        }
    }
}

fn dispatch(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Dist(args) => {
            let mut cfg: DistConfig = base_config(&args.common)?;
            if let Some(t) = args.t {
                cfg.t = t;
            }
            if let Some(phases) = args.phases {
                cfg.phases = phases;
            }
            if let Some(variant) = args.variant {
                cfg.variant = variant.into();
            }
            args.noise.apply(&mut cfg.noise);
            execute(RunConfig::Dist(cfg), &args.common)
        }
        Command::LpScan(args) => {
            let mut cfg: LpScanConfig = base_config(&args.common)?;
            if let Some(v) = args.t_min {
                cfg.t_min = v;
            }
            if let Some(v) = args.t_max {
                cfg.t_max = v;
            }
            if let Some(v) = args.t_step {
                cfg.t_step = v;
            }
            if let Some(v) = args.boundary_precision {
                cfg.boundary_precision = v;
            }
            if let Some(v) = args.tolerance {
                cfg.tolerance = v;
            }
            execute(RunConfig::LpScan(cfg), &args.common)
        }
        Command::Fit(args) => {
            let mut cfg: FitConfig = base_config(&args.common)?;
            if let Some(v) = args.t_min {
                cfg.t_min = v;
            }
            if let Some(v) = args.t_max {
                cfg.t_max = v;
            }
            if let Some(v) = args.t_step {
                cfg.t_step = v;
            }
            if let Some(v) = args.visibilities {
                cfg.visibilities = v;
            }
            if let Some(v) = args.phases {
                cfg.phases = v;
            }
            if let Some(v) = args.variant {
                cfg.variant = v.into();
            }
            args.training.apply(&mut cfg.training);
            execute(RunConfig::Fit(cfg), &args.common)
        }
        Command::NoiseSweep(args) => {
            let mut cfg: NoiseSweepConfig = base_config(&args.common)?;
            if let Some(v) = args.t {
                cfg.t = v;
            }
            if let Some(v) = args.impurity {
                cfg.impurity = v;
            }
            if let Some(v) = args.grid_min {
                cfg.grid_min = v;
            }
            if let Some(v) = args.grid_max {
                cfg.grid_max = v;
            }
            if let Some(v) = args.grid_step {
                cfg.grid_step = v;
            }
            if let Some(v) = args.werner_visibility {
                cfg.werner_visibility = v;
            }
            if let Some(v) = args.fidelity {
                cfg.fidelity = v.into();
            }
            args.training.apply(&mut cfg.training);
            execute(RunConfig::NoiseSweep(cfg), &args.common)
        }
        Command::Ring(args) => {
            let mut cfg: RingConfig = base_config(&args.common)?;
            if let Some(v) = args.parties {
                cfg.parties = v;
            }
            if args.t.is_some() {
                cfg.t = args.t;
            }
            if let Some(v) = args.t_min {
                cfg.t_min = v;
            }
            if let Some(v) = args.t_max {
                cfg.t_max = v;
            }
            if let Some(v) = args.t_step {
                cfg.t_step = v;
            }
            if let Some(v) = args.variant {
                cfg.variant = v.into();
            }
            if let Some(v) = args.tolerance {
                cfg.tolerance = v;
            }
            execute(RunConfig::Ring(cfg), &args.common)
        }
        Command::Herald(args) => {
            let mut cfg: HeraldConfig = base_config(&args.common)?;
            if let Some(v) = args.pair_emission {
                cfg.spec.pair_emission = v;
            }
            if let Some(v) = args.detector_efficiency {
                cfg.spec.detector_efficiency = v;
            }
            if let Some(v) = args.pixel_count {
                cfg.spec.pixel_count = v;
            }
            if let Some(v) = args.pulse_rate {
                cfg.spec.pulse_rate = v;
            }
            execute(RunConfig::Herald(cfg), &args.common)
        }
        Command::Run(args) => {
            let run: RunConfig = load_config(&args.config)?;
            let common = CommonArgs {
                config: None,
                output: args.output,
                format: args.format,
            };
            execute(run, &common)
        }
    }
}

/// Starts from defaults or, when `--config` is given, from the file.
fn base_config<T: for<'de> serde::Deserialize<'de> + Default>(
    common: &CommonArgs,
) -> Result<T, CliError> {
    match &common.config {
        Some(path) => load_config(path),
        None => Ok(T::default()),
    }
}

fn execute(run: RunConfig, common: &CommonArgs) -> Result<bool, CliError> {
    run.validate()?;
    let format = match common.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let output = common.output.as_deref();
    let report = commands::run(&run, output)?;
    let clean = report.failures.is_empty();
    report.write(output, format)?;
    Ok(clean)
}
