//! The `chimera` command line: synthetic data, human-judgment pools and
//! extensions, model fits, hub forecasts, scores and report bundles.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use chimera_core::inference::ModelKind;
use chimera_core::ts::EpiWeek;
use clap::{Args, Parser, Subcommand};

pub use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(
    name = "chimera",
    version,
    about = "Hospitalization forecasts blended with human-judgment peak forecasts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate truth and crowd forecasts from known parameters.
    Simulate(SimulateArgs),
    /// Pool human-judgment forecasts into hub-format peak forecasts.
    Ensemble(EnsembleArgs),
    /// Extend pooled peak forecasts to locations without human judgment.
    Extend(ExtendArgs),
    /// Fit the control or chimeric model per location and as-of week.
    Fit(FitArgs),
    /// Turn fitted samples into hub-format forecasts.
    Forecast(ForecastArgs),
    /// Score hub forecasts against truth and compare models.
    Score(ScoreArgs),
    /// Write plot-ready tables from a score file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration (TOML). Without it one 30-week location `SIM` is simulated.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip the synthetic crowd forecasts.
    #[arg(long)]
    pub no_hj: bool,
    /// Forecasters in the synthetic crowd.
    #[arg(long, default_value_t = 10)]
    pub forecasters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub hj: PathBuf,
    /// Forecaster weights (JSON object of id to weight); equal weights otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Pool only submissions made by the end of this epiweek.
    #[arg(long)]
    pub asof: Option<EpiWeek>,
    /// Comma-separated locations; all by default.
    #[arg(long, value_delimiter = ',')]
    pub locations: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub hj: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub asof: EpiWeek,
    /// Comma-separated locations; the configuration's by default.
    #[arg(long, value_delimiter = ',')]
    pub locations: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Human-judgment forecasts; required by the chimeric model.
    #[arg(long)]
    pub hj: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// `control` or `chimeric`.
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long, value_delimiter = ',')]
    pub locations: Option<Vec<String>>,
    /// Comma-separated last observed epiweeks, e.g. `202350,202402`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub asof: Vec<EpiWeek>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the location by as-of jobs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long, value_delimiter = ',')]
    pub locations: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub asof: Vec<EpiWeek>,
    #[arg(long, default_value_t = 12)]
    pub max_horizon: usize,
    /// Directory holding `samples/` from `fit`; forecasts go to `forecasts/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// `name=path` of a hub forecast file; repeat for each model.
    #[arg(long = "forecast", required = true)]
    pub forecasts: Vec<String>,
    /// Name of the model every other model is compared against.
    #[arg(long)]
    pub reference: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Score file; `<out>/scores.csv` by default.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub reference: String,
    /// The bundle goes to `<out>/report/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] chimera_core::Error),
}

impl CliError {
    /// 1 for problems with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use chimera_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                E::Io(_)
                | E::Initialization(_)
                | E::DegenerateSample(_)
                | E::RankDeficient
                | E::UndefinedReference(_)
                | E::NonPositiveScale(_)
                | E::DegenerateScale => 2,
                _ => 1,
            },
        }
    }

    fn hint(&self) -> Option<&'static str> {
        use chimera_core::Error as E;
        let CliError::Core(e) = self else {
            return Some("run `chimera <command> --help` for the expected flags");
        };
        Some(match e {
            E::FileNotFound(_) => "check the path; inputs are read relative to the working directory",
            E::Config(_) | E::Toml(_) => "fix the configuration file; unknown keys are rejected",
            E::Gap { .. } | E::NonConsecutive { .. } => "truth files need one row per consecutive epiweek",
            E::InsufficientHistory(_) => "the truth file must cover the season start through the as-of week",
            E::Monotonicity(_) | E::InvalidLevels(_) | E::Target(_) => {
                "check the human-judgment file: targets, levels in (0,1), non-decreasing values"
            }
            E::Initialization(_) => "try another --seed or a larger optimizer population",
            E::Schema(_) | E::Csv(_) | E::Json(_) => "the file does not match the expected layout; regenerate it",
            E::HorizonBeyondSeason { .. } => "lower --max-horizon or extend the season in the configuration",
            _ => return None,
        })
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHIMERA_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = e.hint() {
                eprintln!("hint: {h}");
            }
            e.exit_code()
        }
    }
}
