//! Command-line driver for the `tfqkd` models.
//!
//! Every subcommand reads a [`config::RunConfig`] (from `--config`, the
//! `TFQKD_CONFIG` file, or defaults), applies flag overrides, evaluates its
//! grid on a worker pool and writes CSV or JSON rows. Exit codes: 0 on
//! success, 2 for configuration errors, 3 for numerical failures or a failed
//! validation run.

pub mod commands;
pub mod config;
pub mod error;
pub mod record;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tfqkd::measurement::Protocol;
use tfqkd::validation::Perturbation;

use crate::config::{parse_protocol, Grid, OutputFormat, RunConfig, ThresholdKind, CONFIG_ENV};
use crate::error::{config as config_err, CliError, EXIT_CONFIG};
use crate::record::{write_checks, write_records};

#[derive(Debug, Parser)]
#[command(name = "tfqkd", version, about = "Bell tests and key rates for photonic DI twin-field QKD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximal |S| over a detector-efficiency grid.
    Chsh,
    /// Asymptotic key rate over a detector-efficiency grid.
    Rate,
    /// Distance sweep, asymptotic plus any configured block sizes.
    Sweep,
    /// Bisection for the efficiency (or visibility) threshold.
    Threshold {
        #[arg(long, value_enum)]
        quantity: Option<ThresholdKind>,
    },
    /// Finite-size key rates for a list of block sizes.
    Finite,
    /// Closed forms against the Fock oracle and series identities.
    Validate {
        /// Random draws per check.
        #[arg(long)]
        draws: Option<usize>,
        /// Inject an offset into one closed form, as `formula=eps`.
        #[arg(long, value_parser = commands::parse_perturbation)]
        perturb: Option<Perturbation>,
    },
}

/// Flags that override the configuration file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_protocol)]
    pub protocol: Option<Protocol>,
    /// Detector efficiency: `x`, `x,y,...` or `start:stop:steps`.
    #[arg(long, global = true)]
    pub eta_d: Option<Grid>,
    #[arg(long, global = true)]
    pub visibility: Option<Grid>,
    /// Single Alice–Bob distance in km.
    #[arg(long, global = true, conflicts_with = "distance_grid")]
    pub distance: Option<f64>,
    #[arg(long, global = true)]
    pub distance_grid: Option<Grid>,
    /// Block sizes N for finite-size rows.
    #[arg(long, global = true)]
    pub rounds: Option<Grid>,
    #[arg(long, global = true)]
    pub rep_rate: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    #[arg(long, global = true)]
    pub noisy_preprocessing: Option<bool>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(p) = self.protocol {
            cfg.protocol = p;
        }
        if let Some(g) = &self.eta_d {
            cfg.physics.eta_d = g.clone();
        }
        if let Some(g) = &self.visibility {
            cfg.physics.visibility = g.clone();
        }
        if let Some(l) = self.distance {
            cfg.physics.distance_km = Grid::Value(l);
        }
        if let Some(g) = &self.distance_grid {
            cfg.physics.distance_km = g.clone();
        }
        if let Some(g) = &self.rounds {
            cfg.finite.rounds = g.values()?;
        }
        if let Some(x) = self.rep_rate {
            cfg.physics.rep_rate = x;
        }
        if let Some(s) = self.seed {
            cfg.optimizer.seed = s;
            cfg.validate.seed = s;
        }
        if let Some(n) = self.starts {
            cfg.optimizer.starts = n;
        }
        if let Some(b) = self.noisy_preprocessing {
            cfg.rate.noisy_preprocessing = b;
        }
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        Ok(())
    }
}

/// Builds the effective configuration: file, then flags, then checks.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.overrides.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    match &cli.command {
        Command::Threshold { quantity: Some(q) } => cfg.threshold.quantity = *q,
        Command::Validate { draws: Some(d), .. } => cfg.validate.draws = *d,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// What a run produced, already encoded.
#[derive(Debug)]
pub struct RunOutput {
    pub bytes: Vec<u8>,
    pub rows: usize,
    /// Names of failed checks from `validate`.
    pub failed_checks: Vec<String>,
}

/// Evaluates the subcommand and encodes its rows without touching the disk.
pub fn execute(cli: &Cli, cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| config_err(format!("cannot start worker pool: {e}")))?;
    let mut bytes = Vec::new();
    pool.install(|| -> Result<RunOutput, CliError> {
        let records = match &cli.command {
            Command::Chsh => commands::cmd_chsh(cfg)?,
            Command::Rate => commands::cmd_rate(cfg)?,
            Command::Sweep => commands::cmd_sweep(cfg)?,
            Command::Threshold { .. } => commands::cmd_threshold(cfg)?,
            Command::Finite => commands::cmd_finite(cfg)?,
            Command::Validate { perturb, .. } => {
                let (rows, report) = commands::cmd_validate(cfg, perturb.clone())?;
                eprint!("{report}");
                write_checks(&rows, cfg.output.format, &mut bytes)?;
                let failed_checks = report.failures().map(|c| c.formula.clone()).collect();
                return Ok(RunOutput { bytes: std::mem::take(&mut bytes), rows: rows.len(), failed_checks });
            }
        };
        write_records(&records, cfg.output.format, &mut bytes)?;
        Ok(RunOutput { bytes: std::mem::take(&mut bytes), rows: records.len(), failed_checks: Vec::new() })
    })
}

/// Runs a parsed command line end to end, writing the output.
pub fn run(cli: &Cli) -> Result<RunOutput, CliError> {
    let cfg = resolve_config(cli)?;
    let out = execute(cli, &cfg)?;
    match &cfg.output.path {
        Some(p) => std::fs::write(p, &out.bytes).map_err(|e| CliError::Io { path: p.display().to_string(), source: e })?,
        None => std::io::stdout()
            .write_all(&out.bytes)
            .map_err(|e| CliError::Io { path: "<stdout>".into(), source: e })?,
    }
    eprintln!("wrote {} rows", out.rows);
    if !out.failed_checks.is_empty() {
        return Err(CliError::ValidationFailed(out.failed_checks.join(", ")));
    }
    Ok(out)
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
