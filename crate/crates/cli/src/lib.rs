//! Command-line driver: configuration, sweeps and file output for `clockspin`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{FitArgs, FitModel, Output};
pub use config::{Format, RunConfig, DEFAULT_CONFIG};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "clockspin", version, about = "Clock-transition spectroscopy of molecular spin qubits")]
pub struct Cli {
    /// TOML run configuration; the shipped defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for Monte Carlo sampling (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of grid outputs; scalar results are always JSON.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy levels over the field sweep.
    Levels,
    /// Anticrossing (clock transition) fields and gaps.
    Clock,
    /// Raw and difference-normalized transmission maps.
    Map,
    /// Cavity-window map, effective width curve and coupling summary.
    Cavity,
    /// Least-squares fit of a trace.
    Fit {
        /// CSV with columns x,y[,sigma] (or a header naming x,y,y_imag,sigma).
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        model: FitModel,
        /// Population difference of the fitted line.
        #[arg(long)]
        delta_p: Option<f64>,
        /// Field (T) at which to compute the population difference from the thermal model.
        #[arg(long)]
        field_t: Option<f64>,
        /// Nuclear label of the branch crossing the cavity (cavity-width fits).
        #[arg(long, allow_hyphen_values = true)]
        m_i: Option<f64>,
    },
    /// Histogram of dipolar bias-field samples.
    Dipolar,
    /// Print the fully resolved configuration.
    Config,
}

/// Resolved configuration after command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = &cli.out {
        cfg.output.dir = d.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run one command; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = resolve_config(cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(Vec::new());
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))?;
    let mut out = Output::new(&cfg.output.dir, cfg.output.format)?;
    out.text("effective_config.toml", &cfg.to_toml()?)?;
    pool.install(|| match &cli.command {
        Command::Levels => commands::levels(&cfg, &mut out),
        Command::Clock => commands::clock(&cfg, &mut out),
        Command::Map => commands::map(&cfg, &mut out),
        Command::Cavity => commands::cavity(&cfg, &mut out),
        Command::Dipolar => commands::dipolar(&cfg, &mut out),
        Command::Fit {
            trace,
            model,
            delta_p,
            field_t,
            m_i,
        } => {
            let args = FitArgs {
                trace: trace.clone(),
                model: *model,
                delta_p: *delta_p,
                field_t: *field_t,
                m_i: *m_i,
            };
            commands::fit(&cfg, &args, &mut out).map(|_| ())
        }
        Command::Config => unreachable!(),
    })?;
    Ok(out.into_written())
}

/// Parse arguments, run, report; returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
