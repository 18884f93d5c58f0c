//! Command-line front end.
//!
//! Exit codes: `0` success, `1` configuration, usage or IO error, `2` the
//! solver or simulation broke down numerically, `3` the admissibility
//! conditions failed (outputs are still written).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{parse_number, Config, Param};
use crate::figures::{reproduce_run, resolve};
use crate::manifest::Manifest;
use crate::pipeline::{
    check_run, simulate_run, solve_run, sweep_run, Query, Run, RunError, StrategyChoice, SweepSpec,
    EXIT_INADMISSIBLE,
};

#[derive(Debug, Parser)]
#[command(
    name = "reinsure",
    version,
    about = "Equilibrium reinsurance and investment under random risk aversion"
)]
pub struct Cli {
    /// Configuration file (`key = value` lines); Table 1 defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Solve the g-functions and the equilibrium strategy.
    Solve {
        /// Also evaluate U and every Y at `t,x,v`.
        #[arg(long, allow_hyphen_values = true)]
        query: Option<String>,
    },
    /// Check the admissibility conditions on the whole grid.
    Check,
    /// Monte Carlo estimate of expected utilities and the reward.
    Simulate {
        /// Number of simulated paths.
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides T, keeping the configured step size.
        #[arg(long)]
        horizon: Option<f64>,
        /// `equilibrium`, `zero` or `const:q,pi`.
        #[arg(long, default_value = "equilibrium", allow_hyphen_values = true)]
        strategy: String,
    },
    /// Strategy curves over a list of values of one parameter.
    Sweep {
        /// Parameter to vary: eta1, eta2, lambda1, mu1, mu2, r, xi, kappa, theta, sigma, rho, v0 or x0.
        #[arg(long)]
        param: String,
        /// Comma-separated values; `p/q` literals allowed.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// `q_hat`, `pi_hat` or `pi_diff`.
        #[arg(long, default_value = "pi_hat")]
        observable: String,
        /// Write every n-th grid point.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
    /// Regenerate the data behind a figure, e.g. `fig31/T100/caseII`, or `all`.
    Reproduce {
        /// Figure id `<figure>/T<horizon>/<case>`, or `all`.
        id: String,
        /// Grid step in years.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        /// A `manifest.json` written by an earlier run.
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Check => "check",
            Command::Simulate { .. } => "simulate",
            Command::Sweep { .. } => "sweep",
            Command::Reproduce { .. } => "reproduce",
            Command::Replay { .. } => "replay",
        }
    }
}

fn usage(e: impl ToString) -> RunError {
    RunError::Usage(e.to_string())
}

fn dispatch(command: &Command, config: &Config) -> Result<Run, RunError> {
    match command {
        Command::Solve { query } => {
            let query = query
                .as_deref()
                .map(str::parse::<Query>)
                .transpose()
                .map_err(usage)?;
            solve_run(config, query)
        }
        Command::Check => check_run(config),
        Command::Simulate {
            paths,
            seed,
            horizon,
            strategy,
        } => {
            let mut cfg = config.clone();
            if let Some(seed) = seed {
                cfg.seed = *seed;
            }
            if let Some(terminal) = horizon {
                let step = cfg.terminal / cfg.steps as f64;
                cfg.terminal = *terminal;
                cfg.steps = (terminal / step).round().max(1.0) as usize;
            }
            let strategy: StrategyChoice = strategy.parse().map_err(usage)?;
            simulate_run(&cfg, *paths, strategy)
        }
        Command::Sweep {
            param,
            values,
            observable,
            every,
        } => {
            let spec = SweepSpec {
                param: param.parse::<Param>().map_err(usage)?,
                values: values
                    .split(',')
                    .map(parse_number)
                    .collect::<Result<_, _>>()
                    .map_err(usage)?,
                observable: observable.parse().map_err(usage)?,
                every: (*every).max(1),
            };
            sweep_run(config, &spec)
        }
        Command::Reproduce { id, step } => reproduce_run(&resolve(id)?, *step),
        Command::Replay { .. } => Err(usage("a manifest cannot replay another replay")),
    }
}

fn execute(cli: &Cli) -> Result<i32, RunError> {
    let (command, config) = match &cli.command {
        Command::Replay { manifest } => {
            let m = Manifest::load(manifest)?;
            let config = match &m.config {
                Some(text) => text.parse()?,
                None => Config::default(),
            };
            (m.command, config)
        }
        other => {
            let config = match &cli.config {
                Some(path) => Config::load(path)?,
                None => Config::default(),
            };
            (other.clone(), config)
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(usage)?;
    let run = pool.install(|| dispatch(&command, &config))?;

    std::fs::create_dir_all(&cli.out).map_err(|source| RunError::Io {
        context: format!("cannot create {}", cli.out.display()),
        source,
    })?;
    let mut outputs = Vec::with_capacity(run.tables.len());
    for table in &run.tables {
        table.write(&cli.out).map_err(|source| RunError::Io {
            context: format!("cannot write {}", cli.out.join(&table.name).display()),
            source,
        })?;
        outputs.push(table.name.clone());
    }
    let manifest = Manifest {
        tool: "reinsure".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: command.name().into(),
        config: (!matches!(command, Command::Reproduce { .. })).then(|| config.render()),
        command,
        threads: pool.current_num_threads(),
        out_dir: cli.out.display().to_string(),
        outputs,
        grids: run.grids,
        timings: run.timings,
    };
    manifest.write(&cli.out)?;

    for line in &run.summary {
        println!("{line}");
    }
    println!(
        "wrote {} files and {} to {}",
        manifest.outputs.len(),
        crate::manifest::FILE_NAME,
        cli.out.display()
    );
    if let Some(reason) = run.inadmissible {
        eprintln!("admissibility conditions failed: {reason}");
        return Ok(EXIT_INADMISSIBLE);
    }
    Ok(0)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
