//! Command-line front end: configuration, subcommands and report emission.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use commands::{run, Command};
pub use config::{Format, RunConfig};
pub use report::{Outcome, Report, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION};

use config::ExpectationKind;

#[derive(Debug, Parser)]
#[command(name = "ocscape", version, about = "One-shot and DP solution routes for finite-horizon optimal control, and their landscapes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Registered problem name (overrides problem.name).
    #[arg(long, global = true)]
    pub problem: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long = "tol-stat", global = true)]
    pub tol_stat: Option<f64>,
    /// Census lattice starts per axis.
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    /// Use Gauss quadrature of this order per noise coordinate.
    #[arg(long = "quadrature-order", global = true, conflicts_with = "mc_samples")]
    pub quadrature_order: Option<usize>,
    /// Use Monte Carlo with this many common random samples.
    #[arg(long = "mc-samples", global = true)]
    pub mc_samples: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Sub {
    /// Projected-gradient solve of the one-shot problem.
    SolveOneshot,
    /// Grid DP (deterministic) or backward parameter sweeps (parameterized).
    SolveDp,
    /// Certify policy parameters as DP local minimizers on sampled states.
    CertifyDp,
    /// Enumerate and classify one-shot stationary points.
    Census,
    /// DP / one-shot warm-start experiment on random LQR instances.
    WarmstartLqr,
    /// Run the canonical experiment for a registered problem and compare with its listed results.
    Reproduce { name: String },
    /// Evaluate the one-shot objective on a lattice and write it as CSV.
    Grid,
}

impl Sub {
    pub fn command(&self) -> Command {
        match self {
            Sub::SolveOneshot => Command::SolveOneshot,
            Sub::SolveDp => Command::SolveDp,
            Sub::CertifyDp => Command::CertifyDp,
            Sub::Census => Command::Census,
            Sub::WarmstartLqr => Command::WarmstartLqr,
            Sub::Reproduce { name } => Command::Reproduce(name.clone()),
            Sub::Grid => Command::Grid,
        }
    }
}

impl Flags {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> ocscape_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem.name = Some(p.clone());
            cfg.problem.inline = None;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.display().to_string();
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        if let Some(t) = self.tol_stat {
            cfg.solver.tol_stat = t;
        }
        if let Some(s) = self.starts {
            cfg.census.starts_per_axis = s;
        }
        if let Some(q) = self.quadrature_order {
            cfg.expectation.mode = ExpectationKind::Quadrature;
            cfg.expectation.quadrature_order = q;
        }
        if let Some(m) = self.mc_samples {
            cfg.expectation.mode = ExpectationKind::MonteCarlo;
            cfg.expectation.mc_samples = m;
        }
        Ok(cfg)
    }
}

/// Runs a command, writes its outputs and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let started = Instant::now();
    let cmd = cli.command.command();
    let name = cmd.name();
    let (cfg, outcome) = match cli.flags.resolve() {
        Ok(cfg) => {
            let o = run(&cmd, &cfg);
            (cfg, o)
        }
        Err(e) => {
            let mut cfg = RunConfig::default();
            if let Some(o) = &cli.flags.out {
                cfg.output.dir = o.display().to_string();
            }
            (cfg, Err(e))
        }
    };
    let report = Report::build(&name, &cfg, outcome.as_ref());
    let csv = outcome.as_ref().ok().and_then(|o| o.csv.as_ref());
    let dir = PathBuf::from(&cfg.output.dir);
    match report::write_outputs(&dir, &name, cfg.output.format, &report, csv, started.elapsed()) {
        Ok(paths) => {
            for v in &report.verdicts {
                println!("[{}] {}{}", if v.passed { "pass" } else { "FAIL" }, v.name, if v.detail.is_empty() { String::new() } else { format!(" ({})", v.detail) });
            }
            if let Some(e) = &report.error {
                eprintln!("error [{}]: {}", e.code, e.message);
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("error [io]: cannot write outputs to {}: {e}", dir.display());
            if report.exit_code == EXIT_OK {
                EXIT_NUMERICAL
            } else {
                report.exit_code
            }
        }
    }
}
