use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{ExperimentConfig, KEYS};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "hsi", version, about = "Bundle-based hyperspectral unmixing")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key=value config file; `--set` and the flags below override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub penalty: Option<String>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub fraction: Option<f64>,
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with ground truth
    Simulate,
    /// Extract endmember bundles from `image`
    Extract,
    /// Unmix `image` against `dictionary`
    Unmix,
    /// Compute metrics for `abundances` (against `truth` when given)
    Eval,
    /// Unmix and evaluate over a lambda (and fraction) grid
    Sweep,
    /// Write abundance maps and a summary table
    Report,
    /// List the recognized config keys
    Keys,
}

impl GlobalArgs {
    /// Config file, then `--set` overrides, then dedicated flags.
    pub fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::new(),
        };
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        let mut flag = |key: &str, value: Option<String>| -> Result<()> {
            match value {
                Some(v) => cfg.set(key, &v),
                None => Ok(()),
            }
        };
        flag("seed", self.seed.map(|v| v.to_string()))?;
        flag("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        flag("penalty", self.penalty.clone())?;
        flag("lambda", self.lambda.map(|v| format!("{v:?}")))?;
        flag("fraction", self.fraction.map(|v| format!("{v:?}")))?;
        flag("rho", self.rho.map(|v| format!("{v:?}")))?;
        flag("max_iter", self.max_iter.map(|v| v.to_string()))?;
        flag("tol", self.tol.map(|v| format!("{v:?}")))?;
        flag("threads", self.threads.map(|v| v.to_string()))?;
        Ok(cfg)
    }
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = cli.global.config()?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Extract => commands::extract(&cfg),
        Command::Unmix => commands::unmix(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Report => commands::report(&cfg),
        Command::Keys => {
            for (k, d) in KEYS {
                println!("{k:<26} {d}");
            }
            Ok(Vec::new())
        }
    }
}
