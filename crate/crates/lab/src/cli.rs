//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode, Overrides};
use crate::error::{write_error_record, LabError, Result, EXIT_USAGE};
use crate::run::run;

#[derive(Debug, Parser)]
#[command(name = "qntk-lab", version, about = "Quantum neural tangent kernel experiments")]
pub struct Cli {
    /// TOML file with [circuit], [data], [descent], [hybrid] and [output] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write SVG line charts.
    #[arg(long, global = true)]
    pub plots: bool,
    /// Run this many consecutive seeds concurrently, each into `<out>/seed-<s>`.
    #[arg(long, global = true)]
    pub sweep: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drive one expectation value to a target.
    Optimize(Overrides),
    /// Supervised training with the frozen-kernel prediction.
    Learn(Overrides),
    /// Kernel matrix and spectrum at the reference angles.
    Kernel(Overrides),
    /// Training with frozen, dQNTK and asymptotic predictions.
    Predict(Overrides),
    /// Connected four-point function across hybrid-layer widths.
    HybridScan(Overrides),
    /// Write an ad-hoc classification dataset.
    DatasetGen(Overrides),
}

impl Command {
    fn split(self) -> (Mode, Overrides) {
        match self {
            Command::Optimize(o) => (Mode::Optimize, o),
            Command::Learn(o) => (Mode::Learn, o),
            Command::Kernel(o) => (Mode::Kernel, o),
            Command::Predict(o) => (Mode::Predict, o),
            Command::HybridScan(o) => (Mode::HybridScan, o),
            Command::DatasetGen(o) => (Mode::DatasetGen, o),
        }
    }
}

/// Resolves the config: defaults, then the file, then flags.
pub fn resolve(cli: Cli) -> Result<(Mode, ExperimentConfig, Option<u64>)> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let (mode, overrides) = cli.command.split();
    overrides.apply(&mut cfg);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output.dir = o;
    }
    cfg.output.plots |= cli.plots;
    if cli.sweep == Some(0) {
        return Err(LabError::Usage("--sweep needs at least one seed".into()));
    }
    Ok((mode, cfg.resolve()?, cli.sweep))
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("QNTK_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| LabError::Usage(format!("QNTK_LAB_THREADS must be a positive integer, got {v:?}")))?;
    // A pool may already exist when called twice in one process; the first setting wins.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(mode: Mode, cfg: ExperimentConfig, sweep: Option<u64>) -> std::result::Result<(), (PathBuf, LabError)> {
    let Some(n) = sweep else {
        return match run(mode, &cfg) {
            Ok(_) => Ok(()),
            Err(e) => Err((cfg.output.dir, e)),
        };
    };
    let base = cfg.output.dir.clone();
    let failures: Vec<(PathBuf, LabError)> = (0..n)
        .into_par_iter()
        .filter_map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed + k;
            c.data.seed = Some(cfg.data.seed.unwrap_or(cfg.seed) + k);
            c.output.dir = base.join(format!("seed-{}", c.seed));
            run(mode, &c).err().map(|e| (c.output.dir, e))
        })
        .collect();
    let mut failures = failures.into_iter();
    let first = failures.next();
    for (dir, e) in failures {
        write_error_record(&dir, &e);
        eprintln!("qntk-lab: {}: {e}", dir.display());
    }
    first.map_or(Ok(()), Err)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let fallback = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let outcome = configure_threads().and_then(|_| resolve(cli)).map_err(|e| (fallback, e));
    let result = outcome.and_then(|(mode, cfg, sweep)| execute(mode, cfg, sweep));
    match result {
        Ok(()) => 0,
        Err((dir, e)) => {
            write_error_record(&dir, &e);
            eprintln!("qntk-lab: {e}");
            e.exit_code()
        }
    }
}
