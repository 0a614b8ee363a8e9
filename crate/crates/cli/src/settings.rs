//! Command-line flags, the optional TOML config, and their merge.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcflow::concurrent::{ConcurrentOptions, OuterVariant};
use mcflow::lapsolve::{OuterMethod, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Outer round count used outside paper-faithful mode when none is given.
pub const DEFAULT_OUTER_ITERATIONS: usize = 60;
/// Inner round count used outside paper-faithful mode when none is given.
pub const DEFAULT_INNER_ITERATIONS: usize = 30;

#[derive(Parser, Debug)]
#[command(name = "mcflow", version, about = "Approximate multicommodity flow via energy-coupled electrical flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Maximum concurrent flow by binary search on the demand scale.
    SolveConcurrent {
        file: PathBuf,
        /// Route the demands at this fixed scale instead of searching.
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Maximum weighted multicommodity flow.
    SolveWeighted {
        file: PathBuf,
        /// Per-commodity weights, comma separated.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// One minimum-energy flow for fixed energy matrices.
    Coupled {
        file: PathBuf,
        #[command(flatten)]
        matrices: Matrices,
        /// Relative energy error.
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        /// Compare with the dense reference solve.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Route the demands with saturation at most 1 + 10ε, or FAIL.
    Capacitated {
        file: PathBuf,
        #[command(flatten)]
        matrices: Matrices,
        #[command(flatten)]
        common: Common,
    },
    /// Write a random instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = ProfileArg::Random)]
        profile: ProfileArg,
        #[command(flatten)]
        common: Common,
    },
    /// Run both outer variants and the LP reference and compare.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Record solver iteration counts against graph size.
    Bench {
        /// Edge counts to try.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Matrices {
    /// Random energy blocks with this condition number (seeded); identity
    /// blocks scaled by 1/u² when absent.
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Random,
    Planted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outer {
    Mmw,
    Signs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Cheby,
    Cg,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every subcommand. All optional so the config file can fill gaps.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub outer: Option<Outer>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    /// Use the exact constants and unfloored solve tolerances.
    #[arg(long)]
    pub paper_faithful: bool,
    #[arg(long)]
    pub outer_iterations: Option<usize>,
    #[arg(long)]
    pub outer_rho: Option<f64>,
    #[arg(long)]
    pub inner_iterations: Option<usize>,
    #[arg(long)]
    pub inner_rho: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report format.
    #[arg(long, value_enum)]
    pub output: Option<Format>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    epsilon: Option<f64>,
    outer: Option<Outer>,
    solver: Option<Solver>,
    paper_faithful: Option<bool>,
    outer_iterations: Option<usize>,
    outer_rho: Option<f64>,
    inner_iterations: Option<usize>,
    inner_rho: Option<f64>,
    seed: Option<u64>,
    output: Option<Format>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    weights: Option<Vec<f64>>,
}

/// Resolved settings, echoed in every report.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub epsilon: f64,
    pub outer: Outer,
    pub solver: Solver,
    pub paper_faithful: bool,
    pub outer_iterations: Option<usize>,
    pub outer_rho: Option<f64>,
    pub inner_iterations: Option<usize>,
    pub inner_rho: Option<f64>,
    pub seed: u64,
    pub output: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn read_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl Settings {
    pub fn resolve(flags: &Common, weights: Option<Vec<f64>>) -> Result<Settings, CliError> {
        let file = match &flags.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        let paper_faithful = flags.paper_faithful || file.paper_faithful.unwrap_or(false);
        let mut s = Settings {
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(0.1),
            outer: flags.outer.or(file.outer).unwrap_or(Outer::Mmw),
            solver: flags.solver.or(file.solver).unwrap_or(Solver::Cheby),
            paper_faithful,
            outer_iterations: flags.outer_iterations.or(file.outer_iterations),
            outer_rho: flags.outer_rho.or(file.outer_rho),
            inner_iterations: flags.inner_iterations.or(file.inner_iterations),
            inner_rho: flags.inner_rho.or(file.inner_rho),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            output: flags.output.or(file.output).unwrap_or(Format::Json),
            out: flags.out.clone().or(file.out),
            threads: flags.threads.or(file.threads).unwrap_or(0),
            weights: weights.or(file.weights),
        };
        if !(s.epsilon > 0.0 && s.epsilon < 0.5) {
            return Err(CliError::Usage(format!("epsilon must lie in (0, 0.5), got {}", s.epsilon)));
        }
        let overridden = s.outer_iterations.is_some() || s.outer_rho.is_some() || s.inner_iterations.is_some() || s.inner_rho.is_some();
        if paper_faithful && overridden {
            return Err(CliError::Usage("--paper-faithful cannot be combined with iteration or width overrides".into()));
        }
        if s.outer_iterations == Some(0) || s.inner_iterations == Some(0) {
            return Err(CliError::Usage("iteration counts must be positive".into()));
        }
        if s.outer_rho.is_some_and(|r| !(r > 0.0)) || s.inner_rho.is_some_and(|r| !(r > 0.0)) {
            return Err(CliError::Usage("widths must be positive".into()));
        }
        if !paper_faithful {
            s.outer_iterations.get_or_insert(DEFAULT_OUTER_ITERATIONS);
            s.inner_iterations.get_or_insert(DEFAULT_INNER_ITERATIONS);
        }
        Ok(s)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let outer = match self.solver {
            Solver::Cheby => OuterMethod::Chebyshev,
            Solver::Cg => OuterMethod::ConjugateGradient,
            Solver::Direct => OuterMethod::Direct,
        };
        SolverOptions { outer, paper_faithful: self.paper_faithful, ..Default::default() }
    }

    pub fn concurrent(&self, outer: Outer) -> ConcurrentOptions {
        let variant = match outer {
            Outer::Mmw => OuterVariant::Mmw,
            Outer::Signs => OuterVariant::Signs,
        };
        ConcurrentOptions {
            outer_rho: self.outer_rho,
            outer_iterations: self.outer_iterations,
            inner_rho: self.inner_rho,
            inner_iterations: self.inner_iterations,
            solver: self.solver_options(),
            ..ConcurrentOptions::new(self.epsilon, variant)
        }
    }
}
