mod commands;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::output::{Format, Outcome};

#[derive(Debug, Parser)]
#[command(name = "covlab", version, about = "Maximal operators and Boman-type covering inequalities on finite metric measure spaces")]
pub struct Cli {
    /// Caps the worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Report file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Space descriptions.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Maximal function evaluation.
    #[command(subcommand)]
    Maximal(MaximalCmd),
    /// Overlap ratios, searches and contraction thresholds.
    #[command(subcommand)]
    Boman(BomanCmd),
    /// Doubling constant, optionally localized and restricted to centers in a subset.
    Doubling(DoublingArgs),
    /// Witness search for operator norms.
    #[command(subcommand)]
    Norm(NormCmd),
    /// Brute-force reference checks on tiny spaces.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Worked examples with expected values.
    #[command(subcommand)]
    Paper(PaperCmd),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceCmd {
    /// Validates a space description and writes its normalized form.
    Build {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Centered,
    Uncentered,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClosureArg {
    Closed,
    Open,
}

#[derive(Debug, Args, Serialize)]
pub struct OperatorArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Centered)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 0.0)]
    pub rmin: f64,
    #[arg(long, default_value_t = 1.0)]
    pub expansion: f64,
    #[arg(long, value_enum, default_value_t = ClosureArg::Closed)]
    pub closure: ClosureArg,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaximalCmd {
    /// Evaluates the operator at every atom.
    Eval {
        #[arg(long)]
        space: PathBuf,
        /// JSON array of nonnegative values, one per atom.
        #[arg(long = "fn")]
        function: PathBuf,
        #[command(flatten)]
        operator: OperatorArgs,
    },
}

fn exponent(s: &str) -> Result<f64, String> {
    covlab::num::parse_exponent(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct RatioArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub family: PathBuf,
    /// Exponent: a number, a fraction `a/b`, or `inf`.
    #[arg(long, value_parser = exponent)]
    pub p: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Expand,
    Generalized,
    WeakContract,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BomanCmd {
    /// Dilated over base overlap norm.
    Ratio(RatioArgs),
    /// Base over dilated overlap norm.
    Reverse(RatioArgs),
    /// Base balls over the family's base sets.
    Generalized(RatioArgs),
    /// Base over contracted overlap norm.
    Contracted(RatioArgs),
    /// Random families with weight ascent; reports the best ratio and its family.
    Search {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_parser = exponent)]
        p: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Expand)]
        mode: ModeArg,
        /// Ascent iterations per restart.
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        families: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 6)]
        max_size: usize,
        #[arg(long, default_value_t = 8.0)]
        t_max: f64,
        /// JSON array of candidate balls (required on segment spaces).
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Largest growth factors keeping each ball's measure below its double.
    Thresholds {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        balls: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        margin: f64,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct DoublingArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub rmin: f64,
    /// JSON array of atom indices allowed as centers.
    #[arg(long)]
    pub subset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ClosureArg::Closed)]
    pub closure: ClosureArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    IndicatorSweep,
    Random,
    Ascent,
}

#[derive(Debug, Args, Serialize)]
pub struct NormArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[command(flatten)]
    pub operator: OperatorArgs,
    #[arg(long, value_parser = exponent, default_value = "2")]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::IndicatorSweep)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub budget: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    /// JSON array of atom sets whose indicators are always tried.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormCmd {
    /// Lower bound on the strong-type constant.
    Strong(NormArgs),
    /// Lower bound on the weak-type constant.
    Weak(NormArgs),
}

pub const FIXTURE_SEED: u64 = 20240611;

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleCmd {
    /// Fast paths against brute force on random functions and families.
    Compare {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Weak-type and interpolation chains checked with brute-force brackets.
    Consistency {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_parser = exponent, default_value = "2")]
        p: f64,
    },
    /// Compares pinned reference values, or rewrites them with `--bless`.
    Fixtures {
        #[arg(long)]
        bless: bool,
        #[arg(long, default_value = "crates/core/tests/fixtures/oracle.json")]
        path: PathBuf,
        #[arg(long, default_value_t = FIXTURE_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaperCmd {
    /// Runs one worked example and checks it against its expected values.
    Reproduce {
        #[arg(value_enum)]
        id: reproduce::ExampleId,
    },
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid input.
    Input(String),
    /// A check inside the run failed; the report is still written.
    Check(String),
}

impl From<covlab::Error> for Failure {
    fn from(e: covlab::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = commands::run(&cli).and_then(|outcome: Outcome| {
        output::emit(&cli, &outcome)?;
        match outcome.failure {
            Some(msg) => Err(Failure::Check(msg)),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}
