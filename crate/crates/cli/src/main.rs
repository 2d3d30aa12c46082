//! `tnprob` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tnprob::DEFAULT_DENSE_CAP;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] tnprob::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(tnprob::Error::InvalidArgument(_) | tnprob::Error::UnknownName(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "tnprob", version, about = "Tensor-network models of discrete distributions")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Single-threaded reductions and zeroed timing columns, so reruns are
    /// byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Largest number of entries a dense tensor may have.
    #[arg(long, global = true, default_value_t = DEFAULT_DENSE_CAP)]
    pub dense_cap: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on a dataset by maximum likelihood.
    Train(TrainArgs),
    /// Per-sample negative log-likelihood of a dataset under a model.
    Eval(EvalArgs),
    /// Draw samples from a model.
    Sample(SampleArgs),
    /// Fit models directly to random dense distributions over a rank sweep.
    Factorize(FactorizeArgs),
    /// Certificate report for the witness matrices and families.
    Ranks,
    /// Compile a local circuit to a Born machine or LPS and verify it.
    Circuit(CircuitArgs),
    /// Convert a model between representations.
    Convert(ConvertArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Lbfgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset CSV (header, cardinalities, rows).
    #[arg(long)]
    pub data: PathBuf,
    /// mps-nonneg, mps-real, bm-real, bm-complex, lps-real or lps-complex.
    #[arg(long, default_value = "mps-nonneg")]
    pub kind: String,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    /// Purification dimension for LPS kinds.
    #[arg(long, default_value_t = 2)]
    pub puri_dim: usize,
    /// Start from this model file instead of a random one.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Try every learning rate 1e-5..1e5 and keep the best.
    #[arg(long)]
    pub lr_grid: bool,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Initial non-negativity penalty weight for real MPS.
    #[arg(long, default_value_t = 10.0)]
    pub penalty_weight: f64,
    /// Random train/valid sizes; the remaining rows form the test set.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<(usize, usize)>,
}

fn parse_split(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected TRAIN,VALID")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model or HMM file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Model or HMM file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(short, long)]
    pub n: usize,
    /// Write the samples here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FactorizeArgs {
    /// Number of variables of each target.
    #[arg(long, default_value_t = 2)]
    pub n_sites: usize,
    /// Values per variable.
    #[arg(long, default_value_t = 20)]
    pub phys_dim: usize,
    /// Comma-separated ranks.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,10")]
    pub ranks: Vec<usize>,
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',', default_value = "mps-nonneg,mps-real,bm-real,bm-complex,lps-real,lps-complex")]
    pub kinds: Vec<String>,
    /// Random targets per rank.
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 2)]
    pub puri_dim: usize,
}

#[derive(Args, Debug)]
pub struct CircuitArgs {
    /// Circuit file; a random brick-wall circuit is generated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Qudits of the random circuit (system qudits with --ancillas).
    #[arg(long, default_value_t = 4)]
    pub qudits: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Interleave an ancilla after every system qudit and trace them out.
    #[arg(long)]
    pub ancillas: bool,
    /// Ancilla dimension.
    #[arg(long, default_value_t = 2)]
    pub mu: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConvertTarget {
    /// Real LPS (from a non-negative MPS, a Born machine or a complex LPS).
    LpsReal,
    /// Real MPS (from an LPS or a Born machine).
    MpsReal,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub to: ConvertTarget,
    /// Output file; defaults to converted.json in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_argument() {
        assert_eq!(parse_split("100, 50"), Ok((100, 50)));
        assert!(parse_split("100").is_err());
        assert!(parse_split("a,1").is_err());
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Core(tnprob::Error::UnknownName("x".into())).exit_code(), 1);
        assert_eq!(CliError::Core(tnprob::Error::Format("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(tnprob::Error::ZeroNormalization).exit_code(), 3);
    }
}
