//! `pacsketch`: sketch, verify, synthesize and monitor programs with
//! unreliable components, from JSON and JSONL files.
//!
//! Exit codes: 0 pass or accept, 2 reject or warning, 1 error.

mod commands;
mod io;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

const TOP_EXAMPLES: &str = "\
Examples:
  pacsketch gen-data classifier --n 2000 --accuracy 0.99 --out data.jsonl
  pacsketch sketch --program sketch.json --data data.jsonl --out program.json
  pacsketch verify --program program.json --data fresh.jsonl
  pacsketch synthesize --task task.json --data examples.jsonl --out result.json
  pacsketch analyze --task task.json

Exit codes: 0 pass/accept, 2 reject/warning, 1 error.";

#[derive(Debug, Parser)]
#[command(name = "pacsketch", version, about = "PAC sketching, synthesis and verification", after_help = TOP_EXAMPLES)]
pub struct Cli {
    /// JSON file with defaults for eps, delta, err, n, seed, grid and threads.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for candidate scoring and Monte Carlo trials.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill every hole of a full sketch from labeled data.
    #[command(after_help = "\
Examples:
  pacsketch sketch --program sketch.json --data data.jsonl --delta 0.05 --out program.json
  pacsketch sketch --program sketch.json --data data.jsonl --report report.json

The report goes to --report or stdout. Exits 2 when some hole had no usable
samples and received its conservative fallback (threshold inf or eps 1).")]
    Sketch(SketchArgs),
    /// Check a complete program against fresh labeled data.
    #[command(after_help = "\
Examples:
  pacsketch verify --program program.json --data fresh.jsonl
  pacsketch verify --program program.json --data fresh.jsonl --delta 0.01 --out verdict.json

Exits 0 when every specification passes and 2 otherwise.")]
    Verify(VerifyArgs),
    /// Synthesize a program from input-output examples, then sketch it.
    #[command(after_help = "\
Examples:
  pacsketch synthesize --task task.json --sketch-only
  pacsketch synthesize --task task.json --data examples.jsonl --out result.json
  pacsketch synthesize --task task.json --data examples.jsonl --no-search
  pacsketch synthesize --task task.json --data examples.jsonl --k0 --n auto

Data lines are JSON arrays with one value per program input; images are
records as written by `gen-data records`.")]
    Synthesize(SynthesizeArgs),
    /// Re-verify a program over a sliding window of a JSONL stream.
    #[command(after_help = "\
Examples:
  pacsketch gen-data classifier --n 3000 --shift-after 1000 --shifted-accuracy 0.8 | \\
      pacsketch monitor --program program.json --window 500 --refresh 100
  pacsketch monitor --program program.json --follow stream.jsonl --idle-timeout 5

Prints one verdict per check. Exits 2 if any check rejected.")]
    Monitor(MonitorArgs),
    /// Occurrence counts, error bound and budget candidates of a DSL program.
    #[command(after_help = "\
Examples:
  pacsketch analyze --task task.json
  pacsketch analyze --expr '(fold + (map predict_float input1) 0)' --type 'list(image) -> float' --n 3 --json")]
    Analyze(AnalyzeArgs),
    /// Monte Carlo checks of the statistical guarantees.
    #[command(after_help = "\
Examples:
  pacsketch validate threshold --dist uniform:0,1 --n 500 --trials 2000 --eps 0.1
  pacsketch validate lower-bound --mu 0.9 --n 300
  pacsketch validate verifier --mu 0.9 --eps 0.05
  pacsketch validate sketch --trials 500
  pacsketch validate shift --shifted-accuracy 0.8
  pacsketch validate benchmark --seeds 3

Exits 0 when the observed rate is within its bound and 2 otherwise.")]
    Validate(ValidateArgs),
    /// Generate synthetic predictor records, DSL examples or classifier streams.
    #[command(name = "gen-data", after_help = "\
Examples:
  pacsketch gen-data records --n 100 --accuracy 0.99
  pacsketch gen-data examples --task task.json --n 5000 --out examples.jsonl
  pacsketch gen-data classifier --n 2000 --accuracy 0.99 --out data.jsonl")]
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
pub struct SketchArgs {
    /// Full sketch (program JSON).
    #[arg(long, value_name = "FILE")]
    pub program: PathBuf,
    /// Labeled valuations, one JSON object per line ("-" for stdin).
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_parser = probability)]
    pub delta: Option<f64>,
    /// Use the zero-mistake threshold estimator.
    #[arg(long)]
    pub k0: bool,
    /// Where to write the completed program.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Where to write the report (default stdout).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_name = "FILE")]
    pub program: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_parser = probability)]
    pub delta: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Task file (function type, examples, eps, delta, err, n, grid).
    #[arg(long, value_name = "FILE")]
    pub task: PathBuf,
    /// Labeled DSL examples, one JSON array of inputs per line.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = probability)]
    pub eps: Option<f64>,
    #[arg(long, value_parser = probability)]
    pub delta: Option<f64>,
    /// Output error tolerance.
    #[arg(long)]
    pub err: Option<f64>,
    /// Unrolling bound: a positive integer or "auto".
    #[arg(long)]
    pub n: Option<String>,
    /// Grid levels, comma separated (e.g. 1,3,5).
    #[arg(long)]
    pub grid: Option<String>,
    /// Maximum enumeration depth.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate only the uniform budget split.
    #[arg(long)]
    pub no_search: bool,
    /// Use the zero-mistake threshold estimator.
    #[arg(long)]
    pub k0: bool,
    /// Print the synthesized sketch and stop.
    #[arg(long)]
    pub sketch_only: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Complete program to monitor.
    #[arg(long, value_name = "FILE")]
    pub program: PathBuf,
    /// Read this file as it grows instead of stdin.
    #[arg(long, value_name = "FILE")]
    pub follow: Option<PathBuf>,
    /// Stop following after this many seconds without new data.
    #[arg(long, value_name = "SECS")]
    pub idle_timeout: Option<f64>,
    /// Re-verify every K arrivals.
    #[arg(long, default_value_t = 100)]
    pub refresh: usize,
    /// Minimum window size before the first verdict.
    #[arg(long, default_value_t = 500)]
    pub window: usize,
    /// Drop examples older than T arrivals (default: the window size).
    #[arg(long)]
    pub max_age: Option<usize>,
    #[arg(long, value_parser = probability)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Task file; the program is synthesized from its examples.
    #[arg(long, value_name = "FILE", conflicts_with = "expr")]
    pub task: Option<PathBuf>,
    /// Program source, used with --type.
    #[arg(long, requires = "type_")]
    pub expr: Option<String>,
    /// Curried function type of --expr.
    #[arg(long = "type", value_name = "TYPE")]
    pub type_: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = probability)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub err: Option<f64>,
    #[arg(long)]
    pub grid: Option<String>,
    /// Print the analysis as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(subcommand)]
    pub suite: Suite,
}

#[derive(Debug, Args, Clone)]
pub struct McArgs {
    /// Samples per trial.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_parser = probability)]
    pub eps: Option<f64>,
    #[arg(long, value_parser = probability)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Suite {
    /// Coverage of the threshold estimator under a known distribution.
    Threshold {
        /// uniform:LOW,HIGH | normal:MEAN,SD | exponential:RATE
        #[arg(long, default_value = "uniform:0,1")]
        dist: String,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Lower confidence bound on a Bernoulli mean.
    LowerBound {
        #[arg(long)]
        mu: f64,
        #[command(flatten)]
        mc: McArgs,
    },
    /// False accepts of the verifier (or power when mu >= 1 - eps).
    Verifier {
        #[arg(long)]
        mu: f64,
        #[command(flatten)]
        mc: McArgs,
    },
    /// End-to-end sketching of a three-hole program.
    Sketch {
        #[command(flatten)]
        mc: McArgs,
    },
    /// Shift detection by re-verification on windows.
    Shift {
        #[arg(long, default_value_t = 0.99)]
        base_accuracy: f64,
        #[arg(long, default_value_t = 0.8)]
        shifted_accuracy: f64,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Synthesis benchmarks: abstention and failure rates per mode.
    Benchmark {
        /// Task names (default: all).
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [BenchModeArg::Search, BenchModeArg::NoSearch, BenchModeArg::K0])]
        modes: Vec<BenchModeArg>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 5000)]
        train: usize,
        #[arg(long, default_value_t = 5000)]
        eval: usize,
        #[arg(long, default_value_t = 0.99)]
        accuracy: f64,
        /// Print JSON reports instead of the table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchModeArg {
    Search,
    NoSearch,
    K0,
}

impl std::fmt::Display for BenchModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Debug, Args, Clone)]
pub struct GenCommon {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.99)]
    pub accuracy: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// Synthetic image records (one per line).
    Records {
        #[command(flatten)]
        common: GenCommon,
    },
    /// Random inputs for a task's function type.
    Examples {
        #[arg(long, value_name = "FILE")]
        task: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_len: usize,
        #[command(flatten)]
        common: GenCommon,
    },
    /// Classifier valuations (x.pred, x.conf, truth x.truth).
    Classifier {
        /// Switch to --shifted-accuracy after this many records.
        #[arg(long)]
        shift_after: Option<usize>,
        #[arg(long, default_value_t = 0.8)]
        shifted_accuracy: f64,
        #[command(flatten)]
        common: GenCommon,
    },
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly between 0 and 1"))
    }
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
        Ok(commands::Outcome::Pass) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Warn) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
