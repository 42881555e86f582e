//! `codecache` command-line tool.
//!
//! Exit status: 0 on success, 2 for configuration or usage errors,
//! 3 when training diverges, 1 for any other failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codecache::agent::load_checkpoint;
use codecache::experiment::{
    emit_trace, parse_config, run_bench_runtime, run_compare, run_eval, run_train, write_runtime, Algorithm, BenchSpec,
    ExperimentConfig, CHECKPOINT_FILE, COMPARE_FILE, EVAL_FILE, TRACE_FILE,
};
use codecache::Error;

#[derive(Parser)]
#[command(name = "codecache", version, about = "Coded-caching delivery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the agent; writes training_curve.csv and checkpoint.txt.
    Train(Common),
    /// Greedy-mode agent evaluation; writes eval.csv.
    Eval(Common),
    /// All selected algorithms on one paired instance set; writes compare.csv.
    Compare(Common),
    /// Inference runtime versus number of users; writes runtime.csv.
    Bench(BenchArgs),
    /// One episode as JSON lines; writes trace.jsonl.
    Trace(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "F")]
    f: Option<usize>,
    /// Comma-separated subset of uncoded,gcm,greedy,oracle,agent.
    #[arg(long)]
    algs: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long = "eval-episodes")]
    eval_episodes: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut pairs = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.push((key.to_string(), v));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("K", self.k.map(|v| v.to_string()));
        push("N", self.n.map(|v| v.to_string()));
        push("M", self.m.map(|v| v.to_string()));
        push("F", self.f.map(|v| v.to_string()));
        push("algorithms", self.algs.clone());
        push("iterations", self.iterations.map(|v| v.to_string()));
        push("eval_episodes", self.eval_episodes.map(|v| v.to_string()));
        pairs
    }

    fn config(&self) -> Result<ExperimentConfig, Error> {
        parse_config(self.config.as_deref(), &self.overrides())
    }

    fn checkpoint_path(&self, config: &ExperimentConfig) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| config.out.join(CHECKPOINT_FILE))
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Smallest number of users.
    #[arg(long = "k-min", default_value_t = 5)]
    k_min: usize,
    /// Largest number of users.
    #[arg(long = "k-max", default_value_t = 10)]
    k_max: usize,
    #[arg(long = "M", default_value_t = 3)]
    m: usize,
    #[arg(long = "F", default_value_t = 2)]
    f: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Instances timed per repetition.
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value = "greedy,oracle,agent")]
    algs: String,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInstance(_) | Error::Usage(_) => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn parse_algs(list: &str) -> Result<Vec<Algorithm>, Error> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e: String| Error::Config(format!("`algorithms`: {e}")))
        })
        .collect()
}

fn load(path: &Path) -> Result<codecache::agent::PolicyParams, Error> {
    load_checkpoint(path).map_err(|e| match e {
        Error::Io(io) => Error::Usage(format!("cannot read checkpoint {}: {io}", path.display())),
        other => other,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => {
            let config = args.config()?;
            let report = run_train(&config)?;
            let last = report.curve.last();
            println!(
                "trained {} iterations; final mean_delay {}; wrote {} and {}",
                report.curve.len(),
                last.map(|r| r.mean_delay).unwrap_or(f64::NAN),
                report.curve_path.display(),
                report.checkpoint_path.display()
            );
        }
        Command::Eval(args) => {
            let config = args.config()?;
            let params = load(&args.checkpoint_path(&config))?;
            let eval = run_eval(&config, &params)?;
            println!(
                "mean_delay {} over {} episodes (capped {}); wrote {}",
                eval.mean_delay,
                eval.delays.len(),
                eval.capped_fraction(),
                config.out.join(EVAL_FILE).display()
            );
        }
        Command::Compare(args) => {
            let config = args.config()?;
            let params = match (&args.checkpoint, config.has(Algorithm::Agent)) {
                (Some(path), true) => Some(load(path)?),
                _ => None,
            };
            let rows = run_compare(&config, params.as_ref())?;
            for r in &rows {
                if r.skipped {
                    println!("{:8} skipped", r.algorithm.name());
                } else {
                    println!("{:8} {:.4} +- {:.4}", r.algorithm.name(), r.mean_delay, r.std_delay);
                }
            }
            println!("wrote {}", config.out.join(COMPARE_FILE).display());
        }
        Command::Bench(args) => {
            if args.k_min == 0 || args.k_min > args.k_max {
                return Err(Error::Config(format!("bad user range {}..{}", args.k_min, args.k_max)));
            }
            let spec = BenchSpec {
                users: (args.k_min..=args.k_max).collect(),
                cache_files: args.m,
                file_bits: args.f,
                reps: args.reps,
                instances: args.instances,
                algorithms: parse_algs(&args.algs)?,
                ..BenchSpec::new(args.seed)
            };
            let rows = run_bench_runtime(&spec)?;
            let path = write_runtime(&rows, &args.out)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        Command::Trace(args) => {
            let config = args.config()?;
            let algorithm = match config.algorithms.as_slice() {
                [only] => *only,
                _ if args.algs.is_none() => Algorithm::Agent,
                _ => return Err(Error::Usage("trace takes exactly one algorithm".into())),
            };
            let params = if algorithm == Algorithm::Agent {
                Some(load(&args.checkpoint_path(&config))?)
            } else {
                None
            };
            let (_, records) = emit_trace(&config, algorithm, params.as_ref())?;
            println!(
                "{} broadcasts; wrote {}",
                records.len(),
                config.out.join(TRACE_FILE).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
