//! Subcommand bodies: each one reads an [`ExperimentConfig`], does its work
//! and writes its CSV or trace file under `config.out`.
//!
//! Random streams are derived from `config.seed`, one ChaCha stream per
//! purpose, so evaluation instances do not depend on how long training ran.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, ExperimentConfig};
use super::{std_dev, write_atomic};
use crate::agent::{
    evaluate, run_episode, save_checkpoint, train_with, ActionMode, CurveRecord, Evaluation, PolicyParams,
};
use crate::baselines::Baseline;
use crate::error::{Error, Result};
use crate::model::{DeliveryProblem, ProblemInstance};
use crate::sampler::{draw, InstanceSampler, RandomPlacement};
use crate::trace::{schedule_trace, write_trace, TraceRecord};

pub const CURVE_FILE: &str = "training_curve.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const EVAL_FILE: &str = "eval.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const RUNTIME_FILE: &str = "runtime.csv";
pub const TRACE_FILE: &str = "trace.jsonl";

const TRAIN_STREAM: u64 = 0;
const INSTANCE_STREAM: u64 = 1;
const AGENT_EVAL_STREAM: u64 = 2;
const BENCH_STREAM: u64 = 3;
const TRACE_STREAM: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The paired evaluation set shared by every algorithm.
pub fn eval_instances(config: &ExperimentConfig) -> Result<Vec<DeliveryProblem>> {
    let mut sampler = config.sampler()?;
    draw(
        sampler.as_mut(),
        config.eval_episodes,
        &mut stream_rng(config.seed, INSTANCE_STREAM),
    )
}

fn check_agent(params: &PolicyParams, sampler: &dyn InstanceSampler) -> Result<()> {
    if params.instance() != &sampler.pruned_instance() {
        return Err(Error::Config(format!(
            "checkpoint was trained for {}, config needs {}",
            params.instance(),
            sampler.pruned_instance()
        )));
    }
    Ok(())
}

fn csv_float(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: PolicyParams,
    pub curve: Vec<CurveRecord>,
    pub curve_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

pub fn curve_csv(curve: &[CurveRecord]) -> String {
    let mut out = String::from("iteration,mean_delay,mean_reward,mean_entropy,lr\n");
    for r in curve {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            csv_float(r.mean_delay),
            csv_float(r.mean_reward),
            csv_float(r.mean_entropy),
            csv_float(r.lr)
        );
    }
    out
}

/// Trains from scratch, then writes the curve and the final checkpoint.
pub fn run_train(config: &ExperimentConfig) -> Result<TrainReport> {
    train_agent(config, &mut |_, _| {})
}

/// [`run_train`] with a per-iteration callback.
pub fn train_agent(
    config: &ExperimentConfig,
    on_record: &mut dyn FnMut(&CurveRecord, &PolicyParams),
) -> Result<TrainReport> {
    let mut sampler = config.sampler()?;
    let mut rng = stream_rng(config.seed, TRAIN_STREAM);
    let mut params = PolicyParams::init(&sampler.pruned_instance(), &mut rng);
    let curve = train_with(&mut params, sampler.as_mut(), &config.train, &mut rng, on_record)?;
    let curve_path = config.out.join(CURVE_FILE);
    let checkpoint_path = config.out.join(CHECKPOINT_FILE);
    write_atomic(&curve_path, curve_csv(&curve).as_bytes())?;
    save_checkpoint(&params, &checkpoint_path)?;
    Ok(TrainReport {
        params,
        curve,
        curve_path,
        checkpoint_path,
    })
}

/// Greedy-mode evaluation of `params` on the paired instance set; writes
/// one `episode,delay,capped` row per instance.
pub fn run_eval(config: &ExperimentConfig, params: &PolicyParams) -> Result<Evaluation> {
    let sampler = config.sampler()?;
    check_agent(params, sampler.as_ref())?;
    let problems = eval_instances(config)?;
    let mut rng = stream_rng(config.seed, AGENT_EVAL_STREAM);
    let eval = evaluate(
        params,
        &problems,
        ActionMode::Greedy,
        config.train.episode_cap,
        &mut rng,
    )?;
    let mut out = String::from("episode,delay,capped\n");
    for (i, d) in eval.delays.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", csv_float(d.value), d.capped as u8);
    }
    write_atomic(&config.out.join(EVAL_FILE), out.as_bytes())?;
    Ok(eval)
}

/// One line of `compare.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub mean_delay: f64,
    pub std_delay: f64,
    /// Episodes that hit the step cap; always 0 for the planners.
    pub capped_frac: f64,
    pub seconds: f64,
    /// Set when the oracle could not handle every instance.
    pub skipped: bool,
}

impl ComparisonRow {
    fn skipped(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            mean_delay: 0.0,
            std_delay: 0.0,
            capped_frac: 0.0,
            seconds: 0.0,
            skipped: true,
        }
    }
}

pub fn compare_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("algorithm,mean_delay,std_delay,capped_frac,seconds\n");
    for r in rows {
        if r.skipped {
            let _ = writeln!(out, "{},skipped,skipped,skipped,skipped", r.algorithm);
        } else {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.algorithm,
                csv_float(r.mean_delay),
                csv_float(r.std_delay),
                csv_float(r.capped_frac),
                csv_float(r.seconds)
            );
        }
    }
    out
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Every configured algorithm on the same instance list. Without a
/// checkpoint the agent is trained first (training time not counted).
pub fn run_compare(config: &ExperimentConfig, agent: Option<&PolicyParams>) -> Result<Vec<ComparisonRow>> {
    let problems = eval_instances(config)?;
    let f = config.instance.file_bits();
    let mut rows = Vec::with_capacity(config.algorithms.len());
    for &alg in &config.algorithms {
        let row = match alg {
            Algorithm::Baseline(b) => {
                if b == Baseline::Oracle && !oracle_fits(&problems, config.oracle_budget) {
                    rows.push(ComparisonRow::skipped(alg));
                    continue;
                }
                let start = Instant::now();
                let delays = problems
                    .iter()
                    .map(|p| b.plan(p, config.oracle_budget).map(|s| s.delay(f)))
                    .collect::<Result<Vec<_>>>()?;
                let seconds = start.elapsed().as_secs_f64();
                ComparisonRow {
                    algorithm: alg,
                    mean_delay: mean(&delays),
                    std_delay: std_dev(&delays),
                    capped_frac: 0.0,
                    seconds,
                    skipped: false,
                }
            }
            Algorithm::Agent => {
                let trained;
                let params = match agent {
                    Some(p) => p,
                    None if fully_cached(config) => {
                        // Every delay is zero whatever the weights.
                        trained = PolicyParams::init(
                            &config.sampler()?.pruned_instance(),
                            &mut stream_rng(config.seed, TRAIN_STREAM),
                        );
                        &trained
                    }
                    None => {
                        trained = train_agent(config, &mut |_, _| {})?.params;
                        &trained
                    }
                };
                check_agent(params, config.sampler()?.as_ref())?;
                let mut rng = stream_rng(config.seed, AGENT_EVAL_STREAM);
                let start = Instant::now();
                let eval = evaluate(
                    params,
                    &problems,
                    ActionMode::Greedy,
                    config.train.episode_cap,
                    &mut rng,
                )?;
                let seconds = start.elapsed().as_secs_f64();
                ComparisonRow {
                    algorithm: alg,
                    mean_delay: eval.mean_delay,
                    std_delay: eval.std_delay(),
                    capped_frac: eval.capped_fraction(),
                    seconds,
                    skipped: false,
                }
            }
        };
        rows.push(row);
    }
    write_atomic(&config.out.join(COMPARE_FILE), compare_csv(&rows).as_bytes())?;
    Ok(rows)
}

fn fully_cached(config: &ExperimentConfig) -> bool {
    config.instance.cache_files() >= config.instance.num_files()
}

fn oracle_fits(problems: &[DeliveryProblem], budget: usize) -> bool {
    problems.iter().all(|p| {
        let n = p.requests().outstanding_pairs();
        n <= budget && n <= 64
    })
}

/// Settings of the runtime benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub users: Vec<usize>,
    pub cache_files: usize,
    pub file_bits: usize,
    pub reps: usize,
    /// Instances timed together in each repetition.
    pub instances: usize,
    pub algorithms: Vec<Algorithm>,
    pub oracle_budget: usize,
    pub episode_cap: usize,
    pub seed: u64,
}

impl BenchSpec {
    /// `K = 5..=10`, `M = 3`, `F = 2`, 5 repetitions.
    pub fn new(seed: u64) -> Self {
        Self {
            users: (5..=10).collect(),
            cache_files: 3,
            file_bits: 2,
            reps: 5,
            instances: 10,
            algorithms: vec![
                Algorithm::Baseline(Baseline::Greedy),
                Algorithm::Baseline(Baseline::Oracle),
                Algorithm::Agent,
            ],
            oracle_budget: crate::baselines::DEFAULT_VERTEX_BUDGET,
            episode_cap: crate::env::DEFAULT_EPISODE_CAP,
            seed,
        }
    }
}

/// One line of `runtime.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub users: usize,
    pub algorithm: Algorithm,
    /// Median over repetitions, per instance.
    pub median_seconds: f64,
    pub reps: usize,
    pub skipped: bool,
}

pub fn runtime_csv(rows: &[RuntimeRow]) -> String {
    let mut out = String::from("K,algorithm,median_seconds,reps\n");
    for r in rows {
        let secs = if r.skipped {
            "skipped".to_string()
        } else {
            csv_float(r.median_seconds)
        };
        let _ = writeln!(out, "{},{},{},{}", r.users, r.algorithm, secs, r.reps);
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Inference time per instance for `N = K` systems.
///
/// The agent is timed with freshly initialized weights in greedy mode over
/// full episodes; per-step cost does not depend on the weight values.
/// Planners are timed on schedule construction, graph building included.
/// The oracle only runs on the instances within its vertex budget and is
/// skipped for a `K` where none fit.
pub fn run_bench_runtime(spec: &BenchSpec) -> Result<Vec<RuntimeRow>> {
    if spec.reps == 0 || spec.instances == 0 {
        return Err(Error::Config("reps and instances must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &k in &spec.users {
        let instance = ProblemInstance::new(k, k, spec.file_bits, spec.cache_files)
            .map_err(|e| Error::Config(format!("`M`: {e}")))?;
        let mut rng = stream_rng(spec.seed ^ k as u64, BENCH_STREAM);
        let mut sampler = RandomPlacement::new(instance)?;
        let problems = draw(&mut sampler, spec.instances, &mut rng)?;
        let params = PolicyParams::init(&sampler.pruned_instance(), &mut rng);
        for &alg in &spec.algorithms {
            let timed: Vec<&DeliveryProblem> = if alg == Algorithm::Baseline(Baseline::Oracle) {
                problems
                    .iter()
                    .filter(|p| oracle_fits(std::slice::from_ref(*p), spec.oracle_budget))
                    .collect()
            } else {
                problems.iter().collect()
            };
            if timed.is_empty() {
                rows.push(RuntimeRow {
                    users: k,
                    algorithm: alg,
                    median_seconds: 0.0,
                    reps: spec.reps,
                    skipped: true,
                });
                continue;
            }
            let mut times = Vec::with_capacity(spec.reps);
            for _ in 0..spec.reps {
                let mut episode_rng = stream_rng(spec.seed, AGENT_EVAL_STREAM);
                let start = Instant::now();
                for &p in &timed {
                    match alg {
                        Algorithm::Baseline(b) => {
                            std::hint::black_box(b.plan(p, spec.oracle_budget)?);
                        }
                        Algorithm::Agent => {
                            let run = run_episode(
                                &params,
                                p.clone(),
                                ActionMode::Greedy,
                                spec.episode_cap,
                                &mut episode_rng,
                                |_, _| {},
                            )?;
                            std::hint::black_box(run);
                        }
                    }
                }
                times.push(start.elapsed().as_secs_f64() / timed.len() as f64);
            }
            rows.push(RuntimeRow {
                users: k,
                algorithm: alg,
                median_seconds: median(&mut times),
                reps: spec.reps,
                skipped: false,
            });
        }
    }
    Ok(rows)
}

pub fn write_runtime(rows: &[RuntimeRow], out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join(RUNTIME_FILE);
    write_atomic(&path, runtime_csv(rows).as_bytes())?;
    Ok(path)
}

/// Per-broadcast records of one episode on the first evaluation instance.
/// The agent plays greedily; planners are replayed.
pub fn emit_trace(
    config: &ExperimentConfig,
    algorithm: Algorithm,
    params: Option<&PolicyParams>,
) -> Result<(DeliveryProblem, Vec<TraceRecord>)> {
    let mut sampler = config.sampler()?;
    let problem = sampler.sample(&mut stream_rng(config.seed, TRACE_STREAM))?;
    let records = match algorithm {
        Algorithm::Baseline(b) => schedule_trace(&problem, &b.plan(&problem, config.oracle_budget)?),
        Algorithm::Agent => {
            let params = params.ok_or_else(|| Error::Usage("tracing the agent needs a checkpoint".into()))?;
            check_agent(params, sampler.as_ref())?;
            let mut records = Vec::new();
            let mut rng = stream_rng(config.seed, AGENT_EVAL_STREAM);
            run_episode(
                params,
                problem.clone(),
                ActionMode::Greedy,
                config.train.episode_cap,
                &mut rng,
                |t, o| records.push(TraceRecord::from_outcome(t, o)),
            )?;
            records
        }
    };
    let mut buf = Vec::new();
    write_trace(&records, &mut buf)?;
    write_atomic(&config.out.join(TRACE_FILE), &buf)?;
    Ok((problem, records))
}
