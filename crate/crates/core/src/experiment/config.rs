//! `key = value` experiment configuration.
//!
//! ```text
//! # training run
//! K = 4
//! N = 4
//! M = 1
//! F = 2
//! algorithms = gcm, greedy, agent
//! ```
//!
//! `K`, `N`, `M` and `F` are required; every other key has a default.
//! Command-line flags are applied as extra `(key, value)` pairs after the
//! file and replace its values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::{Optimizer, TrainConfig};
use crate::baselines::{Baseline, DEFAULT_VERTEX_BUDGET};
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::sampler::{InstanceSampler, RandomPlacement, SegmentPlacement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Baseline(Baseline),
    Agent,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Baseline(Baseline::Uncoded),
        Algorithm::Baseline(Baseline::Gcm),
        Algorithm::Baseline(Baseline::Greedy),
        Algorithm::Baseline(Baseline::Oracle),
        Algorithm::Agent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Baseline(b) => b.name(),
            Algorithm::Agent => "agent",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected uncoded, gcm, greedy, oracle or agent)"))
    }
}

/// How user caches are filled before delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Random,
    /// Cyclic segment placement; needs `N = K` and `K | F`.
    Segment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: ProblemInstance,
    pub placement: Placement,
    pub eval_episodes: usize,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub oracle_budget: usize,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn has(&self, algorithm: Algorithm) -> bool {
        self.algorithms.contains(&algorithm)
    }

    pub fn sampler(&self) -> Result<Box<dyn InstanceSampler>> {
        Ok(match self.placement {
            Placement::Random => Box::new(RandomPlacement::new(self.instance)?),
            Placement::Segment => Box::new(SegmentPlacement::new(self.instance)?),
        })
    }
}

const REQUIRED: [&str; 4] = ["K", "N", "M", "F"];

const OPTIONAL: [&str; 16] = [
    "placement",
    "iterations",
    "eval_episodes",
    "algorithms",
    "seed",
    "oracle_budget",
    "batch_steps",
    "entropy_coef",
    "lr0",
    "lr_decay",
    "lr_decay_every",
    "gamma",
    "episode_cap",
    "value_loss_coef",
    "optimizer",
    "out",
];

fn config_err(msg: String) -> Error {
    Error::Config(msg)
}

/// Splits a config file into `key -> value`, rejecting unknown and
/// repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut seen: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        check_known(key).map_err(|e| config_err(format!("line {}: {e}", n + 1)))?;
        if let Some((_, first)) = seen.get(key) {
            return Err(config_err(format!(
                "duplicate key `{key}` on lines {first} and {}",
                n + 1
            )));
        }
        seen.insert(key.to_string(), (value.to_string(), n + 1));
    }
    Ok(seen.into_iter().map(|(k, (v, _))| (k, v)).collect())
}

fn check_known(key: &str) -> std::result::Result<(), String> {
    if REQUIRED.contains(&key) || OPTIONAL.contains(&key) {
        Ok(())
    } else {
        Err(format!("unknown key `{key}`"))
    }
}

/// Parses the optional file, applies `overrides` in order and validates.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut pairs = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
            parse_pairs(&text)?
        }
        None => BTreeMap::new(),
    };
    for (key, value) in overrides {
        check_known(key).map_err(config_err)?;
        pairs.insert(key.clone(), value.clone());
    }
    from_pairs(&pairs)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    from_pairs(&parse_pairs(text)?)
}

fn value<T: FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    pairs
        .get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| config_err(format!("invalid value `{v}` for `{key}`: {e}")))
        })
        .transpose()
}

fn required(pairs: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    value(pairs, key)?.ok_or_else(|| config_err(format!("missing required key `{key}`")))
}

fn invariant(key: &str, msg: impl fmt::Display) -> Error {
    config_err(format!("`{key}`: {msg}"))
}

fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
    if let Some(key) = pairs.keys().find(|k| check_known(k).is_err()) {
        return Err(config_err(format!("unknown key `{key}`")));
    }
    let [k, n, m, f] = REQUIRED.map(|key| required(pairs, key));
    let (k, n, m, f) = (k?, n?, m?, f?);
    if f == 0 {
        return Err(invariant("F", "file size must be at least 1 bit"));
    }
    if k == 0 {
        return Err(invariant("K", "need at least one user"));
    }
    if m > n {
        return Err(invariant("M", format!("cache exceeds library (M={m} > N={n})")));
    }
    if k > n {
        return Err(invariant("K", format!("distinct demands need K <= N (K={k}, N={n})")));
    }
    let instance = ProblemInstance::new(n, k, f, m).map_err(|e| invariant("K", e))?;

    let placement = match pairs.get("placement").map(String::as_str) {
        None | Some("random") => Placement::Random,
        Some("segment") => {
            if n != k || f % k != 0 {
                return Err(invariant(
                    "placement",
                    "segment placement needs N = K and F divisible by K",
                ));
            }
            Placement::Segment
        }
        Some(other) => {
            return Err(invariant(
                "placement",
                format!("expected random or segment, got `{other}`"),
            ))
        }
    };

    let algorithms = match pairs.get("algorithms") {
        None => Algorithm::ALL.to_vec(),
        Some(list) => {
            let mut algs = Vec::new();
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let alg: Algorithm = name.parse().map_err(|e| invariant("algorithms", e))?;
                if algs.contains(&alg) {
                    return Err(invariant("algorithms", format!("`{alg}` listed twice")));
                }
                algs.push(alg);
            }
            if algs.is_empty() {
                return Err(invariant("algorithms", "empty list"));
            }
            algs
        }
    };

    let defaults = TrainConfig::default();
    let optimizer = match pairs.get("optimizer").map(String::as_str) {
        None | Some("adam") => Optimizer::default(),
        Some("sgd") => Optimizer::Sgd,
        Some(other) => return Err(invariant("optimizer", format!("expected adam or sgd, got `{other}`"))),
    };
    let train = TrainConfig {
        iterations: value(pairs, "iterations")?.unwrap_or(defaults.iterations),
        batch_steps: value(pairs, "batch_steps")?.unwrap_or(defaults.batch_steps),
        entropy_coef: value(pairs, "entropy_coef")?.unwrap_or(defaults.entropy_coef),
        lr0: value(pairs, "lr0")?.unwrap_or(defaults.lr0),
        lr_decay: value(pairs, "lr_decay")?.unwrap_or(defaults.lr_decay),
        lr_decay_every: value(pairs, "lr_decay_every")?.unwrap_or(defaults.lr_decay_every),
        gamma: value(pairs, "gamma")?.unwrap_or(defaults.gamma),
        episode_cap: value(pairs, "episode_cap")?.unwrap_or(defaults.episode_cap),
        value_loss_coef: value(pairs, "value_loss_coef")?.unwrap_or(defaults.value_loss_coef),
        optimizer,
    };
    train.validate()?;

    let eval_episodes = value(pairs, "eval_episodes")?.unwrap_or(200);
    if eval_episodes == 0 {
        return Err(invariant("eval_episodes", "must be at least 1"));
    }
    Ok(ExperimentConfig {
        instance,
        placement,
        eval_episodes,
        algorithms,
        seed: value(pairs, "seed")?.unwrap_or(0),
        oracle_budget: value(pairs, "oracle_budget")?.unwrap_or(DEFAULT_VERTEX_BUDGET),
        train,
        out: pairs
            .get("out")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out")),
    })
}
