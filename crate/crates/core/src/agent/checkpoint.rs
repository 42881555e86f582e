//! Plain-text checkpoints.
//!
//! ```text
//! codecache-checkpoint 1
//! dims <N> <K> <F> <M>
//! actor <in> <h1> <h2> <out>
//! critic <in> <h1> <h2> 1
//! iteration <i>
//! params <count>
//! <actor parameters, then critic parameters>
//! ```
//!
//! Each network's parameters are listed layer by layer: the `in x out`
//! weights row-major (input-major), then the `out` biases. Values are printed
//! with 17 significant digits, which round-trips every `f64` exactly.
//! Optimizer moments are not stored.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Mlp, PolicyParams};
use crate::error::{Error, Result};
use crate::model::ProblemInstance;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "codecache-checkpoint";

pub fn write_checkpoint(params: &PolicyParams, out: &mut impl Write) -> Result<()> {
    let i = params.instance();
    let sizes = |m: &Mlp| m.sizes().iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
    writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(
        out,
        "dims {} {} {} {}",
        i.num_files(),
        i.num_users(),
        i.file_bits(),
        i.cache_files()
    )?;
    writeln!(out, "actor {}", sizes(&params.actor))?;
    writeln!(out, "critic {}", sizes(&params.critic))?;
    writeln!(out, "iteration {}", params.iteration)?;
    let values: Vec<f64> = params
        .actor
        .params()
        .iter()
        .chain(params.critic.params())
        .copied()
        .collect();
    writeln!(out, "params {}", values.len())?;
    for chunk in values.chunks(8) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn header<'a>(line: Option<&'a str>, key: &str) -> Result<Vec<&'a str>> {
    let line = line.ok_or_else(|| Error::Checkpoint(format!("missing `{key}` line")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::Checkpoint(format!("expected `{key}` line, found `{line}`")));
    }
    Ok(parts.collect())
}

fn numbers(fields: &[&str], what: &str) -> Result<Vec<usize>> {
    fields
        .iter()
        .map(|f| {
            f.parse()
                .map_err(|_| Error::Checkpoint(format!("bad {what} value `{f}`")))
        })
        .collect()
}

pub fn read_checkpoint(text: &str) -> Result<PolicyParams> {
    let mut lines = text.lines();
    let magic = header(lines.next(), MAGIC)?;
    if magic != [CHECKPOINT_VERSION.to_string().as_str()] {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {magic:?}")));
    }
    let dims = numbers(&header(lines.next(), "dims")?, "dims")?;
    let [n, k, f, m] = dims[..] else {
        return Err(Error::Checkpoint("dims needs N K F M".into()));
    };
    let instance = ProblemInstance::new(n, k, f, m).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let actor_sizes = numbers(&header(lines.next(), "actor")?, "actor")?;
    let critic_sizes = numbers(&header(lines.next(), "critic")?, "critic")?;
    let iteration = numbers(&header(lines.next(), "iteration")?, "iteration")?;
    let count = numbers(&header(lines.next(), "params")?, "params")?;
    let (Some(&iteration), Some(&count)) = (iteration.first(), count.first()) else {
        return Err(Error::Checkpoint("missing iteration or parameter count".into()));
    };

    let values = lines
        .flat_map(str::split_whitespace)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("bad parameter `{v}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != count {
        return Err(Error::Checkpoint(format!(
            "expected {count} parameters, found {}",
            values.len()
        )));
    }
    if actor_sizes.len() < 2 || critic_sizes.len() < 2 {
        return Err(Error::Checkpoint("network needs at least two layer sizes".into()));
    }
    if actor_sizes[0] != instance.observation_len() || *actor_sizes.last().unwrap() != instance.action_len() {
        return Err(Error::Checkpoint(format!(
            "actor sizes {actor_sizes:?} do not match {instance}"
        )));
    }
    let probe = Mlp::zeros(&actor_sizes).params().len();
    if probe > values.len() {
        return Err(Error::Checkpoint("too few parameters for the actor".into()));
    }
    let (a, c) = values.split_at(probe);
    let actor = Mlp::from_params(&actor_sizes, a.to_vec())
        .ok_or_else(|| Error::Checkpoint("actor parameter count mismatch".into()))?;
    let critic = Mlp::from_params(&critic_sizes, c.to_vec())
        .ok_or_else(|| Error::Checkpoint("critic parameter count mismatch".into()))?;
    let mut params = PolicyParams::from_networks(instance, actor, critic);
    params.iteration = iteration;
    Ok(params)
}

pub fn save_checkpoint(params: &PolicyParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    crate::experiment::write_atomic(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    read_checkpoint(&fs::read_to_string(path)?)
}
