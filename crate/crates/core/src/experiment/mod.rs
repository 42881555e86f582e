//! Experiment harness behind the command-line tool.

mod config;
mod run;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub use config::{parse_config, parse_config_str, parse_pairs, Algorithm, ExperimentConfig, Placement};
pub use run::{
    compare_csv, curve_csv, emit_trace, eval_instances, median, run_bench_runtime, run_compare, run_eval, run_train,
    runtime_csv, stream_rng, train_agent, write_runtime, BenchSpec, ComparisonRow, RuntimeRow, TrainReport,
    CHECKPOINT_FILE, COMPARE_FILE, CURVE_FILE, EVAL_FILE, RUNTIME_FILE, TRACE_FILE,
};

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Population standard deviation; zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}
