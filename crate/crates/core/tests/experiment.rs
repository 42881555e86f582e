use std::fs;
use std::io::BufReader;

use codecache::agent::{load_checkpoint, PolicyParams};
use codecache::baselines::{replay_schedule, Baseline, Schedule};
use codecache::experiment::{
    compare_csv, emit_trace, eval_instances, parse_config_str, run_bench_runtime, run_compare, run_eval, run_train,
    Algorithm, BenchSpec, ExperimentConfig, COMPARE_FILE, CURVE_FILE, TRACE_FILE,
};
use codecache::trace::read_trace;
use codecache::CodedPacket;

fn config(text: &str, dir: &tempfile::TempDir) -> ExperimentConfig {
    let mut c = parse_config_str(text).unwrap();
    c.out = dir.path().to_path_buf();
    c
}

#[test]
fn train_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("K=2\nN=3\nM=1\nF=2\niterations=10\nbatch_steps=50\nseed=5", &dir);
    let report = run_train(&c).unwrap();
    let csv = fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iteration,mean_delay,mean_reward,mean_entropy,lr");
    assert_eq!(lines.len(), 11);
    assert!(lines[1].starts_with("0,"));

    let loaded = load_checkpoint(&report.checkpoint_path).unwrap();
    assert_eq!(loaded.iteration, 10);
    assert_eq!(loaded.actor, report.params.actor);
}

#[test]
fn train_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let text = "K=3\nN=3\nM=1\nF=2\niterations=4\nbatch_steps=60\nseed=8";
    run_train(&config(text, &a)).unwrap();
    run_train(&config(text, &b)).unwrap();
    for file in [CURVE_FILE, "checkpoint.txt"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap()
        );
    }
}

#[test]
fn full_caches_give_zero_delay_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(
        "K=3\nN=3\nM=3\nF=2\neval_episodes=10\niterations=1\nbatch_steps=20",
        &dir,
    );
    let rows = run_compare(&c, None).unwrap();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!(!r.skipped);
        assert_eq!(
            (r.mean_delay, r.std_delay, r.capped_frac),
            (0.0, 0.0, 0.0),
            "{}",
            r.algorithm
        );
    }
}

#[test]
fn forced_coding_family() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(
        "K=2\nN=2\nM=1\nF=2\nplacement=segment\neval_episodes=8\nalgorithms=uncoded,gcm,greedy,oracle",
        &dir,
    );
    let rows = run_compare(&c, None).unwrap();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_delay).collect();
    assert_eq!(means, vec![1.0, 0.5, 0.5, 0.5]);

    let csv = fs::read_to_string(dir.path().join(COMPARE_FILE)).unwrap();
    assert_eq!(csv, compare_csv(&rows));
    assert!(csv.starts_with("algorithm,mean_delay,std_delay,capped_frac,seconds\nuncoded,1,0,0,"));
}

#[test]
fn oversize_oracle_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(
        "K=4\nN=4\nM=0\nF=4\neval_episodes=3\nalgorithms=gcm,oracle\noracle_budget=6",
        &dir,
    );
    let rows = run_compare(&c, None).unwrap();
    assert!(!rows[0].skipped && rows[1].skipped);
    assert!(fs::read_to_string(dir.path().join(COMPARE_FILE))
        .unwrap()
        .contains("oracle,skipped"));
}

#[test]
fn comparison_is_paired() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("K=3\nN=5\nM=2\nF=3\neval_episodes=30\nseed=4", &dir);
    assert_eq!(eval_instances(&c).unwrap(), eval_instances(&c).unwrap());

    // Every planner row equals planning the shared list directly.
    let problems = eval_instances(&c).unwrap();
    let rows = run_compare(
        &config(
            "K=3\nN=5\nM=2\nF=3\neval_episodes=30\nseed=4\nalgorithms=gcm,greedy",
            &dir,
        ),
        None,
    )
    .unwrap();
    for (row, b) in rows.iter().zip([Baseline::Gcm, Baseline::Greedy]) {
        let direct: f64 = problems.iter().map(|p| b.plan(p, 14).unwrap().delay(3)).sum::<f64>() / 30.0;
        assert!((row.mean_delay - direct).abs() < 1e-12);
    }
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("K=3\nN=3\nM=1\nF=2", &dir);
    let other = PolicyParams::init(
        &codecache::ProblemInstance::new(2, 2, 2, 1).unwrap(),
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
    );
    assert!(matches!(run_eval(&c, &other), Err(codecache::Error::Config(_))));
}

#[test]
fn traces_replay_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("K=3\nN=3\nM=1\nF=2\nseed=2\niterations=3\nbatch_steps=40", &dir);
    for b in [Baseline::Uncoded, Baseline::Gcm, Baseline::Greedy, Baseline::Oracle] {
        let (problem, records) = emit_trace(&c, Algorithm::Baseline(b), None).unwrap();
        let schedule = Schedule::new(records.iter().map(|r| r.packet()).collect::<Vec<CodedPacket>>());
        assert!(replay_schedule(&problem, &schedule).valid);
        let file = fs::File::open(dir.path().join(TRACE_FILE)).unwrap();
        assert_eq!(read_trace(BufReader::new(file)).unwrap(), records);
    }

    let params = run_train(&c).unwrap().params;
    let (problem, first) = emit_trace(&c, Algorithm::Agent, Some(&params)).unwrap();
    let (_, second) = emit_trace(&c, Algorithm::Agent, Some(&params)).unwrap();
    assert_eq!(first, second);
    assert!(first
        .iter()
        .enumerate()
        .all(|(i, r)| r.t == i + 1 && r.reward.is_some()));
    let schedule = Schedule::new(first.iter().map(|r| r.packet()).collect());
    let report = replay_schedule(&problem, &schedule);
    assert_eq!(report.delivered, first.iter().map(|r| r.b).sum::<usize>());
    if first.len() < c.train.episode_cap {
        assert!(report.valid);
    }
    assert!(matches!(
        emit_trace(&c, Algorithm::Agent, None),
        Err(codecache::Error::Usage(_))
    ));
}

#[test]
fn runtime_table_covers_every_k() {
    let spec = BenchSpec {
        reps: 3,
        instances: 4,
        ..BenchSpec::new(1)
    };
    let rows = run_bench_runtime(&spec).unwrap();
    for k in 5..=10 {
        for alg in &spec.algorithms {
            let row = rows.iter().find(|r| r.users == k && r.algorithm == *alg).unwrap();
            assert_eq!(row.reps, 3);
            assert!(row.skipped || row.median_seconds > 0.0);
        }
    }
    assert!(rows
        .iter()
        .filter(|r| r.algorithm == Algorithm::Agent)
        .all(|r| !r.skipped));
}
