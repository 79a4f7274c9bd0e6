use std::fs;
use std::path::Path;
use std::process::Command;

use aggregate_hmm::eval::nll;
use aggregate_hmm::learning::{baum_welch_reference_with, EmOptions};
use aggregate_hmm::model::{AggregateSequence, HmmParams};
use aggregate_hmm_cli::{
    expand_grid, grid_flow_smoke, job_data, run_experiment, run_job, ExperimentKind, Grid,
    GridFlowConfig, RunConfig, RunOptions,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aggregate-hmm"))
}

fn discrete_config(population: Vec<usize>, seeds: Vec<u64>, iters: usize) -> RunConfig {
    RunConfig {
        kind: ExperimentKind::Discrete,
        grid: Grid {
            d: vec![3],
            horizon: vec![5],
            individuals: vec![200],
            population,
            num_symbols: None,
            dim: 1,
        },
        seeds,
        test_size: 300,
        em: Some(EmOptions {
            max_iters: iters,
            tol: 0.0,
            ..EmOptions::default()
        }),
        out_dir: None,
        grid_flow: GridFlowConfig::default(),
    }
}

fn read_column(path: &Path, column: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn singleton_runs_match_baum_welch_curves() {
    let cfg = discrete_config(vec![1], vec![0, 1], 15);
    let dir = tempfile::tempdir().unwrap();
    run_experiment(
        &cfg,
        dir.path(),
        RunOptions {
            jobs: Some(1),
            seed_offset: 0,
        },
    )
    .unwrap();
    let jobs = expand_grid(&cfg, 0);
    assert_eq!(jobs.len(), 2);
    for job in &jobs {
        let ours = read_column(&dir.path().join(format!("{}.csv", job.name())), "delta_nll");
        let data = job_data(job).unwrap();
        let nll_truth = nll(&data.truth, &data.test).unwrap();
        let mut reference = vec![nll(&data.init, &data.test).unwrap() - nll_truth];
        let mut record =
            |_: &_, p: &HmmParams| reference.push(nll(p, &data.test).unwrap() - nll_truth);
        baum_welch_reference_with(&data.train, &data.init, &job.spec.em, &mut record).unwrap();
        assert_eq!(ours.len(), reference.len());
        for (a, b) in ours.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let cfg = discrete_config(vec![10], vec![3], 10);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(
        &cfg,
        a.path(),
        RunOptions {
            jobs: Some(1),
            seed_offset: 0,
        },
    )
    .unwrap();
    run_experiment(
        &cfg,
        b.path(),
        RunOptions {
            jobs: Some(2),
            seed_offset: 0,
        },
    )
    .unwrap();
    let name = expand_grid(&cfg, 0)[0].name();
    for file in [format!("{name}.csv"), format!("{name}.model.json")] {
        assert_eq!(
            fs::read(a.path().join(&file)).unwrap(),
            fs::read(b.path().join(&file)).unwrap()
        );
    }
    let shifted = tempfile::tempdir().unwrap();
    run_experiment(
        &cfg,
        shifted.path(),
        RunOptions {
            jobs: None,
            seed_offset: 4,
        },
    )
    .unwrap();
    assert!(shifted
        .path()
        .join(format!("{}.csv", expand_grid(&cfg, 4)[0].name()))
        .exists());
}

#[test]
fn larger_aggregates_lose_information() {
    let cfg = discrete_config(vec![1, 10], (0..10).collect(), 40);
    let mut finals = [0.0; 2];
    for job in expand_grid(&cfg, 0) {
        let out = run_job(&job).unwrap();
        let slot = usize::from(job.spec.population == 10);
        finals[slot] += out.curve.final_delta_nll().unwrap() / 10.0;
    }
    assert!(
        finals[1] >= finals[0],
        "M=10 {} < M=1 {}",
        finals[1],
        finals[0]
    );
}

#[test]
fn emitted_models_validate_and_manifest_lists_them() {
    let cfg = discrete_config(vec![5], vec![0], 5);
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(
        &cfg,
        dir.path(),
        RunOptions {
            jobs: Some(1),
            seed_offset: 0,
        },
    )
    .unwrap();
    let files = &manifest.jobs[0].files;
    let model = files.iter().find(|f| f.ends_with(".model.json")).unwrap();
    let params =
        HmmParams::from_json(&fs::read_to_string(dir.path().join(model)).unwrap()).unwrap();
    assert!(params.validate().is_empty());
    let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(json["build"].as_str().is_some_and(|s| !s.is_empty()));
    assert_eq!(json["jobs"][0]["status"], "ok");
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .ends_with(".tmp")));
}

#[test]
fn noiseless_grid_recovers_the_cycle() {
    let cfg = GridFlowConfig::default();
    let opts = EmOptions {
        max_iters: 10,
        ..EmOptions::default()
    };
    let result = grid_flow_smoke(&cfg, &opts).unwrap();
    assert_eq!(result.arcs, cfg.true_arcs());
    let high = GridFlowConfig {
        threshold: 1e6,
        ..cfg
    };
    let empty = grid_flow_smoke(&high, &opts).unwrap();
    assert!(empty.flows.is_empty());
    assert!(empty.arcs.is_empty());
}

#[test]
fn run_command_writes_flows_and_rejects_empty_populations() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("grid.json");
    fs::write(&good, r#"{"kind": "grid-flow-smoke"}"#).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let flows = fs::read_to_string(out.join("gridflow_2x2_seed0.flows.csv")).unwrap();
    assert!(flows.starts_with("t,from,to,flow\n"));

    let bad = dir.path().join("empty.json");
    fs::write(
        &bad,
        r#"{"kind": "grid-flow-smoke", "grid_flow": {"M": 0}}"#,
    )
    .unwrap();
    let status = bin().args(["run", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

const MODEL: &str = r#"{
  "d": 2, "T": 3,
  "pi": [0.6, 0.4],
  "A": [[0.7, 0.3], [0.2, 0.8]],
  "emission": {"kind": "discrete", "B": [[0.9, 0.1], [0.3, 0.7]]}
}"#;

const SEQUENCE: &str = r#"{"M": 4, "y": [[0.75, 0.25], [0.5, 0.5], [0.25, 0.75]]}"#;

#[test]
fn validate_infer_and_fit_commands() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let obs = dir.path().join("seq.json");
    fs::write(&model, MODEL).unwrap();
    fs::write(&obs, SEQUENCE).unwrap();

    let out = bin().arg("validate").arg(&model).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let broken = dir.path().join("broken.json");
    fs::write(&broken, MODEL.replace("[0.7, 0.3]", "[0.7, 0.4]")).unwrap();
    let out = bin().arg("validate").arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["infer", "--model"])
        .arg(&model)
        .arg("--obs")
        .arg(&obs)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let marg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(marg.is_object());

    let fitted = dir.path().join("fitted.json");
    let trace = dir.path().join("trace.json");
    let out = bin()
        .args(["fit", "--model"])
        .arg(&model)
        .arg("--obs")
        .arg(&obs)
        .arg("--out")
        .arg(&fitted)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let params = HmmParams::from_json(&fs::read_to_string(&fitted).unwrap()).unwrap();
    assert!(params.validate().is_empty());
    assert!(fs::read_to_string(&trace).unwrap().contains("neg_bethe"));

    let opts = dir.path().join("opts.json");
    fs::write(&opts, r#"{"estep": {"max_passes": 1, "tol": 1e-16}}"#).unwrap();
    let out = bin()
        .args(["fit", "--model"])
        .arg(&model)
        .arg("--obs")
        .arg(&obs)
        .arg("--opts")
        .arg(&opts)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn sequence_fixture_is_a_valid_count_histogram() {
    let y = AggregateSequence::from_json(SEQUENCE).unwrap();
    assert_eq!(y.population, 4);
}
