//! Grid experiments: one job per grid point and seed, each writing its
//! learning curve and fitted model, plus a manifest for the whole run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aggregate_hmm::eval::{nll, CurveMeta, LearningCurve};
use aggregate_hmm::learning::{
    em_fit_ensemble_with, em_fit_gaussian_ensemble_with, EmOptions, EmTrace,
};
use aggregate_hmm::model::{random_init, Emission, EmissionSpec, HmmParams, TrajectorySet};
use aggregate_hmm::synth::{
    aggregate, aggregate_continuous, gen_ground_truth, sample_trajectories, EmissionKind,
    ExperimentSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentKind, RunConfig};
use crate::error::{CliError, Result};
use crate::gridflow::grid_flow_smoke;

pub const GIT_DESCRIBE: &str = env!("AGGREGATE_HMM_GIT_DESCRIBE");

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

/// Seeds for the independent random pieces of one run. They depend only on
/// the run seed, so runs that differ only in `M` share truth, data and
/// initialization.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Job {
    pub spec: ExperimentSpec,
    pub test_size: usize,
}

impl Job {
    pub fn name(&self) -> String {
        let s = &self.spec;
        let kind = match s.emission {
            EmissionKind::Discrete { .. } => "discrete",
            EmissionKind::Gaussian { .. } => "gaussian",
        };
        format!(
            "{kind}_d{}_T{}_N{}_M{}_seed{}",
            s.d, s.horizon, s.individuals, s.population, s.seed
        )
    }
}

/// Cartesian product of the grid with the seeds, in a fixed order.
pub fn expand_grid(cfg: &RunConfig, seed_offset: u64) -> Vec<Job> {
    let g = &cfg.grid;
    let mut jobs = Vec::new();
    for &d in &g.d {
        for &horizon in &g.horizon {
            for &individuals in &g.individuals {
                for &population in &g.population {
                    for &seed in &cfg.seeds {
                        let emission = match cfg.kind {
                            ExperimentKind::Gaussian => EmissionKind::Gaussian { dim: g.dim },
                            _ => EmissionKind::Discrete {
                                num_symbols: g.num_symbols,
                            },
                        };
                        jobs.push(Job {
                            spec: ExperimentSpec {
                                d,
                                horizon,
                                individuals,
                                population,
                                emission,
                                seed: seed.wrapping_add(seed_offset),
                                em: cfg.em_options(),
                            },
                            test_size: cfg.test_size,
                        });
                    }
                }
            }
        }
    }
    jobs
}

/// Starting point of EM. Discrete models start from random stochastic rows;
/// Gaussian models draw means from the same range as the truth and keep the
/// true covariances.
pub fn initial_params(
    spec: &ExperimentSpec,
    truth: &HmmParams,
) -> aggregate_hmm::Result<HmmParams> {
    let seed = derive_seed(spec.seed, INIT_STREAM);
    match spec.emission {
        EmissionKind::Discrete { num_symbols } => random_init(
            spec.d,
            spec.horizon,
            &EmissionSpec::Discrete {
                num_symbols: num_symbols.unwrap_or(spec.d),
            },
            seed,
        ),
        EmissionKind::Gaussian { dim } => {
            let bound = 5.0 * spec.d as f64;
            let mut init = random_init(
                spec.d,
                spec.horizon,
                &EmissionSpec::Gaussian {
                    dim,
                    mean_range: (-bound, bound),
                },
                seed,
            )?;
            if let (Emission::Gaussian(g), Some(t)) = (&mut init.emission, truth.gaussian()) {
                g.covs = t.covs.clone();
            }
            Ok(init)
        }
    }
}

#[derive(Debug)]
pub struct JobOutput {
    pub truth: HmmParams,
    /// Held-out NLL per EM iteration, iteration 0 being the initialization.
    pub curve: LearningCurve,
    pub fit: aggregate_hmm::Result<(HmmParams, EmTrace)>,
    pub wall_secs: f64,
}

/// Everything a job fits and scores, reproducible from its spec alone.
#[derive(Debug, Clone)]
pub struct JobData {
    pub truth: HmmParams,
    pub train: TrajectorySet,
    pub test: TrajectorySet,
    pub init: HmmParams,
}

pub fn job_data(job: &Job) -> aggregate_hmm::Result<JobData> {
    let spec = &job.spec;
    let truth = gen_ground_truth(spec)?;
    let train = sample_trajectories(
        &truth,
        spec.individuals,
        spec.horizon,
        derive_seed(spec.seed, TRAIN_STREAM),
    )?;
    let test = sample_trajectories(
        &truth,
        job.test_size,
        spec.horizon,
        derive_seed(spec.seed, TEST_STREAM),
    )?;
    let init = initial_params(spec, &truth)?;
    Ok(JobData {
        truth,
        train,
        test,
        init,
    })
}

/// Generates truth and data for one job, fits, and scores every iterate on
/// held-out paths. A failed fit still yields the curve up to the failure.
pub fn run_job(job: &Job) -> aggregate_hmm::Result<JobOutput> {
    let start = Instant::now();
    let spec = &job.spec;
    let JobData {
        truth,
        train,
        test,
        init,
    } = job_data(job)?;

    let mut iterates = vec![init.clone()];
    let mut keep = |_: &_, p: &HmmParams| iterates.push(p.clone());
    let fit = match spec.emission {
        EmissionKind::Discrete { .. } => em_fit_ensemble_with(
            &aggregate(&train, spec.population)?,
            &init,
            &spec.em,
            &mut keep,
        ),
        EmissionKind::Gaussian { .. } => em_fit_gaussian_ensemble_with(
            &aggregate_continuous(&train, spec.population)?,
            &init,
            &spec.em,
            &mut keep,
        ),
    };

    let s = match spec.emission {
        EmissionKind::Discrete { num_symbols } => num_symbols.unwrap_or(spec.d),
        EmissionKind::Gaussian { dim } => dim,
    };
    let mut curve = LearningCurve::new(CurveMeta {
        d: spec.d,
        horizon: spec.horizon,
        individuals: spec.individuals,
        population: spec.population,
        seed: spec.seed,
        s,
    });
    let nll_truth = nll(&truth, &test)?;
    for (iter, p) in iterates.iter().enumerate() {
        curve.record(iter, p, nll_truth, &test)?;
    }
    Ok(JobOutput {
        truth,
        curve,
        fit,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(CliError::file(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::file(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct JobRecord {
    pub name: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta_nll: Option<f64>,
    pub max_surrogate_decrease: Option<f64>,
    pub files: Vec<String>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub build: &'static str,
    pub config: RunConfig,
    pub seed_offset: u64,
    pub jobs: Vec<JobRecord>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; all cores when `None`.
    pub jobs: Option<usize>,
    pub seed_offset: u64,
}

fn run_and_write(job: &Job, out: &Path) -> JobRecord {
    let name = job.name();
    let mut record = JobRecord {
        name: name.clone(),
        status: "ok",
        error: None,
        iterations: 0,
        converged: false,
        final_delta_nll: None,
        max_surrogate_decrease: None,
        files: Vec::new(),
        wall_secs: 0.0,
    };
    let fail = |record: &mut JobRecord, msg: String, convergence: bool| {
        record.status = if convergence {
            "not-converged"
        } else {
            "failed"
        };
        let marker = format!("{name}.failed");
        let _ = write_atomic(&out.join(&marker), format!("{msg}\n").as_bytes());
        record.files.push(marker);
        record.error = Some(msg);
    };
    let output = match run_job(job) {
        Ok(o) => o,
        Err(e) => {
            fail(&mut record, e.to_string(), e.is_convergence_failure());
            return record;
        }
    };
    record.wall_secs = output.wall_secs;
    record.iterations = output.curve.points.len().saturating_sub(1);
    record.final_delta_nll = output.curve.final_delta_nll();
    let csv = format!("{name}.csv");
    match output
        .curve
        .to_csv_string()
        .map_err(CliError::from)
        .and_then(|text| write_atomic(&out.join(&csv), text.as_bytes()))
    {
        Ok(()) => record.files.push(csv),
        Err(e) => fail(&mut record, e.to_string(), false),
    }
    match output.fit {
        Ok((params, trace)) => {
            record.converged = trace.converged;
            record.max_surrogate_decrease = Some(trace.max_decrease());
            let model = format!("{name}.model.json");
            match params
                .to_json()
                .map_err(CliError::from)
                .and_then(|j| write_atomic(&out.join(&model), j.as_bytes()))
            {
                Ok(()) => record.files.push(model),
                Err(e) => fail(&mut record, e.to_string(), false),
            }
        }
        Err(e) => fail(&mut record, e.to_string(), e.is_convergence_failure()),
    }
    record
}

/// Runs every job of `cfg`, writing artifacts into `out` and a
/// `manifest.json` describing them. Fails after writing the manifest when
/// any job failed.
pub fn run_experiment(cfg: &RunConfig, out: &Path, opts: RunOptions) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(CliError::file(out))?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let records = if cfg.kind == ExperimentKind::GridFlowSmoke {
        let mut gf = cfg.grid_flow.clone();
        gf.seed = gf.seed.wrapping_add(opts.seed_offset);
        pool.install(|| vec![run_grid_flow(&gf, &cfg.em_options(), out)])
    } else {
        let jobs = expand_grid(cfg, opts.seed_offset);
        pool.install(|| jobs.par_iter().map(|j| run_and_write(j, out)).collect())
    };

    let manifest = Manifest {
        build: GIT_DESCRIBE,
        config: cfg.clone(),
        seed_offset: opts.seed_offset,
        jobs: records,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Core(e.into()))?;
    write_atomic(&out.join("manifest.json"), text.as_bytes())?;

    let failed: Vec<_> = manifest.jobs.iter().filter(|r| r.status != "ok").collect();
    if failed.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::JobsFailed {
            failed: failed.len(),
            total: manifest.jobs.len(),
            convergence_only: failed.iter().all(|r| r.status == "not-converged"),
        })
    }
}

fn run_grid_flow(cfg: &crate::gridflow::GridFlowConfig, em: &EmOptions, out: &Path) -> JobRecord {
    let name = format!("gridflow_{}x{}_seed{}", cfg.width, cfg.height, cfg.seed);
    let start = Instant::now();
    let mut record = JobRecord {
        name: name.clone(),
        status: "ok",
        error: None,
        iterations: 0,
        converged: false,
        final_delta_nll: None,
        max_surrogate_decrease: None,
        files: Vec::new(),
        wall_secs: 0.0,
    };
    let result = grid_flow_smoke(cfg, em).and_then(|r| {
        let mut buf = Vec::new();
        r.write_csv(&mut buf)?;
        let csv = format!("{name}.flows.csv");
        write_atomic(&out.join(&csv), &buf)?;
        let model = format!("{name}.model.json");
        write_atomic(&out.join(&model), r.fitted.to_json()?.as_bytes())?;
        Ok((r, vec![csv, model]))
    });
    match result {
        Ok((r, files)) => {
            record.iterations = r.trace.iterations();
            record.converged = r.trace.converged;
            record.max_surrogate_decrease = Some(r.trace.max_decrease());
            record.files = files;
        }
        Err(e) => {
            let marker = format!("{name}.failed");
            let _ = write_atomic(&out.join(&marker), format!("{e}\n").as_bytes());
            record.status = if e.exit_code() == 3 {
                "not-converged"
            } else {
                "failed"
            };
            record.error = Some(e.to_string());
            record.files.push(marker);
        }
    }
    record.wall_secs = start.elapsed().as_secs_f64();
    record
}

/// Default output directory when neither the command line nor the config
/// names one.
pub fn default_out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"))
}
