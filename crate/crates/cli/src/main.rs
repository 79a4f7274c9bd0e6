use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggregate_hmm::hmm::cfb_discrete;
use aggregate_hmm::learning::{em_fit_ensemble, EmOptions};
use aggregate_hmm::model::{AggregateSequence, HmmParams};
use aggregate_hmm_cli::runner::{default_out_dir, write_atomic};
use aggregate_hmm_cli::{run_experiment, CliError, Result, RunConfig, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aggregate-hmm",
    version,
    about = "Learn HMMs from aggregate population snapshots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic experiment grid or the grid-flow smoke test.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Added to every seed in the config.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Check a model file and list every violated constraint.
    Validate { model: PathBuf },
    /// Print the marginals of one aggregate sequence under a model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        /// EM options file; only its `estep` section is used.
        #[arg(long)]
        opts: Option<PathBuf>,
    },
    /// Fit a model to one or more aggregate sequences.
    Fit {
        /// Initial parameters.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true)]
        obs: Vec<PathBuf>,
        #[arg(long)]
        opts: Option<PathBuf>,
        /// Where to write the fitted model; printed when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the per-iteration trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn read_model(path: &Path) -> Result<HmmParams> {
    let text = std::fs::read_to_string(path).map_err(CliError::file(path))?;
    Ok(HmmParams::from_json(&text)?)
}

fn read_sequence(path: &Path) -> Result<AggregateSequence> {
    let text = std::fs::read_to_string(path).map_err(CliError::file(path))?;
    Ok(AggregateSequence::from_json(&text)?)
}

fn read_opts(path: Option<&Path>) -> Result<EmOptions> {
    match path {
        None => Ok(EmOptions::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::file(p))?;
            Ok(EmOptions::from_json(&text)?)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed_offset,
        } => {
            let cfg = RunConfig::read(&config)?;
            let out = out.unwrap_or_else(|| default_out_dir(&cfg));
            let manifest = run_experiment(&cfg, &out, RunOptions { jobs, seed_offset })?;
            eprintln!("{} jobs written to {}", manifest.jobs.len(), out.display());
        }
        Command::Validate { model } => {
            let params = read_model(&model)?;
            let violations = params.validate();
            if !violations.is_empty() {
                return Err(aggregate_hmm::Error::Validation(violations).into());
            }
            println!("ok");
        }
        Command::Infer { model, obs, opts } => {
            let params = read_model(&model)?;
            let y = read_sequence(&obs)?;
            let opts = read_opts(opts.as_deref())?;
            let result = cfb_discrete(&params, &y, &opts.estep)?;
            println!("{}", result.marginals.to_json()?);
        }
        Command::Fit {
            model,
            obs,
            opts,
            out,
            trace,
        } => {
            let init = read_model(&model)?;
            let seqs = obs
                .iter()
                .map(|p| read_sequence(p))
                .collect::<Result<Vec<_>>>()?;
            let opts = read_opts(opts.as_deref())?;
            let (fitted, em_trace) = em_fit_ensemble(&seqs, &init, &opts)?;
            if let Some(path) = trace {
                let text = serde_json::to_string_pretty(&em_trace)
                    .map_err(|e| CliError::Core(e.into()))?;
                write_atomic(&path, text.as_bytes())?;
            }
            let text = fitted.to_json()?;
            match out {
                Some(path) => write_atomic(&path, text.as_bytes())?,
                None => println!("{text}"),
            }
            eprintln!(
                "{} iterations, {}",
                em_trace.iterations(),
                if em_trace.converged {
                    "converged"
                } else {
                    "iteration limit reached"
                }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
