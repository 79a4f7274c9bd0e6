//! Run configuration files.

use std::path::{Path, PathBuf};

use aggregate_hmm::learning::EmOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::gridflow::GridFlowConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Discrete,
    Gaussian,
    GridFlowSmoke,
}

/// Lists of values whose Cartesian product gives the runs of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub d: Vec<usize>,
    #[serde(rename = "T")]
    pub horizon: Vec<usize>,
    #[serde(rename = "N")]
    pub individuals: Vec<usize>,
    #[serde(rename = "M")]
    pub population: Vec<usize>,
    /// Alphabet size for discrete runs; `d` when absent.
    #[serde(default)]
    pub num_symbols: Option<usize>,
    /// Observation dimension for Gaussian runs.
    #[serde(default = "one")]
    pub dim: usize,
}

fn one() -> usize {
    1
}

fn default_test_size() -> usize {
    1000
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            d: vec![3],
            horizon: vec![5],
            individuals: vec![1000],
            population: vec![1, 10, 100],
            num_symbols: None,
            dim: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Held-out individual paths per run.
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// EM settings; [`RunConfig::em_options`] supplies per-kind defaults.
    #[serde(default)]
    pub em: Option<EmOptions>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid_flow: GridFlowConfig,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(CliError::file(path))?)
    }

    /// The configured EM options, or the defaults for this kind; grid-flow
    /// runs default to 10 iterations.
    pub fn em_options(&self) -> EmOptions {
        match (&self.em, self.kind) {
            (Some(em), _) => em.clone(),
            (None, ExperimentKind::GridFlowSmoke) => EmOptions {
                max_iters: 10,
                ..EmOptions::default()
            },
            (None, _) => EmOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.kind == ExperimentKind::GridFlowSmoke {
            return self.grid_flow.validate();
        }
        let g = &self.grid;
        for (name, values) in [
            ("d", &g.d),
            ("T", &g.horizon),
            ("N", &g.individuals),
            ("M", &g.population),
        ] {
            if values.is_empty() {
                return bad(format!("grid.{name} is empty"));
            }
            if values.contains(&0) {
                return bad(format!("grid.{name} contains 0"));
            }
        }
        for &n in &g.individuals {
            for &m in &g.population {
                if n % m != 0 {
                    return bad(format!("M = {m} does not divide N = {n}"));
                }
            }
        }
        if self.seeds.is_empty() {
            return bad("seeds is empty".into());
        }
        if self.test_size == 0 {
            return bad("test_size must be positive".into());
        }
        if g.num_symbols == Some(0) || g.dim == 0 {
            return bad("emission dimension must be positive".into());
        }
        Ok(())
    }
}
