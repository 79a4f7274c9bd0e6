//! Population-flow smoke test on a small grid of cells.
//!
//! Individuals walk clockwise around the boundary of a `width × height` grid
//! (interior cells stay put). Each snapshot reports how many individuals were
//! seen in every cell, with an optional chance of being placed in one of the
//! eight surrounding cells instead. Transitions are learned with the noise
//! model frozen, and the expected number of individuals crossing each arc
//! per step is reported.

use std::collections::BTreeSet;
use std::io::Write;

use aggregate_hmm::hmm::cfb_discrete;
use aggregate_hmm::learning::{em_fit_ensemble, EmOptions, EmTrace, ParamGroup};
use aggregate_hmm::model::{DiscreteEmission, Emission, HmmParams};
use aggregate_hmm::synth::{aggregate, sample_trajectories};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridFlowConfig {
    pub width: usize,
    pub height: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Individuals per snapshot sequence.
    #[serde(rename = "M")]
    pub population: usize,
    /// Independent snapshot sequences.
    pub sequences: usize,
    /// Probability of being recorded in a neighbouring cell.
    pub noise: f64,
    /// Minimum expected individuals per step for an arc to be reported.
    pub threshold: f64,
    /// Planted initial distribution over cells; decreasing in the cell index
    /// when absent.
    pub initial: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for GridFlowConfig {
    fn default() -> Self {
        Self {
            width: 2,
            height: 2,
            horizon: 4,
            population: 20,
            sequences: 10,
            noise: 0.0,
            threshold: 2.0,
            initial: None,
            seed: 0,
        }
    }
}

impl GridFlowConfig {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CliError::Config(format!("grid_flow: {msg}")));
        if self.width < 2 || self.height < 2 {
            return bad("width and height must be at least 2");
        }
        if self.horizon < 2 {
            return bad("T must be at least 2");
        }
        if self.population == 0 || self.sequences == 0 {
            return bad("population M and sequence count must be positive");
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1)");
        }
        if !(self.threshold >= 0.0) {
            return bad("threshold must be non-negative");
        }
        if let Some(p) = &self.initial {
            let total: f64 = p.iter().sum();
            if p.len() != self.cells()
                || p.iter().any(|&v| !(v >= 0.0))
                || (total - 1.0).abs() > 1e-9
            {
                return bad("initial must be a distribution over the cells");
            }
        }
        Ok(())
    }

    fn cell(&self, r: usize, c: usize) -> usize {
        r * self.width + c
    }

    fn coords(&self, x: usize) -> (usize, usize) {
        (x / self.width, x % self.width)
    }

    /// Next cell of the clockwise boundary walk.
    pub fn clockwise(&self, x: usize) -> usize {
        let (r, c) = self.coords(x);
        let (w, h) = (self.width, self.height);
        if r == 0 && c + 1 < w {
            self.cell(r, c + 1)
        } else if c == w - 1 && r + 1 < h {
            self.cell(r + 1, c)
        } else if r == h - 1 && c > 0 {
            self.cell(r, c - 1)
        } else if c == 0 && r > 0 {
            self.cell(r - 1, c)
        } else {
            x
        }
    }

    /// Moves the model may use: stay, or step to one of the four neighbours.
    fn allowed(&self, x: usize, y: usize) -> bool {
        let (r, c) = self.coords(x);
        let (r2, c2) = self.coords(y);
        r.abs_diff(r2) + c.abs_diff(c2) <= 1
    }

    fn adjacent(&self, x: usize, y: usize) -> bool {
        let (r, c) = self.coords(x);
        let (r2, c2) = self.coords(y);
        x != y && r.abs_diff(r2) <= 1 && c.abs_diff(c2) <= 1
    }

    /// The planted arcs `(from, to)` of the boundary walk.
    pub fn true_arcs(&self) -> BTreeSet<(usize, usize)> {
        (0..self.cells())
            .map(|x| (x, self.clockwise(x)))
            .filter(|(x, y)| x != y)
            .collect()
    }

    pub fn truth(&self) -> HmmParams {
        let n = self.cells();
        let initial = match &self.initial {
            Some(p) => DVector::from_column_slice(p),
            None => {
                let total = (n * (n + 1) / 2) as f64;
                DVector::from_fn(n, |x, _| (n - x) as f64 / total)
            }
        };
        let transition =
            DMatrix::from_fn(n, n, |x, y| if self.clockwise(x) == y { 1.0 } else { 0.0 });
        HmmParams {
            horizon: self.horizon,
            initial,
            transition,
            emission: Emission::Discrete(DiscreteEmission {
                probs: self.noise_model(),
            }),
        }
    }

    fn noise_model(&self) -> DMatrix<f64> {
        let n = self.cells();
        DMatrix::from_fn(n, n, |x, o| {
            let neighbours = (0..n).filter(|&y| self.adjacent(x, y)).count() as f64;
            if x == o {
                1.0 - self.noise
            } else if self.adjacent(x, o) {
                self.noise / neighbours
            } else {
                0.0
            }
        })
    }

    /// Uniform initial distribution, random transitions restricted to the
    /// allowed moves, and the true noise model.
    fn init(&self) -> HmmParams {
        let n = self.cells();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5EED);
        let mut transition = DMatrix::from_fn(n, n, |x, y| {
            if self.allowed(x, y) {
                rng.random_range(0.5..1.5)
            } else {
                0.0
            }
        });
        for mut row in transition.row_iter_mut() {
            let total = row.sum();
            row /= total;
        }
        HmmParams {
            horizon: self.horizon,
            initial: DVector::from_element(n, 1.0 / n as f64),
            transition,
            emission: Emission::Discrete(DiscreteEmission {
                probs: self.noise_model(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    /// Flow from step `t` to step `t + 1`, zero-based.
    pub t: usize,
    pub from: usize,
    pub to: usize,
    /// Expected individuals moving along the arc, averaged over sequences.
    pub flow: f64,
}

#[derive(Debug, Clone)]
pub struct GridFlowResult {
    pub truth: HmmParams,
    pub fitted: HmmParams,
    pub trace: EmTrace,
    /// Every per-step flow at or above the threshold.
    pub flows: Vec<FlowRow>,
    /// Arcs whose flow, averaged over steps, reaches the threshold.
    pub arcs: BTreeSet<(usize, usize)>,
}

impl GridFlowResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| CliError::Core(aggregate_hmm::Error::Io(e));
        writeln!(w, "t,from,to,flow").map_err(io)?;
        for r in &self.flows {
            writeln!(w, "{},{},{},{}", r.t, r.from, r.to, r.flow).map_err(io)?;
        }
        Ok(())
    }
}

pub fn grid_flow_smoke(cfg: &GridFlowConfig, em: &EmOptions) -> Result<GridFlowResult> {
    cfg.validate()?;
    let truth = cfg.truth();
    let paths = sample_trajectories(
        &truth,
        cfg.population * cfg.sequences,
        cfg.horizon,
        cfg.seed,
    )?;
    let obs = aggregate(&paths, cfg.population)?;
    let opts = em.clone().with_freeze([ParamGroup::Emission]);
    let (fitted, trace) = em_fit_ensemble(&obs, &cfg.init(), &opts)?;

    let n = cfg.cells();
    let steps = cfg.horizon - 1;
    let mut mean = vec![DMatrix::<f64>::zeros(n, n); steps];
    for y in &obs {
        let marg = cfb_discrete(&fitted, y, &opts.estep)?.marginals;
        for (acc, e) in mean.iter_mut().zip(&marg.edge) {
            *acc += e * (cfg.population as f64 / obs.len() as f64);
        }
    }
    let mut flows = Vec::new();
    for (t, m) in mean.iter().enumerate() {
        for from in 0..n {
            for to in 0..n {
                if m[(from, to)] >= cfg.threshold {
                    flows.push(FlowRow {
                        t,
                        from,
                        to,
                        flow: m[(from, to)],
                    });
                }
            }
        }
    }
    let total: DMatrix<f64> = mean.iter().sum::<DMatrix<f64>>() / steps as f64;
    let arcs = (0..n)
        .flat_map(|from| (0..n).map(move |to| (from, to)))
        .filter(|&(from, to)| total[(from, to)] >= cfg.threshold)
        .collect();
    Ok(GridFlowResult {
        truth,
        fitted,
        trace,
        flows,
        arcs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_walk_is_a_clockwise_cycle() {
        let cfg = GridFlowConfig::default();
        assert_eq!(
            cfg.true_arcs(),
            BTreeSet::from([(0, 1), (1, 3), (3, 2), (2, 0)])
        );
        assert!(cfg.truth().validate().is_empty());
    }

    #[test]
    fn three_by_three_interior_stays() {
        let cfg = GridFlowConfig {
            width: 3,
            height: 3,
            ..GridFlowConfig::default()
        };
        assert_eq!(cfg.clockwise(4), 4);
        assert_eq!(cfg.true_arcs().len(), 8);
        let b = cfg.truth();
        assert!(b.validate().is_empty());
    }

    #[test]
    fn noise_spreads_over_eight_neighbours() {
        let cfg = GridFlowConfig {
            width: 3,
            height: 3,
            noise: 0.4,
            ..GridFlowConfig::default()
        };
        let b = cfg.noise_model();
        assert!((b[(4, 0)] - 0.05).abs() < 1e-15);
        assert!((b[(0, 1)] - 0.4 / 3.0).abs() < 1e-15);
        assert_eq!(b[(0, 8)], 0.0);
    }

    #[test]
    fn zero_population_is_rejected() {
        let cfg = GridFlowConfig {
            population: 0,
            ..GridFlowConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
