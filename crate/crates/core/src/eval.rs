//! Held-out likelihood metrics, parameter-recovery distances and learning
//! curves.

use std::io::Write;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{forward_log_likelihood, symbol_log_likelihoods, vector_log_likelihoods};
use crate::model::{Emission, HmmParams, Observations, TrajectorySet};

/// Log-probability assigned to a test path the model cannot generate.
pub const LOG_FLOOR: f64 = -690.775_527_898_213_7; // ln 1e-300

/// Largest state count for which the best permutation is searched exhaustively.
pub const MAX_PERMUTATION_STATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    /// Mean negative log-likelihood per test path.
    pub nll: f64,
    /// Paths with zero probability, scored at [`LOG_FLOOR`].
    pub floored: usize,
}

/// Per-path negative log-likelihood averaged over `test`, with the count of
/// zero-probability paths.
pub fn nll_report(params: &HmmParams, test: &TrajectorySet) -> Result<NllReport> {
    params.ensure_valid()?;
    if test.is_empty() {
        return Err(Error::InvalidDimensions("empty test set".into()));
    }
    let violations = test.validate(params.num_states());
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let per_path: Vec<f64> = (0..test.len())
        .into_par_iter()
        .map(|m| {
            let ll = match &test.observations {
                Observations::Discrete { paths, .. } => symbol_log_likelihoods(params, &paths[m])?,
                Observations::Continuous { paths, .. } => {
                    vector_log_likelihoods(params, &paths[m])?
                }
            };
            Ok(forward_log_likelihood(
                &params.initial,
                &params.transition,
                &ll,
            ))
        })
        .collect::<Result<_>>()?;
    let floored = per_path.iter().filter(|v| !v.is_finite()).count();
    let total: f64 = per_path
        .iter()
        .map(|&v| if v.is_finite() { v } else { LOG_FLOOR })
        .sum();
    Ok(NllReport {
        nll: -total / test.len() as f64,
        floored,
    })
}

pub fn nll(params: &HmmParams, test: &TrajectorySet) -> Result<f64> {
    nll_report(params, test).map(|r| r.nll)
}

/// `nll(learned) − nll(truth)` on the same test paths.
pub fn delta_nll(learned: &HmmParams, truth: &HmmParams, test: &TrajectorySet) -> Result<f64> {
    Ok(nll(learned, test)? - nll(truth, test)?)
}

/// Per-block distances between two parameter sets. Stochastic blocks use the
/// largest total-variation distance over rows; Gaussian emissions use the
/// largest coordinate difference between corresponding means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDistance {
    pub initial: f64,
    pub transition: f64,
    pub emission: f64,
}

impl ParamDistance {
    pub fn max(&self) -> f64 {
        self.initial.max(self.transition).max(self.emission)
    }

    fn total(&self) -> f64 {
        self.initial + self.transition + self.emission
    }
}

fn tv_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .zip(b.row_iter())
        .map(|(ra, rb)| 0.5 * (ra - rb).abs().sum())
        .fold(0.0, f64::max)
}

fn check_shapes(a: &HmmParams, b: &HmmParams) -> Result<()> {
    let same = a.num_states() == b.num_states()
        && match (&a.emission, &b.emission) {
            (Emission::Discrete(x), Emission::Discrete(y)) => x.num_symbols() == y.num_symbols(),
            (Emission::Gaussian(x), Emission::Gaussian(y)) => x.dim() == y.dim(),
            _ => false,
        };
    if same {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(
            "parameter sets differ in state count or emission shape".into(),
        ))
    }
}

fn distance_under(a: &HmmParams, b: &HmmParams, perm: &[usize]) -> ParamDistance {
    let d = perm.len();
    let pi_b = DVector::from_fn(d, |x, _| b.initial[perm[x]]);
    let a_b = DMatrix::from_fn(d, d, |x, y| b.transition[(perm[x], perm[y])]);
    let emission = match (&a.emission, &b.emission) {
        (Emission::Discrete(x), Emission::Discrete(y)) => {
            let rows = DMatrix::from_fn(d, y.num_symbols(), |r, o| y.probs[(perm[r], o)]);
            tv_rows(&x.probs, &rows)
        }
        (Emission::Gaussian(x), Emission::Gaussian(y)) => (0..d)
            .map(|r| (&x.means[r] - &y.means[perm[r]]).amax())
            .fold(0.0, f64::max),
        _ => unreachable!("shapes checked"),
    };
    ParamDistance {
        initial: 0.5 * (&a.initial - pi_b).abs().sum(),
        transition: tv_rows(&a.transition, &a_b),
        emission,
    }
}

/// Raw comparison, state `x` of `a` against state `x` of `b`.
pub fn param_distance(a: &HmmParams, b: &HmmParams) -> Result<ParamDistance> {
    check_shapes(a, b)?;
    let identity: Vec<usize> = (0..a.num_states()).collect();
    Ok(distance_under(a, b, &identity))
}

/// Comparison after relabeling the states of `b` by the permutation that
/// minimizes the summed block distances. Returns the distances and the
/// permutation, where state `x` of `a` is matched with state `perm[x]` of `b`.
pub fn param_distance_permuted(
    a: &HmmParams,
    b: &HmmParams,
) -> Result<(ParamDistance, Vec<usize>)> {
    check_shapes(a, b)?;
    let d = a.num_states();
    if d > MAX_PERMUTATION_STATES {
        return Err(Error::InvalidDimensions(format!(
            "permutation search is limited to d ≤ {MAX_PERMUTATION_STATES}, got {d}"
        )));
    }
    let mut best: Option<(ParamDistance, Vec<usize>)> = None;
    for perm in (0..d).permutations(d) {
        let dist = distance_under(a, b, &perm);
        if best.as_ref().is_none_or(|(b, _)| dist.total() < b.total()) {
            best = Some((dist, perm));
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Run metadata repeated on every CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub individuals: usize,
    #[serde(rename = "M")]
    pub population: usize,
    pub seed: u64,
    /// Symbols, or the dimension of vector observations.
    pub s: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub delta_nll: f64,
    pub nll_learned: f64,
    pub nll_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub meta: CurveMeta,
    pub points: Vec<CurvePoint>,
}

#[derive(Serialize)]
struct CsvRow {
    iter: usize,
    delta_nll: f64,
    nll_learned: f64,
    nll_truth: f64,
    d: usize,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(rename = "N")]
    individuals: usize,
    #[serde(rename = "M")]
    population: usize,
    seed: u64,
    nll_per_step: f64,
    nll_per_dim: f64,
}

impl LearningCurve {
    pub fn new(meta: CurveMeta) -> Self {
        Self {
            meta,
            points: Vec::new(),
        }
    }

    /// Scores `learned` on `test` and appends the point for iteration `iter`.
    pub fn record(
        &mut self,
        iter: usize,
        learned: &HmmParams,
        nll_truth: f64,
        test: &TrajectorySet,
    ) -> Result<()> {
        let nll_learned = nll(learned, test)?;
        self.points.push(CurvePoint {
            iter,
            delta_nll: nll_learned - nll_truth,
            nll_learned,
            nll_truth,
        });
        Ok(())
    }

    pub fn final_delta_nll(&self) -> Option<f64> {
        self.points.last().map(|p| p.delta_nll)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let m = &self.meta;
        for p in &self.points {
            out.serialize(CsvRow {
                iter: p.iter,
                delta_nll: p.delta_nll,
                nll_learned: p.nll_learned,
                nll_truth: p.nll_truth,
                d: m.d,
                horizon: m.horizon,
                individuals: m.individuals,
                population: m.population,
                seed: m.seed,
                nll_per_step: p.nll_learned / m.horizon as f64,
                nll_per_dim: p.nll_learned / (m.horizon * m.s) as f64,
            })
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscreteEmission, Emission};

    fn two_state(pi: [f64; 2]) -> HmmParams {
        HmmParams {
            horizon: 2,
            initial: DVector::from_row_slice(&pi),
            transition: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
            emission: Emission::Discrete(DiscreteEmission {
                probs: DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.4, 0.6]),
            }),
        }
    }

    #[test]
    fn disjoint_initial_distributions() {
        let d = param_distance(&two_state([1.0, 0.0]), &two_state([0.0, 1.0])).unwrap();
        assert_eq!(d.initial, 1.0);
        assert_eq!(d.transition, 0.0);
        assert_eq!(d.emission, 0.0);
    }

    #[test]
    fn relabeled_copy_has_zero_permuted_distance() {
        let a = two_state([0.3, 0.7]);
        let mut b = a.clone();
        b.initial = DVector::from_row_slice(&[0.7, 0.3]);
        b.transition = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.1, 0.9]);
        b.emission = Emission::Discrete(DiscreteEmission {
            probs: DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.7, 0.3]),
        });
        assert!(param_distance(&a, &b).unwrap().max() > 0.1);
        let (dist, perm) = param_distance_permuted(&a, &b).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert!(dist.max() < 1e-15);
    }

    #[test]
    fn csv_header() {
        let mut c = LearningCurve::new(CurveMeta {
            d: 3,
            horizon: 5,
            individuals: 200,
            population: 10,
            seed: 1,
            s: 3,
        });
        c.points.push(CurvePoint {
            iter: 1,
            delta_nll: 0.5,
            nll_learned: 7.5,
            nll_truth: 7.0,
        });
        let text = c.to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,delta_nll,nll_learned,nll_truth,d,T,N,M,seed,nll_per_step,nll_per_dim"
        );
        assert_eq!(lines.next().unwrap(), "1,0.5,7.5,7.0,3,5,200,10,1,1.5,0.5");
    }
}
