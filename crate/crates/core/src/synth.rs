//! Synthetic ground truth, trajectory sampling and aggregation.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::EmOptions;
use crate::model::{
    dirichlet_flat, AggregateSequence, DiscreteEmission, Emission, GaussianEmission, HmmParams,
    Observations, SampleSequence, TrajectorySet,
};
use crate::simplex::normalize_rows;

const STREAM_INITIAL: u64 = 0;
const STREAM_TRANSITION: u64 = 1;
const STREAM_EMISSION: u64 = 2;
const STREAM_GAUSSIAN: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmissionKind {
    /// `num_symbols` defaults to the number of hidden states.
    Discrete {
        #[serde(default)]
        num_symbols: Option<usize>,
    },
    Gaussian {
        #[serde(default = "one")]
        dim: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Total number of individuals.
    #[serde(rename = "N")]
    pub individuals: usize,
    /// Individuals per aggregate sequence.
    #[serde(rename = "M")]
    pub population: usize,
    pub emission: EmissionKind,
    pub seed: u64,
    #[serde(default)]
    pub em: EmOptions,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("T", self.horizon),
            ("N", self.individuals),
            ("M", self.population),
        ] {
            if v == 0 {
                return Err(Error::InvalidDimensions(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        if self.individuals % self.population != 0 {
            return Err(Error::InvalidDimensions(format!(
                "M = {} does not divide N = {}",
                self.population, self.individuals
            )));
        }
        match self.emission {
            EmissionKind::Discrete {
                num_symbols: Some(0),
            }
            | EmissionKind::Gaussian { dim: 0 } => Err(Error::InvalidDimensions(
                "emission dimension must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Number of aggregate sequences, `N / M`.
    pub fn sequences(&self) -> usize {
        self.individuals / self.population
    }

    pub fn num_symbols(&self) -> Option<usize> {
        match self.emission {
            EmissionKind::Discrete { num_symbols } => Some(num_symbols.unwrap_or(self.d)),
            EmissionKind::Gaussian { .. } => None,
        }
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Row-permuted, row-normalized `I + 0.05 √d · exp(U[−1, 1])`, with the noise
/// drawn independently per entry. For a non-square shape the identity part is
/// `1` where row and column index agree.
fn noised_identity<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let scale = 0.05 * (rows as f64).sqrt();
    let mut m = DMatrix::from_fn(rows, cols, |i, j| {
        let noise = scale * rng.random_range(-1.0..=1.0f64).exp();
        if i == j {
            1.0 + noise
        } else {
            noise
        }
    });
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(rng);
    m = DMatrix::from_fn(rows, cols, |i, j| m[(order[i], j)]);
    normalize_rows(&mut m);
    m
}

/// Ground-truth parameters: initial distribution uniform on the simplex,
/// transition and discrete emission matrices from noised identities on
/// separate random streams, Gaussian means uniform on `[−5d, 5d]` with
/// covariance `σ² I`, `σ² ~ U[1, 5]` per state.
pub fn gen_ground_truth(spec: &ExperimentSpec) -> Result<HmmParams> {
    spec.validate()?;
    let d = spec.d;
    let initial = dirichlet_flat(&mut stream(spec.seed, STREAM_INITIAL), d);
    let transition = noised_identity(&mut stream(spec.seed, STREAM_TRANSITION), d, d);
    let emission = match spec.emission {
        EmissionKind::Discrete { num_symbols } => {
            let s = num_symbols.unwrap_or(d);
            Emission::Discrete(DiscreteEmission {
                probs: noised_identity(&mut stream(spec.seed, STREAM_EMISSION), d, s),
            })
        }
        EmissionKind::Gaussian { dim } => {
            let mut rng = stream(spec.seed, STREAM_GAUSSIAN);
            let bound = 5.0 * d as f64;
            let means = (0..d)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-bound..=bound)))
                .collect();
            let covs = (0..d)
                .map(|_| DMatrix::identity(dim, dim) * rng.random_range(1.0..=5.0))
                .collect();
            Emission::Gaussian(GaussianEmission { means, covs })
        }
    };
    Ok(HmmParams {
        horizon: spec.horizon,
        initial,
        transition,
        emission,
    })
}

fn categorical(p: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(p).map_err(|e| Error::Format(format!("cannot sample from {p:?}: {e}")))
}

/// `count` independent length-`horizon` paths by ancestral sampling.
pub fn sample_trajectories(
    params: &HmmParams,
    count: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectorySet> {
    params.ensure_valid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = categorical(params.initial.as_slice())?;
    let rows = |m: &DMatrix<f64>| -> Result<Vec<WeightedIndex<f64>>> {
        m.row_iter()
            .map(|r| categorical(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    };
    let transition = rows(&params.transition)?;
    let hidden: Vec<Vec<usize>> = (0..count)
        .map(|_| {
            let mut path: Vec<usize> = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let x = if t == 0 {
                    initial.sample(&mut rng)
                } else {
                    transition[path[t - 1]].sample(&mut rng)
                };
                path.push(x);
            }
            path
        })
        .collect();
    let observations = match &params.emission {
        Emission::Discrete(b) => {
            let emit = rows(&b.probs)?;
            Observations::Discrete {
                num_symbols: b.num_symbols(),
                paths: hidden
                    .iter()
                    .map(|path| path.iter().map(|&x| emit[x].sample(&mut rng)).collect())
                    .collect(),
            }
        }
        Emission::Gaussian(g) => {
            let factors = g
                .covs
                .iter()
                .enumerate()
                .map(|(x, c)| {
                    Cholesky::new(c.clone())
                        .map(|f| f.l())
                        .ok_or(Error::SingularCovariance { state: x })
                })
                .collect::<Result<Vec<_>>>()?;
            let dim = g.dim();
            Observations::Continuous {
                dim,
                paths: hidden
                    .iter()
                    .map(|path| {
                        path.iter()
                            .map(|&x| {
                                let z = DVector::from_fn(dim, |_, _| {
                                    rng.sample::<f64, _>(StandardNormal)
                                });
                                &g.means[x] + &factors[x] * z
                            })
                            .collect()
                    })
                    .collect(),
            }
        }
    };
    Ok(TrajectorySet {
        hidden,
        observations,
    })
}

fn groups(count: usize, population: usize) -> Result<usize> {
    if population == 0 {
        return Err(Error::InvalidDimensions(
            "aggregate size M must be at least 1".into(),
        ));
    }
    if count == 0 || count % population != 0 {
        return Err(Error::InvalidDimensions(format!(
            "M = {population} does not divide the {count} trajectories"
        )));
    }
    Ok(count / population)
}

/// Splits symbol trajectories into consecutive groups of `population` and
/// turns each group into per-step normalized symbol histograms.
pub fn aggregate(traj: &TrajectorySet, population: usize) -> Result<Vec<AggregateSequence>> {
    let Observations::Discrete { num_symbols, paths } = &traj.observations else {
        return Err(Error::DimensionMismatch(
            "aggregate needs symbol observations; use aggregate_continuous".into(),
        ));
    };
    let k = groups(paths.len(), population)?;
    let horizon = traj.horizon();
    (0..k)
        .map(|g| {
            let members = &paths[g * population..(g + 1) * population];
            let counts: Vec<Vec<u64>> = (0..horizon)
                .map(|t| {
                    let mut c = vec![0u64; *num_symbols];
                    for path in members {
                        c[path[t]] += 1;
                    }
                    c
                })
                .collect();
            AggregateSequence::from_counts(&counts)
        })
        .collect()
}

/// Splits vector trajectories into consecutive groups of `population`; each
/// group keeps its samples per step but forgets which sample belongs to which
/// individual across steps.
pub fn aggregate_continuous(
    traj: &TrajectorySet,
    population: usize,
) -> Result<Vec<SampleSequence>> {
    let Observations::Continuous { paths, .. } = &traj.observations else {
        return Err(Error::DimensionMismatch(
            "aggregate_continuous needs vector observations".into(),
        ));
    };
    let k = groups(paths.len(), population)?;
    let horizon = traj.horizon();
    (0..k)
        .map(|g| {
            let members = &paths[g * population..(g + 1) * population];
            SampleSequence::new(
                (0..horizon)
                    .map(|t| members.iter().map(|p| p[t].clone()).collect())
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: usize, seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            d,
            horizon: 5,
            individuals: 100,
            population: 10,
            emission: EmissionKind::Discrete { num_symbols: None },
            seed,
            em: EmOptions::default(),
        }
    }

    #[test]
    fn single_state_truth() {
        let p = gen_ground_truth(&spec(1, 3)).unwrap();
        assert_eq!(p.transition, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(p.initial, DVector::from_element(1, 1.0));
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        let a = gen_ground_truth(&spec(3, 9)).unwrap();
        let mut s = spec(3, 9);
        s.emission = EmissionKind::Gaussian { dim: 1 };
        let b = gen_ground_truth(&s).unwrap();
        assert_eq!(a.initial, b.initial);
        assert_eq!(a.transition, b.transition);
    }

    #[test]
    fn indivisible_population_is_rejected() {
        let mut s = spec(3, 1);
        s.population = 7;
        assert!(s.validate().is_err());
        s.population = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_uses_short_names() {
        let s: ExperimentSpec = serde_json::from_str(
            r#"{"d": 3, "T": 5, "N": 200, "M": 10, "emission": {"kind": "gaussian"}, "seed": 4}"#,
        )
        .unwrap();
        assert_eq!(s.emission, EmissionKind::Gaussian { dim: 1 });
        assert_eq!(s.sequences(), 20);
    }
}
