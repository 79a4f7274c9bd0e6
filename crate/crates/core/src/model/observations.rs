use nalgebra::DVector;

use super::params::Violation;
use crate::error::{Error, Result};

/// Histogram sums must match 1 within this tolerance.
pub const HISTOGRAM_TOL: f64 = 1e-9;
/// Allowed distance of `M · y_t(o)` from an integer count.
pub const COUNT_TOL: f64 = 1e-6;

/// Normalized per-step observation histograms of a population of size `M`.
///
/// `histograms[t][o]` is the fraction of the population that emitted symbol
/// `o` at step `t`; the raw count is `population * histograms[t][o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSequence {
    pub population: usize,
    pub histograms: Vec<DVector<f64>>,
}

impl AggregateSequence {
    pub fn new(population: usize, histograms: Vec<DVector<f64>>) -> Result<Self> {
        let seq = Self {
            population,
            histograms,
        };
        let v = seq.validate();
        if v.is_empty() {
            Ok(seq)
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Builds a sequence from raw per-step symbol counts; the population is
    /// the count total, which must agree across steps.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let population = counts.first().map_or(0, |c| c.iter().sum::<u64>());
        if counts.iter().any(|c| c.iter().sum::<u64>() != population) {
            return Err(Error::Format(
                "per-step counts must sum to the same population".into(),
            ));
        }
        let m = population as f64;
        let histograms = counts
            .iter()
            .map(|c| DVector::from_iterator(c.len(), c.iter().map(|&k| k as f64 / m)))
            .collect();
        Self::new(population as usize, histograms)
    }

    pub fn horizon(&self) -> usize {
        self.histograms.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.histograms.first().map_or(0, |h| h.len())
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.population == 0 {
            out.push(Violation::new("M", "must be positive"));
        }
        if self.histograms.is_empty() {
            out.push(Violation::new("y", "is empty"));
        }
        let s = self.num_symbols();
        let m = self.population as f64;
        for (t, h) in self.histograms.iter().enumerate() {
            if h.len() != s || s == 0 {
                out.push(Violation::new(
                    format!("y[{t}]"),
                    format!("has {} symbols, expected {s}", h.len()),
                ));
                continue;
            }
            if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
                out.push(Violation::new(
                    format!("y[{t}]"),
                    "has a negative or non-finite entry",
                ));
                continue;
            }
            let sum = h.sum();
            if (sum - 1.0).abs() > HISTOGRAM_TOL {
                out.push(Violation::new(format!("y[{t}]"), format!("sums to {sum}")));
            }
            if self.population > 0 {
                let worst = h
                    .iter()
                    .map(|v| (v * m - (v * m).round()).abs())
                    .fold(0.0, f64::max);
                if worst > COUNT_TOL {
                    out.push(Violation::new(
                        format!("y[{t}]"),
                        format!(
                            "is not a count histogram for M = {} (off by {worst:e})",
                            self.population
                        ),
                    ));
                }
            }
        }
        out
    }
}

/// Individual observation paths, discrete symbols or real vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Discrete {
        num_symbols: usize,
        paths: Vec<Vec<usize>>,
    },
    Continuous {
        dim: usize,
        paths: Vec<Vec<DVector<f64>>>,
    },
}

/// Sampled individuals: hidden paths together with what each one emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub hidden: Vec<Vec<usize>>,
    pub observations: Observations,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.hidden.first().map_or(0, Vec::len)
    }

    /// Keeps the individuals at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> TrajectorySet {
        let hidden = indices.iter().map(|&i| self.hidden[i].clone()).collect();
        let observations = match &self.observations {
            Observations::Discrete { num_symbols, paths } => Observations::Discrete {
                num_symbols: *num_symbols,
                paths: indices.iter().map(|&i| paths[i].clone()).collect(),
            },
            Observations::Continuous { dim, paths } => Observations::Continuous {
                dim: *dim,
                paths: indices.iter().map(|&i| paths[i].clone()).collect(),
            },
        };
        TrajectorySet {
            hidden,
            observations,
        }
    }

    pub fn validate(&self, num_states: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let horizon = self.horizon();
        for (m, x) in self.hidden.iter().enumerate() {
            if x.len() != horizon {
                out.push(Violation::new(
                    format!("x[{m}]"),
                    format!("has length {}, expected {horizon}", x.len()),
                ));
            }
            if let Some(bad) = x.iter().find(|&&s| s >= num_states) {
                out.push(Violation::new(
                    format!("x[{m}]"),
                    format!("state {bad} out of range"),
                ));
            }
        }
        match &self.observations {
            Observations::Discrete { num_symbols, paths } => {
                if paths.len() != self.hidden.len() {
                    out.push(Violation::new("o", "count differs from hidden paths"));
                }
                for (m, o) in paths.iter().enumerate() {
                    if o.len() != horizon {
                        out.push(Violation::new(
                            format!("o[{m}]"),
                            format!("has length {}, expected {horizon}", o.len()),
                        ));
                    }
                    if let Some(bad) = o.iter().find(|&&s| s >= *num_symbols) {
                        out.push(Violation::new(
                            format!("o[{m}]"),
                            format!("symbol {bad} out of range"),
                        ));
                    }
                }
            }
            Observations::Continuous { dim, paths } => {
                if paths.len() != self.hidden.len() {
                    out.push(Violation::new("o", "count differs from hidden paths"));
                }
                for (m, o) in paths.iter().enumerate() {
                    if o.len() != horizon {
                        out.push(Violation::new(
                            format!("o[{m}]"),
                            format!("has length {}, expected {horizon}", o.len()),
                        ));
                    }
                    if o.iter().any(|v| v.len() != *dim) {
                        out.push(Violation::new(
                            format!("o[{m}]"),
                            format!("has a vector of dimension other than {dim}"),
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Continuous observations of `M` unlabelled individuals: `samples[t][m]`.
///
/// Sample indices are not linked across steps; step `t` is just the set of
/// vectors recorded at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSequence {
    pub samples: Vec<Vec<DVector<f64>>>,
}

impl SampleSequence {
    pub fn new(samples: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        let population = samples.first().map_or(0, Vec::len);
        let dim = samples
            .first()
            .and_then(|s| s.first())
            .map_or(0, |v| v.len());
        if samples.is_empty() || population == 0 || dim == 0 {
            return Err(Error::InvalidDimensions(
                "sample sequence needs T >= 1, M >= 1 and dimension >= 1".into(),
            ));
        }
        for (t, step) in samples.iter().enumerate() {
            if step.len() != population || step.iter().any(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch(format!(
                    "step {t} must hold {population} vectors of dimension {dim}"
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn horizon(&self) -> usize {
        self.samples.len()
    }

    pub fn population(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.samples
            .first()
            .and_then(|s| s.first())
            .map_or(0, |v| v.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_are_normalized_by_population() {
        let seq = AggregateSequence::from_counts(&[vec![1, 3], vec![4, 0]]).unwrap();
        assert_eq!(seq.population, 4);
        assert_eq!(seq.histograms[0].as_slice(), &[0.25, 0.75]);
        assert_eq!(seq.histograms[1].as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn inconsistent_populations_are_rejected() {
        assert!(AggregateSequence::from_counts(&[vec![1, 3], vec![1, 0]]).is_err());
    }

    #[test]
    fn zero_population_is_rejected() {
        let err = AggregateSequence::new(0, vec![DVector::from_vec(vec![1.0])]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn non_count_histograms_are_reported() {
        let h = vec![DVector::from_vec(vec![0.3, 0.7])];
        assert!(AggregateSequence::new(10, h.clone()).is_ok());
        let err = AggregateSequence::new(3, h).unwrap_err();
        assert!(err.to_string().contains("not a count histogram"), "{err}");
    }

    #[test]
    fn ragged_samples_are_rejected() {
        let v = |x: f64| DVector::from_vec(vec![x]);
        assert!(SampleSequence::new(vec![vec![v(0.0), v(1.0)], vec![v(2.0)]]).is_err());
        let s = SampleSequence::new(vec![vec![v(0.0), v(1.0)], vec![v(2.0), v(3.0)]]).unwrap();
        assert_eq!((s.horizon(), s.population(), s.dim()), (2, 2, 1));
    }
}
