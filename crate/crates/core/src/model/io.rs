//! JSON file formats.
//!
//! * model: `{"d", "T", "pi", "A", "emission": {"kind": "discrete", "B"} | {"kind": "gaussian", "means", "covs"}}`
//! * aggregate sequence: `{"M", "y"}`
//! * trajectories: JSON lines, `{"x": [int], "o": [int] | [[f64]]}`
//! * marginals: `{"node", "edge", "obs": {"kind": "discrete", "joint"} | {"kind": "samples", "weights"}}`

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::marginals::{MarginalSet, ObsMarginals};
use super::observations::{AggregateSequence, Observations, TrajectorySet};
use super::params::{DiscreteEmission, Emission, GaussianEmission, HmmParams};
use crate::error::{Error, Result};
use crate::simplex::{from_rows, to_rows};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EmissionFile {
    Discrete {
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
    },
    Gaussian {
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    d: usize,
    #[serde(rename = "T")]
    horizon: usize,
    pi: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    emission: EmissionFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct SequenceFile {
    #[serde(rename = "M")]
    population: usize,
    y: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ObsLine {
    Symbols(Vec<usize>),
    Vectors(Vec<Vec<f64>>),
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryLine {
    x: Vec<usize>,
    o: ObsLine,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ObsMarginalFile {
    Discrete { joint: Vec<Vec<Vec<f64>>> },
    Samples { weights: Vec<Vec<Vec<f64>>> },
}

#[derive(Debug, Serialize, Deserialize)]
struct MarginalFile {
    node: Vec<Vec<f64>>,
    edge: Vec<Vec<Vec<f64>>>,
    obs: ObsMarginalFile,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    from_rows(rows).ok_or_else(|| Error::Format(format!("{what} has ragged rows")))
}

impl From<&HmmParams> for ModelFile {
    fn from(p: &HmmParams) -> Self {
        let emission = match &p.emission {
            Emission::Discrete(b) => EmissionFile::Discrete {
                b: to_rows(&b.probs),
            },
            Emission::Gaussian(g) => EmissionFile::Gaussian {
                means: g
                    .means
                    .iter()
                    .map(|m| m.iter().copied().collect())
                    .collect(),
                covs: g.covs.iter().map(to_rows).collect(),
            },
        };
        ModelFile {
            d: p.num_states(),
            horizon: p.horizon,
            pi: p.initial.iter().copied().collect(),
            a: to_rows(&p.transition),
            emission,
        }
    }
}

impl TryFrom<ModelFile> for HmmParams {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.pi.len() != f.d {
            return Err(Error::Format(format!(
                "pi has {} entries but d = {}",
                f.pi.len(),
                f.d
            )));
        }
        let emission = match f.emission {
            EmissionFile::Discrete { b } => Emission::Discrete(DiscreteEmission {
                probs: matrix(&b, "B")?,
            }),
            EmissionFile::Gaussian { means, covs } => Emission::Gaussian(GaussianEmission {
                means: means.into_iter().map(DVector::from_vec).collect(),
                covs: covs
                    .iter()
                    .map(|c| matrix(c, "covariance"))
                    .collect::<Result<_>>()?,
            }),
        };
        Ok(HmmParams {
            horizon: f.horizon,
            initial: DVector::from_vec(f.pi),
            transition: matrix(&f.a, "A")?,
            emission,
        })
    }
}

impl HmmParams {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    /// Parses a model file. Shape errors are reported; probabilistic
    /// invariants are left to [`HmmParams::validate`].
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(s)?.try_into()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl AggregateSequence {
    pub fn to_json(&self) -> Result<String> {
        let f = SequenceFile {
            population: self.population,
            y: self
                .histograms
                .iter()
                .map(|h| h.iter().copied().collect())
                .collect(),
        };
        Ok(serde_json::to_string(&f)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SequenceFile = serde_json::from_str(s)?;
        Self::new(
            f.population,
            f.y.into_iter().map(DVector::from_vec).collect(),
        )
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl TrajectorySet {
    /// Writes one JSON object per individual.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (m, x) in self.hidden.iter().enumerate() {
            let o = match &self.observations {
                Observations::Discrete { paths, .. } => ObsLine::Symbols(paths[m].clone()),
                Observations::Continuous { paths, .. } => ObsLine::Vectors(
                    paths[m]
                        .iter()
                        .map(|v| v.iter().copied().collect())
                        .collect(),
                ),
            };
            serde_json::to_writer(&mut w, &TrajectoryLine { x: x.clone(), o })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads JSON lines. For symbol observations the alphabet size is
    /// `num_symbols` when given, else one past the largest symbol seen.
    pub fn read_jsonl<R: BufRead>(r: R, num_symbols: Option<usize>) -> Result<Self> {
        let mut hidden = Vec::new();
        let mut symbols = Vec::new();
        let mut vectors = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TrajectoryLine = serde_json::from_str(&line)?;
            hidden.push(rec.x);
            match rec.o {
                ObsLine::Symbols(o) if vectors.is_empty() => symbols.push(o),
                ObsLine::Vectors(o) if symbols.is_empty() => {
                    vectors.push(o.into_iter().map(DVector::from_vec).collect::<Vec<_>>())
                }
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: mixes symbol and vector observations",
                        i + 1
                    )))
                }
            }
        }
        let observations = if !vectors.is_empty() {
            let dim = vectors
                .first()
                .and_then(|p: &Vec<DVector<f64>>| p.first())
                .map_or(0, |v| v.len());
            Observations::Continuous {
                dim,
                paths: vectors,
            }
        } else {
            let seen = symbols.iter().flatten().max().map_or(0, |m| m + 1);
            Observations::Discrete {
                num_symbols: num_symbols.unwrap_or(seen).max(seen),
                paths: symbols,
            }
        };
        Ok(TrajectorySet {
            hidden,
            observations,
        })
    }

    pub fn read(path: impl AsRef<Path>, num_symbols: Option<usize>) -> Result<Self> {
        Self::read_jsonl(BufReader::new(File::open(path)?), num_symbols)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

impl MarginalSet {
    pub fn to_json(&self) -> Result<String> {
        let obs = match &self.obs {
            ObsMarginals::Discrete(j) => ObsMarginalFile::Discrete {
                joint: j.iter().map(to_rows).collect(),
            },
            ObsMarginals::Samples(w) => ObsMarginalFile::Samples {
                weights: w.iter().map(|m| to_rows(&m.transpose())).collect(),
            },
        };
        let f = MarginalFile {
            node: self
                .node
                .iter()
                .map(|n| n.iter().copied().collect())
                .collect(),
            edge: self.edge.iter().map(to_rows).collect(),
            obs,
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: MarginalFile = serde_json::from_str(s)?;
        let obs = match f.obs {
            ObsMarginalFile::Discrete { joint } => ObsMarginals::Discrete(
                joint
                    .iter()
                    .map(|j| matrix(j, "joint"))
                    .collect::<Result<_>>()?,
            ),
            ObsMarginalFile::Samples { weights } => ObsMarginals::Samples(
                weights
                    .iter()
                    .map(|w| matrix(w, "weights").map(|m| m.transpose()))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(MarginalSet {
            node: f.node.into_iter().map(DVector::from_vec).collect(),
            edge: f
                .edge
                .iter()
                .map(|e| matrix(e, "edge"))
                .collect::<Result<_>>()?,
            obs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_init, EmissionSpec};

    #[test]
    fn model_file_uses_documented_keys() {
        let p = random_init(2, 3, &EmissionSpec::Discrete { num_symbols: 2 }, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        for key in ["d", "T", "pi", "A", "emission"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["emission"]["kind"], "discrete");
        assert!(v["emission"]["B"].is_array());
    }

    #[test]
    fn gaussian_model_parses() {
        let s = r#"{"d": 1, "T": 2, "pi": [1.0], "A": [[1.0]],
                    "emission": {"kind": "gaussian", "means": [[0.5, 1.0]],
                                 "covs": [[[2.0, 0.0], [0.0, 1.0]]]}}"#;
        let p = HmmParams::from_json(s).unwrap();
        assert!(p.validate().is_empty());
        assert_eq!(p.gaussian().unwrap().dim(), 2);
    }

    #[test]
    fn ragged_matrix_is_a_format_error() {
        let s = r#"{"d": 2, "T": 2, "pi": [0.5, 0.5], "A": [[1.0], [0.5, 0.5]],
                    "emission": {"kind": "discrete", "B": [[1.0], [1.0]]}}"#;
        assert!(matches!(HmmParams::from_json(s), Err(Error::Format(_))));
    }

    #[test]
    fn trajectory_lines_round_trip() {
        let set = TrajectorySet {
            hidden: vec![vec![0, 1], vec![1, 1]],
            observations: Observations::Discrete {
                num_symbols: 3,
                paths: vec![vec![2, 0], vec![1, 1]],
            },
        };
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"x":[0,1],"o":[2,0]}"#);
        let back = TrajectorySet::read_jsonl(&buf[..], Some(3)).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn vector_trajectories_parse() {
        let text = "{\"x\":[0],\"o\":[[1.5,2.0]]}\n";
        let set = TrajectorySet::read_jsonl(text.as_bytes(), None).unwrap();
        match set.observations {
            Observations::Continuous { dim, paths } => {
                assert_eq!(dim, 2);
                assert_eq!(paths[0][0].as_slice(), &[1.5, 2.0]);
            }
            _ => panic!("expected continuous observations"),
        }
    }

    #[test]
    fn sequence_file_round_trips() {
        let seq = AggregateSequence::from_counts(&[vec![1, 2, 0], vec![0, 0, 3]]).unwrap();
        let back = AggregateSequence::from_json(&seq.to_json().unwrap()).unwrap();
        assert_eq!(back, seq);
        let v: serde_json::Value = serde_json::from_str(&seq.to_json().unwrap()).unwrap();
        assert_eq!(v["M"], 3);
    }
}
