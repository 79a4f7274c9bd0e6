use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector or stochastic-matrix row.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance on covariance symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// One failed invariant: which field, and what was measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub defect: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, defect: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            defect: defect.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.defect)
    }
}

/// Row-stochastic emission table `B[x, o] = p(o | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEmission {
    pub probs: DMatrix<f64>,
}

impl DiscreteEmission {
    pub fn num_symbols(&self) -> usize {
        self.probs.ncols()
    }
}

/// One Gaussian density per hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmission {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl GaussianEmission {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    Discrete(DiscreteEmission),
    Gaussian(GaussianEmission),
}

/// Parameters of a time-homogeneous HMM over `horizon` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    pub horizon: usize,
    /// `π(x_1)`.
    pub initial: DVector<f64>,
    /// `A[x, x'] = p(x' | x)`.
    pub transition: DMatrix<f64>,
    pub emission: Emission,
}

/// Emission family requested from [`random_init`].
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionSpec {
    Discrete { num_symbols: usize },
    Gaussian { dim: usize, mean_range: (f64, f64) },
}

impl HmmParams {
    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn discrete(&self) -> Option<&DiscreteEmission> {
        match &self.emission {
            Emission::Discrete(b) => Some(b),
            Emission::Gaussian(_) => None,
        }
    }

    pub fn gaussian(&self) -> Option<&GaussianEmission> {
        match &self.emission {
            Emission::Gaussian(g) => Some(g),
            Emission::Discrete(_) => None,
        }
    }

    /// Checks every invariant and reports each defect found. An empty list
    /// means the parameters are valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let d = self.num_states();
        if d == 0 {
            out.push(Violation::new("d", "must be positive"));
        }
        if self.horizon == 0 {
            out.push(Violation::new("T", "must be positive"));
        }
        check_probability_vector("pi", self.initial.iter().copied(), &mut out);
        if self.transition.shape() != (d, d) {
            out.push(Violation::new(
                "A",
                format!(
                    "has shape {:?}, expected ({d}, {d})",
                    self.transition.shape()
                ),
            ));
        } else {
            check_stochastic_rows("A", &self.transition, &mut out);
        }
        match &self.emission {
            Emission::Discrete(b) => {
                if b.probs.nrows() != d || b.probs.ncols() == 0 {
                    out.push(Violation::new(
                        "B",
                        format!("has shape {:?}, expected ({d}, s >= 1)", b.probs.shape()),
                    ));
                } else {
                    check_stochastic_rows("B", &b.probs, &mut out);
                }
            }
            Emission::Gaussian(g) => check_gaussian(g, d, &mut out),
        }
        out
    }

    /// Returns `Err(Error::Validation)` when [`Self::validate`] finds anything.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Largest absolute difference over all parameter entries. Parameters of
    /// different shape or family compare as infinitely far apart.
    pub fn max_abs_diff(&self, other: &HmmParams) -> f64 {
        if self.initial.len() != other.initial.len()
            || self.transition.shape() != other.transition.shape()
        {
            return f64::INFINITY;
        }
        let mut diff = (&self.initial - &other.initial).amax();
        diff = diff.max((&self.transition - &other.transition).amax());
        match (&self.emission, &other.emission) {
            (Emission::Discrete(a), Emission::Discrete(b))
                if a.probs.shape() == b.probs.shape() =>
            {
                diff.max((&a.probs - &b.probs).amax())
            }
            (Emission::Gaussian(a), Emission::Gaussian(b))
                if a.means.len() == b.means.len() && a.dim() == b.dim() =>
            {
                let means = a
                    .means
                    .iter()
                    .zip(&b.means)
                    .map(|(x, y)| (x - y).amax())
                    .fold(0.0, f64::max);
                let covs = a
                    .covs
                    .iter()
                    .zip(&b.covs)
                    .map(|(x, y)| (x - y).amax())
                    .fold(0.0, f64::max);
                diff.max(means).max(covs)
            }
            _ => f64::INFINITY,
        }
    }

    /// Short content hash of every parameter value, for run traces.
    pub fn snapshot_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.horizon as u64).to_le_bytes());
        let mut feed = |values: &mut dyn Iterator<Item = f64>| {
            for v in values {
                h.update(v.to_bits().to_le_bytes());
            }
        };
        feed(&mut self.initial.iter().copied());
        feed(&mut self.transition.iter().copied());
        match &self.emission {
            Emission::Discrete(b) => feed(&mut b.probs.iter().copied()),
            Emission::Gaussian(g) => {
                for m in &g.means {
                    feed(&mut m.iter().copied());
                }
                for c in &g.covs {
                    feed(&mut c.iter().copied());
                }
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_probability_vector(
    field: &str,
    values: impl Iterator<Item = f64>,
    out: &mut Vec<Violation>,
) {
    let mut sum = 0.0;
    for (i, v) in values.enumerate() {
        if !v.is_finite() || v < 0.0 {
            out.push(Violation::new(format!("{field}[{i}]"), format!("is {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        out.push(Violation::new(field, format!("sums to {sum}")));
    }
}

fn check_stochastic_rows(field: &str, m: &DMatrix<f64>, out: &mut Vec<Violation>) {
    for (r, row) in m.row_iter().enumerate() {
        check_probability_vector(&format!("{field}[{r}]"), row.iter().copied(), out);
    }
}

fn check_gaussian(g: &GaussianEmission, d: usize, out: &mut Vec<Violation>) {
    let s = g.dim();
    if g.means.len() != d || g.covs.len() != d {
        out.push(Violation::new(
            "emission",
            format!(
                "has {} means and {} covariances for {d} states",
                g.means.len(),
                g.covs.len()
            ),
        ));
        return;
    }
    if s == 0 {
        out.push(Violation::new("means", "have dimension 0"));
        return;
    }
    for (x, mean) in g.means.iter().enumerate() {
        if mean.len() != s {
            out.push(Violation::new(
                format!("means[{x}]"),
                format!("has dimension {}, expected {s}", mean.len()),
            ));
        } else if mean.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new(format!("means[{x}]"), "is not finite"));
        }
    }
    for (x, cov) in g.covs.iter().enumerate() {
        let field = format!("Σ[{x}]");
        if cov.shape() != (s, s) {
            out.push(Violation::new(
                field,
                format!("has shape {:?}, expected ({s}, {s})", cov.shape()),
            ));
            continue;
        }
        if cov.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new(field, "is not finite"));
            continue;
        }
        let asym = (cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL {
            out.push(Violation::new(
                field.clone(),
                format!("not symmetric (max asymmetry {asym:e})"),
            ));
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig <= 0.0 {
            out.push(Violation::new(
                field,
                format!("not positive definite (smallest eigenvalue {min_eig})"),
            ));
        }
    }
}

/// Draws a valid parameter set: `π` and every stochastic row from a symmetric
/// Dirichlet(1); Gaussian means uniform on `mean_range` per coordinate with
/// identity covariances.
pub fn random_init(
    num_states: usize,
    horizon: usize,
    emission: &EmissionSpec,
    seed: u64,
) -> Result<HmmParams> {
    if num_states == 0 || horizon == 0 {
        return Err(Error::InvalidDimensions(format!(
            "d = {num_states} and T = {horizon} must both be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = dirichlet_flat(&mut rng, num_states);
    let transition = stochastic_matrix(&mut rng, num_states, num_states);
    let emission = match *emission {
        EmissionSpec::Discrete { num_symbols } => {
            if num_symbols == 0 {
                return Err(Error::InvalidDimensions(
                    "num_symbols must be positive".into(),
                ));
            }
            Emission::Discrete(DiscreteEmission {
                probs: stochastic_matrix(&mut rng, num_states, num_symbols),
            })
        }
        EmissionSpec::Gaussian {
            dim,
            mean_range: (lo, hi),
        } => {
            if dim == 0 || !(lo < hi) {
                return Err(Error::InvalidDimensions(format!(
                    "gaussian dim {dim} with mean range [{lo}, {hi}]"
                )));
            }
            let means = (0..num_states)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(lo..hi)))
                .collect();
            Emission::Gaussian(GaussianEmission {
                means,
                covs: vec![DMatrix::identity(dim, dim); num_states],
            })
        }
    };
    Ok(HmmParams {
        horizon,
        initial,
        transition,
        emission,
    })
}

/// Uniform draw from the probability simplex.
pub(crate) fn dirichlet_flat<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(Exp1));
    let total = v.sum();
    v /= total;
    v
}

pub(crate) fn stochastic_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        m.set_row(r, &dirichlet_flat(rng, cols).transpose());
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_params(d: usize, s: usize) -> HmmParams {
        HmmParams {
            horizon: 4,
            initial: DVector::from_element(d, 1.0 / d as f64),
            transition: DMatrix::from_element(d, d, 1.0 / d as f64),
            emission: Emission::Discrete(DiscreteEmission {
                probs: DMatrix::from_element(d, s, 1.0 / s as f64),
            }),
        }
    }

    #[test]
    fn uniform_model_is_valid() {
        assert!(uniform_params(3, 3).validate().is_empty());
    }

    #[test]
    fn unnormalized_initial_is_reported() {
        let mut p = uniform_params(2, 2);
        p.initial = DVector::from_vec(vec![0.5, 0.6]);
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "pi sums to 1.1");
    }

    #[test]
    fn indefinite_covariance_is_reported() {
        let p = HmmParams {
            horizon: 2,
            initial: DVector::from_vec(vec![0.5, 0.5]),
            transition: DMatrix::from_element(2, 2, 0.5),
            emission: Emission::Gaussian(GaussianEmission {
                means: vec![DVector::zeros(2), DVector::zeros(2)],
                covs: vec![
                    DMatrix::from_diagonal(&DVector::from_vec(vec![-0.1, 1.0])),
                    DMatrix::identity(2, 2),
                ],
            }),
        };
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "Σ[0]");
        assert!(
            v[0].to_string().starts_with("Σ[0] not positive definite"),
            "{}",
            v[0]
        );
    }

    #[test]
    fn negative_entries_and_shape_errors_are_reported() {
        let mut p = uniform_params(2, 3);
        p.transition = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, 0.5, 0.5]);
        let v = p.validate();
        assert!(v.iter().any(|x| x.field == "A[0][1]"), "{v:?}");

        let mut p = uniform_params(2, 3);
        p.transition = DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert!(p.validate().iter().any(|x| x.field == "A"));
    }

    #[test]
    fn one_state_init_is_degenerate() {
        let p = random_init(1, 5, &EmissionSpec::Discrete { num_symbols: 4 }, 99).unwrap();
        assert_eq!(p.initial.as_slice(), &[1.0]);
        assert_eq!(p.transition[(0, 0)], 1.0);
        assert!(p.validate().is_empty());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = EmissionSpec::Discrete { num_symbols: 3 };
        let a = random_init(3, 4, &spec, 7).unwrap();
        let b = random_init(3, 4, &spec, 7).unwrap();
        let c = random_init(3, 4, &spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.snapshot_hash(), b.snapshot_hash());
        assert_ne!(a.snapshot_hash(), c.snapshot_hash());
    }

    #[test]
    fn gaussian_init_respects_range() {
        let spec = EmissionSpec::Gaussian {
            dim: 2,
            mean_range: (-3.0, 3.0),
        };
        let p = random_init(4, 5, &spec, 1).unwrap();
        let g = p.gaussian().unwrap();
        assert!(g.means.iter().flatten().all(|&m| (-3.0..3.0).contains(&m)));
        assert!(g.covs.iter().all(|c| *c == DMatrix::identity(2, 2)));
        assert!(p.validate().is_empty());
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        let spec = EmissionSpec::Discrete { num_symbols: 2 };
        assert!(random_init(0, 3, &spec, 0).is_err());
        assert!(random_init(2, 0, &spec, 0).is_err());
        assert!(random_init(2, 3, &EmissionSpec::Discrete { num_symbols: 0 }, 0).is_err());
    }
}
