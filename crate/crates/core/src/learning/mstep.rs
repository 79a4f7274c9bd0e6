//! Closed-form M-steps. Every update pools expected counts over sequences
//! and time, then normalizes rows; blocks listed in `freeze` are copied from
//! the previous iterate, and rows that received no mass keep their previous
//! values.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::options::{EmOptions, ParamGroup};
use crate::error::{Error, Result};
use crate::hmm::obs_joints;
use crate::model::{
    DiscreteEmission, Emission, GaussianEmission, HmmParams, MarginalSet, SampleSequence,
};
use crate::simplex::row_sums;

/// Rows whose pooled mass is at or below this are left unchanged.
const MIN_ROW_MASS: f64 = 1e-300;

const MAX_REG_ESCALATIONS: usize = 40;

#[derive(Debug, Clone)]
pub struct MStepOutput {
    pub params: HmmParams,
    pub flags: Vec<String>,
}

/// Expected counts pooled over sequences: `initial` sums `n_1`, `transition`
/// sums `n_{t,t+1}`, `emission` sums the observation tables (discrete only).
#[derive(Debug, Clone)]
pub struct PooledCounts {
    pub sequences: usize,
    pub initial: DVector<f64>,
    pub transition: DMatrix<f64>,
    pub emission: Option<DMatrix<f64>>,
}

impl PooledCounts {
    pub fn zeros(d: usize, num_symbols: Option<usize>) -> Self {
        Self {
            sequences: 0,
            initial: DVector::zeros(d),
            transition: DMatrix::zeros(d, d),
            emission: num_symbols.map(|s| DMatrix::zeros(d, s)),
        }
    }

    pub fn add(&mut self, m: &MarginalSet) {
        self.sequences += 1;
        self.initial += &m.node[0];
        for e in &m.edge {
            self.transition += e;
        }
        if let Some(acc) = &mut self.emission {
            for j in obs_joints(m) {
                *acc += j;
            }
        }
    }

    pub fn from_marginals(marginals: &[MarginalSet], num_symbols: Option<usize>) -> Result<Self> {
        let d = marginals
            .first()
            .ok_or_else(|| Error::InvalidDimensions("no marginals to pool".into()))?
            .num_states();
        let mut pooled = Self::zeros(d, num_symbols);
        for m in marginals {
            pooled.add(m);
        }
        Ok(pooled)
    }
}

/// Row-normalizes `counts`, falling back to `prev` rows without mass.
fn ratio_rows(
    counts: &DMatrix<f64>,
    prev: &DMatrix<f64>,
    name: &str,
    flags: &mut Vec<String>,
) -> DMatrix<f64> {
    let mut out = prev.clone();
    for (x, total) in row_sums(counts).iter().enumerate() {
        if *total > MIN_ROW_MASS {
            out.set_row(x, &(counts.row(x) / *total));
        } else {
            flags.push(format!("{name} row {x} has no mass; previous row kept"));
        }
    }
    out
}

/// Updates the initial distribution and transition matrix from pooled counts.
pub(crate) fn update_chain(
    pooled: &PooledCounts,
    prev: &HmmParams,
    opts: &EmOptions,
    flags: &mut Vec<String>,
) -> (DVector<f64>, DMatrix<f64>) {
    let initial = if opts.is_frozen(ParamGroup::Initial) {
        prev.initial.clone()
    } else {
        let mut pi = &pooled.initial / pooled.sequences as f64;
        pi /= pi.sum();
        pi
    };
    let transition = if opts.is_frozen(ParamGroup::Transition) {
        prev.transition.clone()
    } else {
        ratio_rows(&pooled.transition, &prev.transition, "A", flags)
    };
    (initial, transition)
}

/// Discrete M-step over the marginals of one or more sequences:
/// `π = mean n_1`, `A ∝ Σ n_{t,t+1}`, `B ∝ Σ n_{t,t}`, each row normalized by
/// its pooled node mass.
pub fn m_step_discrete(
    marginals: &[MarginalSet],
    prev: &HmmParams,
    opts: &EmOptions,
) -> Result<MStepOutput> {
    let b = prev
        .discrete()
        .ok_or_else(|| Error::DimensionMismatch("m_step_discrete needs a discrete model".into()))?;
    let pooled = PooledCounts::from_marginals(marginals, Some(b.num_symbols()))?;
    m_step_discrete_pooled(&pooled, prev, opts)
}

pub fn m_step_discrete_pooled(
    pooled: &PooledCounts,
    prev: &HmmParams,
    opts: &EmOptions,
) -> Result<MStepOutput> {
    let b = prev
        .discrete()
        .ok_or_else(|| Error::DimensionMismatch("m_step_discrete needs a discrete model".into()))?;
    let mut flags = Vec::new();
    let (initial, transition) = update_chain(pooled, prev, opts, &mut flags);
    let probs = match (&pooled.emission, opts.is_frozen(ParamGroup::Emission)) {
        (Some(counts), false) => ratio_rows(counts, &b.probs, "B", &mut flags),
        _ => b.probs.clone(),
    };
    Ok(MStepOutput {
        params: HmmParams {
            horizon: prev.horizon,
            initial,
            transition,
            emission: Emission::Discrete(DiscreteEmission { probs }),
        },
        flags,
    })
}

/// Weighted first and second moments of the observations attributed to each
/// state, pooled over sequences, time and samples.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    pub weight: DVector<f64>,
    /// `Σ w o` per state.
    pub first: Vec<DVector<f64>>,
    /// `Σ w o oᵀ` per state.
    pub second: Vec<DMatrix<f64>>,
}

impl GaussianMoments {
    pub fn zeros(d: usize, dim: usize) -> Self {
        Self {
            weight: DVector::zeros(d),
            first: vec![DVector::zeros(dim); d],
            second: vec![DMatrix::zeros(dim, dim); d],
        }
    }

    pub fn add(&mut self, x: usize, w: f64, o: &DVector<f64>) {
        if w == 0.0 {
            return;
        }
        self.weight[x] += w;
        self.first[x].axpy(w, o, 1.0);
        self.second[x].ger(w, o, o, 1.0);
    }

    /// Adds one sequence; sample `m` at step `t` contributes to state `x` with
    /// weight `n_t^{(m)}(x) / M`.
    pub fn add_sequence(&mut self, m: &MarginalSet, obs: &SampleSequence) {
        for (joint, step) in obs_joints(m).iter().zip(&obs.samples) {
            for (k, o) in step.iter().enumerate() {
                for x in 0..joint.nrows() {
                    self.add(x, joint[(x, k)], o);
                }
            }
        }
    }
}

/// Gaussian M-step: `π` and `A` as in the discrete case, means as
/// weight-averaged samples and, with `estimate_cov`, covariances as the
/// weighted scatter around the new means plus `cov_reg · I`.
pub fn m_step_gaussian(
    marginals: &[MarginalSet],
    obs: &[SampleSequence],
    prev: &HmmParams,
    opts: &EmOptions,
) -> Result<MStepOutput> {
    if marginals.len() != obs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} marginal sets for {} sequences",
            marginals.len(),
            obs.len()
        )));
    }
    let g = prev
        .gaussian()
        .ok_or_else(|| Error::DimensionMismatch("m_step_gaussian needs a Gaussian model".into()))?;
    let pooled = PooledCounts::from_marginals(marginals, None)?;
    let mut moments = GaussianMoments::zeros(prev.num_states(), g.dim());
    for (m, o) in marginals.iter().zip(obs) {
        moments.add_sequence(m, o);
    }
    m_step_gaussian_pooled(&pooled, &moments, prev, opts)
}

pub fn m_step_gaussian_pooled(
    pooled: &PooledCounts,
    moments: &GaussianMoments,
    prev: &HmmParams,
    opts: &EmOptions,
) -> Result<MStepOutput> {
    let g = prev
        .gaussian()
        .ok_or_else(|| Error::DimensionMismatch("m_step_gaussian needs a Gaussian model".into()))?;
    let mut flags = Vec::new();
    let (initial, transition) = update_chain(pooled, prev, opts, &mut flags);
    let dim = g.dim();
    let mut means = g.means.clone();
    let mut covs = g.covs.clone();
    for x in 0..prev.num_states() {
        let w = moments.weight[x];
        if w <= MIN_ROW_MASS {
            flags.push(format!(
                "state {x} has no mass; previous mean and covariance kept"
            ));
            continue;
        }
        if !opts.is_frozen(ParamGroup::Means) {
            means[x] = &moments.first[x] / w;
        }
        if opts.estimate_cov && !opts.is_frozen(ParamGroup::Covariances) {
            let mu = &means[x];
            // Σ w (o − μ)(o − μ)ᵀ = S2 − μ S1ᵀ − S1 μᵀ + w μ μᵀ
            let s1 = &moments.first[x];
            let mut scatter = &moments.second[x] - mu * s1.transpose() - s1 * mu.transpose()
                + mu * mu.transpose() * w;
            scatter /= w;
            scatter = (&scatter + scatter.transpose()) * 0.5;
            let (cov, escalations) = regularize(scatter, opts.cov_reg, dim);
            if escalations > 0 {
                flags.push(format!(
                    "covariance of state {x} collapsed; regularization raised {escalations} times"
                ));
            }
            covs[x] = cov;
        }
    }
    Ok(MStepOutput {
        params: HmmParams {
            horizon: prev.horizon,
            initial,
            transition,
            emission: Emission::Gaussian(GaussianEmission { means, covs }),
        },
        flags,
    })
}

/// Adds `reg · I`, multiplying `reg` by ten until the result factors with a
/// determinant above `1e-300`.
fn regularize(scatter: DMatrix<f64>, reg: f64, dim: usize) -> (DMatrix<f64>, usize) {
    let mut reg = reg.max(f64::MIN_POSITIVE);
    for escalations in 0..MAX_REG_ESCALATIONS {
        let cov = &scatter + DMatrix::identity(dim, dim) * reg;
        if let Some(chol) = Cholesky::new(cov.clone()) {
            let log_det: f64 = 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|v| v.ln())
                    .sum::<f64>();
            if log_det > 1e-300f64.ln() {
                return (cov, escalations);
            }
        }
        reg *= 10.0;
    }
    (DMatrix::identity(dim, dim), MAX_REG_ESCALATIONS)
}
