//! Baum-Welch on fully observed individual paths, built on the classic
//! forward-backward rather than on collective inference.

use nalgebra::DVector;
use rayon::prelude::*;

use super::fit::{run_em, EStep, EmProblem, Observer};
use super::mstep::{
    m_step_discrete_pooled, m_step_gaussian_pooled, GaussianMoments, MStepOutput, PooledCounts,
};
use super::options::EmOptions;
use super::trace::EmTrace;
use crate::error::{Error, Result};
use crate::hmm::{
    standard_forward_backward, symbol_log_likelihoods, vector_log_likelihoods, Posterior,
};
use crate::model::{HmmParams, Observations, TrajectorySet};

struct BaumWelch<'a> {
    observations: &'a Observations,
}

impl BaumWelch<'_> {
    fn len(&self) -> usize {
        match self.observations {
            Observations::Discrete { paths, .. } => paths.len(),
            Observations::Continuous { paths, .. } => paths.len(),
        }
    }

    fn log_likelihoods(&self, params: &HmmParams, m: usize) -> Result<Vec<DVector<f64>>> {
        match self.observations {
            Observations::Discrete { paths, .. } => symbol_log_likelihoods(params, &paths[m]),
            Observations::Continuous { paths, .. } => vector_log_likelihoods(params, &paths[m]),
        }
    }
}

/// `F` of one path's posteriors on its chain, with `ln ψ` given by the
/// emission log-likelihoods (plus `ln π` at the first step).
fn path_energy(post: &Posterior, params: &HmmParams, log_lik: &[DVector<f64>]) -> f64 {
    let xlogy = |n: f64, l: f64| if n > 0.0 { n * (n.ln() - l) } else { 0.0 };
    let horizon = post.node.len();
    let mut f = 0.0;
    for e in &post.edge {
        for (n, a) in e.iter().zip(params.transition.iter()) {
            f += xlogy(*n, a.ln());
        }
    }
    for (t, (n, ll)) in post.node.iter().zip(log_lik).enumerate() {
        for x in 0..n.len() {
            let mut log_psi = ll[x];
            if t == 0 {
                log_psi += params.initial[x].ln();
            }
            f += xlogy(n[x], log_psi);
        }
        let degree = if horizon == 1 {
            1.0
        } else if t == 0 || t == horizon - 1 {
            2.0
        } else {
            3.0
        };
        f -= (degree - 1.0) * n.iter().map(|&v| xlogy(v, 0.0)).sum::<f64>();
    }
    f
}

impl EmProblem for BaumWelch<'_> {
    type Stats = Vec<Posterior>;

    fn e_step(&self, params: &HmmParams, _opts: &EmOptions) -> Result<EStep<Self::Stats>> {
        let posts = (0..self.len())
            .into_par_iter()
            .map(|m| {
                let ll = self.log_likelihoods(params, m)?;
                Ok(standard_forward_backward(
                    &params.initial,
                    &params.transition,
                    &ll,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let flags = posts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.floored)
            .map(|(m, _)| format!("path {m} has zero probability; posteriors floored"))
            .collect();
        Ok(EStep {
            stats: posts,
            residual: 0.0,
            passes: 1,
            flags,
        })
    }

    fn m_step(
        &self,
        stats: &Self::Stats,
        prev: &HmmParams,
        opts: &EmOptions,
    ) -> Result<MStepOutput> {
        let d = prev.num_states();
        match self.observations {
            Observations::Discrete { num_symbols, paths } => {
                let mut pooled = PooledCounts::zeros(d, Some(*num_symbols));
                let emission = pooled.emission.as_mut().expect("discrete counts");
                for (post, path) in stats.iter().zip(paths) {
                    for (n, &o) in post.node.iter().zip(path) {
                        let mut col = emission.column_mut(o);
                        col += n;
                    }
                }
                for post in stats {
                    pooled.sequences += 1;
                    pooled.initial += &post.node[0];
                    for e in &post.edge {
                        pooled.transition += e;
                    }
                }
                m_step_discrete_pooled(&pooled, prev, opts)
            }
            Observations::Continuous { dim, paths } => {
                let mut pooled = PooledCounts::zeros(d, None);
                let mut moments = GaussianMoments::zeros(d, *dim);
                for (post, path) in stats.iter().zip(paths) {
                    pooled.sequences += 1;
                    pooled.initial += &post.node[0];
                    for e in &post.edge {
                        pooled.transition += e;
                    }
                    for (n, o) in post.node.iter().zip(path) {
                        for x in 0..d {
                            moments.add(x, n[x], o);
                        }
                    }
                }
                m_step_gaussian_pooled(&pooled, &moments, prev, opts)
            }
        }
    }

    fn objective(&self, stats: &Self::Stats, params: &HmmParams) -> Result<f64> {
        let mut total = 0.0;
        for (m, post) in stats.iter().enumerate() {
            let ll = self.log_likelihoods(params, m)?;
            total -= path_energy(post, params, &ll);
        }
        Ok(total)
    }
}

/// Classic Baum-Welch over individually observed paths, symbol or vector
/// valued. Expected counts are pooled over paths exactly as the ensemble fits
/// pool over sequences.
pub fn baum_welch_reference(
    paths: &TrajectorySet,
    init: &HmmParams,
    opts: &EmOptions,
) -> Result<(HmmParams, EmTrace)> {
    baum_welch_reference_with(paths, init, opts, &mut |_, _| {})
}

pub fn baum_welch_reference_with(
    paths: &TrajectorySet,
    init: &HmmParams,
    opts: &EmOptions,
    observer: &mut Observer<'_>,
) -> Result<(HmmParams, EmTrace)> {
    if paths.is_empty() {
        return Err(Error::InvalidDimensions("no paths to learn from".into()));
    }
    let violations = paths.validate(init.num_states());
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    run_em(
        &BaumWelch {
            observations: &paths.observations,
        },
        init,
        opts,
        observer,
    )
}
