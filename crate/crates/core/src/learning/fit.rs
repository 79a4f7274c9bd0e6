use std::time::Instant;

use rayon::prelude::*;

use super::mstep::{
    m_step_discrete_pooled, m_step_gaussian_pooled, GaussianMoments, MStepOutput, PooledCounts,
};
use super::options::EmOptions;
use super::trace::{EmTrace, IterationRecord};
use crate::error::{Error, Result};
use crate::hmm::{bethe_continuous, bethe_discrete, cfb_continuous, cfb_discrete, CfbResult};
use crate::model::{AggregateSequence, HmmParams, MarginalSet, SampleSequence};

/// Called after every iteration with its record and the new parameters.
pub type Observer<'a> = dyn FnMut(&IterationRecord, &HmmParams) + 'a;

pub(crate) struct EStep<S> {
    pub stats: S,
    pub residual: f64,
    pub passes: usize,
    pub flags: Vec<String>,
}

/// One EM problem: how to infer expected statistics under fixed parameters,
/// re-estimate from them, and score the pair with the surrogate objective.
pub(crate) trait EmProblem {
    type Stats;
    fn e_step(&self, params: &HmmParams, opts: &EmOptions) -> Result<EStep<Self::Stats>>;
    fn m_step(
        &self,
        stats: &Self::Stats,
        prev: &HmmParams,
        opts: &EmOptions,
    ) -> Result<MStepOutput>;
    /// `−F(stats, params)`, summed over sequences.
    fn objective(&self, stats: &Self::Stats, params: &HmmParams) -> Result<f64>;
}

pub(crate) fn run_em<P: EmProblem>(
    problem: &P,
    init: &HmmParams,
    opts: &EmOptions,
    observer: &mut Observer<'_>,
) -> Result<(HmmParams, EmTrace)> {
    init.ensure_valid()?;
    let mut params = init.clone();
    let mut trace = EmTrace::default();
    for iter in 1..=opts.max_iters {
        let start = Instant::now();
        let estep = problem.e_step(&params, opts).map_err(|e| Error::EStep {
            iteration: iter,
            source: Box::new(e),
        })?;
        let estep_neg_bethe = problem.objective(&estep.stats, &params)?;
        let MStepOutput {
            params: next,
            flags,
        } = problem.m_step(&estep.stats, &params, opts)?;
        next.ensure_valid()?;
        let neg_bethe = problem.objective(&estep.stats, &next)?;
        let param_change = next.max_abs_diff(&params);
        let record = IterationRecord {
            iter,
            neg_bethe,
            estep_neg_bethe,
            params_hash: next.snapshot_hash(),
            estep_residual: estep.residual,
            estep_passes: estep.passes,
            param_change,
            wall_secs: start.elapsed().as_secs_f64(),
            flags: estep.flags.into_iter().chain(flags).collect(),
        };
        observer(&record, &next);
        trace.records.push(record);
        params = next;
        if param_change <= opts.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((params, trace))
}

fn collect_estep(results: Vec<CfbResult>) -> EStep<Vec<MarginalSet>> {
    let residual = results.iter().map(|r| r.residual).fold(0.0, f64::max);
    let passes = results.iter().map(|r| r.passes).max().unwrap_or(0);
    EStep {
        stats: results.into_iter().map(|r| r.marginals).collect(),
        residual,
        passes,
        flags: Vec::new(),
    }
}

struct DiscreteEnsemble<'a> {
    obs: &'a [AggregateSequence],
}

impl EmProblem for DiscreteEnsemble<'_> {
    type Stats = Vec<MarginalSet>;

    fn e_step(&self, params: &HmmParams, opts: &EmOptions) -> Result<EStep<Self::Stats>> {
        let results = self
            .obs
            .par_iter()
            .map(|y| cfb_discrete(params, y, &opts.estep))
            .collect::<Result<Vec<_>>>()?;
        Ok(collect_estep(results))
    }

    fn m_step(
        &self,
        stats: &Self::Stats,
        prev: &HmmParams,
        opts: &EmOptions,
    ) -> Result<MStepOutput> {
        let s = prev.discrete().map(|b| b.num_symbols());
        let pooled = PooledCounts::from_marginals(stats, s)?;
        m_step_discrete_pooled(&pooled, prev, opts)
    }

    fn objective(&self, stats: &Self::Stats, params: &HmmParams) -> Result<f64> {
        let parts = self
            .obs
            .par_iter()
            .zip(stats.par_iter())
            .map(|(y, m)| bethe_discrete(params, y, m))
            .collect::<Result<Vec<f64>>>()?;
        Ok(-parts.iter().sum::<f64>())
    }
}

struct GaussianEnsemble<'a> {
    obs: &'a [SampleSequence],
}

impl EmProblem for GaussianEnsemble<'_> {
    type Stats = Vec<MarginalSet>;

    fn e_step(&self, params: &HmmParams, opts: &EmOptions) -> Result<EStep<Self::Stats>> {
        let results = self
            .obs
            .par_iter()
            .map(|o| cfb_continuous(params, o, &opts.estep))
            .collect::<Result<Vec<_>>>()?;
        Ok(collect_estep(results))
    }

    fn m_step(
        &self,
        stats: &Self::Stats,
        prev: &HmmParams,
        opts: &EmOptions,
    ) -> Result<MStepOutput> {
        let pooled = PooledCounts::from_marginals(stats, None)?;
        let dim = prev
            .gaussian()
            .ok_or_else(|| Error::DimensionMismatch("Gaussian EM needs a Gaussian model".into()))?
            .dim();
        let mut moments = GaussianMoments::zeros(prev.num_states(), dim);
        for (m, o) in stats.iter().zip(self.obs) {
            moments.add_sequence(m, o);
        }
        m_step_gaussian_pooled(&pooled, &moments, prev, opts)
    }

    fn objective(&self, stats: &Self::Stats, params: &HmmParams) -> Result<f64> {
        let parts = self
            .obs
            .par_iter()
            .zip(stats.par_iter())
            .map(|(o, m)| bethe_continuous(params, o, m))
            .collect::<Result<Vec<f64>>>()?;
        Ok(-parts.iter().sum::<f64>())
    }
}

fn check_nonempty<T>(obs: &[T]) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::InvalidDimensions(
            "no observation sequences to learn from".into(),
        ));
    }
    Ok(())
}

/// Approximate EM from one sequence of aggregate histograms.
pub fn em_fit_discrete(
    obs: &AggregateSequence,
    init: &HmmParams,
    opts: &EmOptions,
) -> Result<(HmmParams, EmTrace)> {
    em_fit_ensemble(std::slice::from_ref(obs), init, opts)
}

/// Approximate EM from `K` independent aggregate sequences sharing one model;
/// expected counts are pooled across sequences before every M-step.
pub fn em_fit_ensemble(
    obs: &[AggregateSequence],
    init: &HmmParams,
    opts: &EmOptions,
) -> Result<(HmmParams, EmTrace)> {
    em_fit_ensemble_with(obs, init, opts, &mut |_, _| {})
}

pub fn em_fit_ensemble_with(
    obs: &[AggregateSequence],
    init: &HmmParams,
    opts: &EmOptions,
    observer: &mut Observer<'_>,
) -> Result<(HmmParams, EmTrace)> {
    check_nonempty(obs)?;
    for y in obs {
        if !y.validate().is_empty() {
            return Err(Error::Validation(y.validate()));
        }
    }
    run_em(&DiscreteEnsemble { obs }, init, opts, observer)
}

/// Approximate EM for Gaussian emissions from the unlabeled samples of one
/// population.
pub fn em_fit_gaussian(
    obs: &SampleSequence,
    init: &HmmParams,
    opts: &EmOptions,
) -> Result<(HmmParams, EmTrace)> {
    em_fit_gaussian_ensemble(std::slice::from_ref(obs), init, opts)
}

/// Gaussian EM over several independent populations, pooling expected
/// statistics across them.
pub fn em_fit_gaussian_ensemble(
    obs: &[SampleSequence],
    init: &HmmParams,
    opts: &EmOptions,
) -> Result<(HmmParams, EmTrace)> {
    em_fit_gaussian_ensemble_with(obs, init, opts, &mut |_, _| {})
}

pub fn em_fit_gaussian_ensemble_with(
    obs: &[SampleSequence],
    init: &HmmParams,
    opts: &EmOptions,
    observer: &mut Observer<'_>,
) -> Result<(HmmParams, EmTrace)> {
    check_nonempty(obs)?;
    run_em(&GaussianEnsemble { obs }, init, opts, observer)
}
