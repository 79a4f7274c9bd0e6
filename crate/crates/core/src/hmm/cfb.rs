//! Collective forward-backward: Sinkhorn belief propagation on the HMM chain.
//!
//! The discrete and continuous variants share one engine. Each time step
//! carries an emission table `L_t[x, k]` over "observation slots" `k` and a
//! target distribution `y_t` over the same slots. For histograms the slots are
//! symbols, `L_t = B` and `y_t` is the histogram. For samples the slots are the
//! `M` individuals, `L_t[x, m]` is the likelihood of sample `m` (rescaled per
//! sample, which the ratios cancel) and `y_t` is uniform, so the observation
//! message averages the `M` per-sample ratios.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::log_likelihood_table;
use crate::model::{AggregateSequence, HmmParams, MarginalSet, ObsMarginals, SampleSequence};
use crate::simplex::{normalize, normalize_floored, normalize_matrix, FLOOR};
use crate::tree::SbpOptions;

/// Convergence settings for collective forward-backward; the same knobs as SBP.
pub type CfbOptions = SbpOptions;

/// Messages of the collective forward-backward recursion, one vector per step.
#[derive(Debug, Clone, PartialEq)]
pub struct CfbMessages {
    /// Forward messages `α_t` over hidden states.
    pub alpha: Vec<DVector<f64>>,
    /// Backward messages `β_t` over hidden states.
    pub beta: Vec<DVector<f64>>,
    /// Observation-to-hidden messages `γ_t`.
    pub gamma: Vec<DVector<f64>>,
    /// Hidden-to-observation messages `ξ_t`, over symbols or samples.
    pub xi: Vec<DVector<f64>>,
}

impl CfbMessages {
    fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            (&self.alpha, &other.alpha),
            (&self.beta, &other.beta),
            (&self.gamma, &other.gamma),
            (&self.xi, &other.xi),
        ]
        .iter()
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).amax()))
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct CfbResult {
    pub marginals: MarginalSet,
    pub messages: CfbMessages,
    /// Largest message change over the final pass.
    pub residual: f64,
    pub passes: usize,
}

struct Chain<'a> {
    initial: &'a DVector<f64>,
    transition: &'a DMatrix<f64>,
    emission: Vec<&'a DMatrix<f64>>,
    target: Vec<&'a DVector<f64>>,
}

impl Chain<'_> {
    fn horizon(&self) -> usize {
        self.emission.len()
    }

    fn xi(&self, msgs: &CfbMessages, t: usize) -> DVector<f64> {
        let ab = msgs.alpha[t].component_mul(&msgs.beta[t]);
        let mut v = self.emission[t].tr_mul(&ab);
        normalize_floored(&mut v);
        v
    }

    fn gamma(&self, msgs: &CfbMessages, t: usize) -> DVector<f64> {
        let ratio = self.target[t].zip_map(&msgs.xi[t], |y, xi| y / xi.max(FLOOR));
        let mut v = self.emission[t] * ratio;
        normalize_floored(&mut v);
        v
    }

    fn alpha(&self, msgs: &CfbMessages, t: usize) -> DVector<f64> {
        let prev = msgs.alpha[t - 1].component_mul(&msgs.gamma[t - 1]);
        let mut v = self.transition.tr_mul(&prev);
        normalize_floored(&mut v);
        v
    }

    fn beta(&self, msgs: &CfbMessages, t: usize) -> DVector<f64> {
        let next = msgs.beta[t + 1].component_mul(&msgs.gamma[t + 1]);
        let mut v = self.transition * next;
        normalize_floored(&mut v);
        v
    }

    fn initial_messages(&self) -> CfbMessages {
        let d = self.initial.len();
        let horizon = self.horizon();
        let mut first = self.initial.clone();
        normalize_floored(&mut first);
        let uniform = DVector::from_element(d, 1.0 / d as f64);
        let mut msgs = CfbMessages {
            alpha: vec![first; horizon],
            beta: vec![uniform.clone(); horizon],
            gamma: vec![uniform; horizon],
            xi: self
                .target
                .iter()
                .map(|y| DVector::from_element(y.len(), 1.0 / y.len() as f64))
                .collect(),
        };
        self.refresh_hidden(&mut msgs);
        msgs
    }

    /// Recomputes α, β and ξ from the current γ, which stays fixed.
    fn refresh_hidden(&self, msgs: &mut CfbMessages) {
        let horizon = self.horizon();
        for t in 1..horizon {
            msgs.alpha[t] = self.alpha(msgs, t);
        }
        for t in (0..horizon - 1).rev() {
            msgs.beta[t] = self.beta(msgs, t);
        }
        for t in 0..horizon {
            msgs.xi[t] = self.xi(msgs, t);
        }
    }

    fn pass(&self, msgs: &mut CfbMessages) {
        let horizon = self.horizon();
        if horizon == 1 {
            msgs.gamma[0] = self.gamma(msgs, 0);
            msgs.xi[0] = self.xi(msgs, 0);
            return;
        }
        for t in 1..horizon {
            msgs.gamma[t - 1] = self.gamma(msgs, t - 1);
            msgs.alpha[t] = self.alpha(msgs, t);
            msgs.xi[t] = self.xi(msgs, t);
        }
        for t in (0..horizon - 1).rev() {
            msgs.gamma[t + 1] = self.gamma(msgs, t + 1);
            msgs.beta[t] = self.beta(msgs, t);
            msgs.xi[t] = self.xi(msgs, t);
        }
    }

    fn run(&self, opts: &CfbOptions) -> Result<(CfbMessages, f64, usize)> {
        let mut msgs = self.initial_messages();
        let mut residual = f64::INFINITY;
        let mut passes = 0;
        while residual > opts.tol {
            if passes >= opts.max_passes {
                return Err(Error::NotConverged { passes, residual });
            }
            let before = msgs.clone();
            self.pass(&mut msgs);
            passes += 1;
            residual = msgs.max_abs_diff(&before);
        }
        self.refresh_hidden(&mut msgs);
        Ok((msgs, residual, passes))
    }

    fn node_marginals(&self, msgs: &CfbMessages) -> Vec<DVector<f64>> {
        (0..self.horizon())
            .map(|t| {
                let mut n = msgs.alpha[t]
                    .component_mul(&msgs.beta[t])
                    .component_mul(&msgs.gamma[t]);
                normalize(&mut n);
                n
            })
            .collect()
    }

    fn edge_marginals(&self, msgs: &CfbMessages) -> Vec<DMatrix<f64>> {
        (0..self.horizon().saturating_sub(1))
            .map(|t| {
                let from = msgs.alpha[t].component_mul(&msgs.gamma[t]);
                let to = msgs.beta[t + 1].component_mul(&msgs.gamma[t + 1]);
                let mut joint = DMatrix::from_fn(from.len(), to.len(), |i, j| {
                    from[i] * self.transition[(i, j)] * to[j]
                });
                normalize_matrix(&mut joint);
                joint
            })
            .collect()
    }

    /// `n_{t,t}(x, k) ∝ α_t β_t (x) L_t(x, k) y_t(k) / ξ_t(k)`.
    fn obs_joints(&self, msgs: &CfbMessages) -> Vec<DMatrix<f64>> {
        (0..self.horizon())
            .map(|t| {
                let ab = msgs.alpha[t].component_mul(&msgs.beta[t]);
                let ratio = self.target[t].zip_map(&msgs.xi[t], |y, xi| y / xi.max(FLOOR));
                let l = self.emission[t];
                let mut joint =
                    DMatrix::from_fn(l.nrows(), l.ncols(), |x, k| ab[x] * l[(x, k)] * ratio[k]);
                normalize_matrix(&mut joint);
                joint
            })
            .collect()
    }
}

/// Collective forward-backward for discrete emissions and one aggregate
/// sequence of histograms.
pub fn cfb_discrete(
    params: &HmmParams,
    obs: &AggregateSequence,
    opts: &CfbOptions,
) -> Result<CfbResult> {
    let b = params.discrete().ok_or_else(|| {
        Error::DimensionMismatch("cfb_discrete needs a discrete emission model".into())
    })?;
    check_horizon(params, obs.horizon())?;
    if obs.num_symbols() != b.num_symbols() {
        return Err(Error::DimensionMismatch(format!(
            "histograms have {} symbols, emission has {}",
            obs.num_symbols(),
            b.num_symbols()
        )));
    }
    let chain = Chain {
        initial: &params.initial,
        transition: &params.transition,
        emission: vec![&b.probs; obs.horizon()],
        target: obs.histograms.iter().collect(),
    };
    let (messages, residual, passes) = chain.run(opts)?;
    let marginals = MarginalSet {
        node: chain.node_marginals(&messages),
        edge: chain.edge_marginals(&messages),
        obs: ObsMarginals::Discrete(chain.obs_joints(&messages)),
    };
    Ok(CfbResult {
        marginals,
        messages,
        residual,
        passes,
    })
}

/// Per-step likelihood tables `exp(ln p(o_t^{(m)} | x) − max_x ln p(o_t^{(m)} | x))`
/// and the shifts that were removed, one per (t, m).
pub(crate) fn shifted_likelihoods(
    params: &HmmParams,
    obs: &SampleSequence,
) -> Result<(Vec<DMatrix<f64>>, Vec<DVector<f64>>)> {
    let g = params.gaussian().ok_or_else(|| {
        Error::DimensionMismatch("continuous inference needs a Gaussian emission model".into())
    })?;
    check_horizon(params, obs.horizon())?;
    let mut tables = log_likelihood_table(g, obs)?;
    let shifts = tables
        .iter_mut()
        .map(|table| {
            DVector::from_iterator(
                table.ncols(),
                table.column_iter_mut().map(|mut col| {
                    let top = col.max();
                    col.apply(|v| *v = (*v - top).exp());
                    top
                }),
            )
        })
        .collect();
    Ok((tables, shifts))
}

/// Collective forward-backward for Gaussian emissions given the `M` sample
/// vectors observed at each step, with identities unknown across steps.
pub fn cfb_continuous(
    params: &HmmParams,
    obs: &SampleSequence,
    opts: &CfbOptions,
) -> Result<CfbResult> {
    let (tables, _) = shifted_likelihoods(params, obs)?;
    let uniform: Vec<DVector<f64>> = tables
        .iter()
        .map(|l| DVector::from_element(l.ncols(), 1.0 / l.ncols() as f64))
        .collect();
    let chain = Chain {
        initial: &params.initial,
        transition: &params.transition,
        emission: tables.iter().collect(),
        target: uniform.iter().collect(),
    };
    let (messages, residual, passes) = chain.run(opts)?;
    let weights = chain
        .obs_joints(&messages)
        .into_iter()
        .map(|mut joint| {
            for mut col in joint.column_iter_mut() {
                let total = col.sum();
                if total > 0.0 {
                    col /= total;
                } else {
                    col.fill(1.0 / col.len() as f64);
                }
            }
            joint
        })
        .collect();
    let marginals = MarginalSet {
        node: chain.node_marginals(&messages),
        edge: chain.edge_marginals(&messages),
        obs: ObsMarginals::Samples(weights),
    };
    Ok(CfbResult {
        marginals,
        messages,
        residual,
        passes,
    })
}

fn check_horizon(params: &HmmParams, horizon: usize) -> Result<()> {
    if horizon != params.horizon {
        return Err(Error::DimensionMismatch(format!(
            "observations cover {horizon} steps, model has T = {}",
            params.horizon
        )));
    }
    Ok(())
}
