//! Classic scaled forward-backward for a single observed path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::densities;
use crate::model::HmmParams;
use crate::simplex::FLOOR;

/// Posterior summaries of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// `ln p(o_1..o_T)`; `−∞` for a path the model cannot produce.
    pub log_likelihood: f64,
    /// `p(x_t | o)`.
    pub node: Vec<DVector<f64>>,
    /// `p(x_t, x_{t+1} | o)`.
    pub edge: Vec<DMatrix<f64>>,
    /// The path had zero probability, so the posteriors were computed with
    /// every probability floored at `1e-300`.
    pub floored: bool,
}

/// Per-step emission log-likelihood vectors `ln p(o_t | x)` of a symbol path.
pub fn symbol_log_likelihoods(params: &HmmParams, path: &[usize]) -> Result<Vec<DVector<f64>>> {
    let b = params.discrete().ok_or_else(|| {
        Error::DimensionMismatch("symbol paths need a discrete emission model".into())
    })?;
    path.iter()
        .map(|&o| {
            if o >= b.num_symbols() {
                return Err(Error::DimensionMismatch(format!(
                    "symbol {o} outside alphabet of {}",
                    b.num_symbols()
                )));
            }
            Ok(b.probs.column(o).map(f64::ln))
        })
        .collect()
}

/// Per-step Gaussian emission log-likelihood vectors of a vector path.
pub fn vector_log_likelihoods(
    params: &HmmParams,
    path: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let g = params.gaussian().ok_or_else(|| {
        Error::DimensionMismatch("vector paths need a Gaussian emission model".into())
    })?;
    let dens = densities(g)?;
    path.iter()
        .map(|o| {
            if o.len() != g.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "observation of dimension {}, emission has {}",
                    o.len(),
                    g.dim()
                )));
            }
            Ok(DVector::from_iterator(
                dens.len(),
                dens.iter().map(|d| d.log_density(o)),
            ))
        })
        .collect()
}

/// Scaled forward recursion: `ln p(o_1..o_T)` from per-step log-likelihoods.
pub fn forward_log_likelihood(
    initial: &DVector<f64>,
    transition: &DMatrix<f64>,
    log_lik: &[DVector<f64>],
) -> f64 {
    let mut total = 0.0;
    let mut a = initial.clone();
    for (t, ll) in log_lik.iter().enumerate() {
        let top = ll.max();
        if top == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        if t > 0 {
            a = transition.tr_mul(&a);
        }
        a.zip_apply(ll, |p, l| *p *= (l - top).exp());
        let c = a.sum();
        if c <= 0.0 {
            return f64::NEG_INFINITY;
        }
        a /= c;
        total += c.ln() + top;
    }
    total
}

/// `ln p(o_1..o_T)` of one symbol path.
pub fn standard_forward(params: &HmmParams, path: &[usize]) -> Result<f64> {
    check_len(params, path.len())?;
    let ll = symbol_log_likelihoods(params, path)?;
    Ok(forward_log_likelihood(
        &params.initial,
        &params.transition,
        &ll,
    ))
}

/// `ln p(o_1..o_T)` of one vector path under Gaussian emissions.
pub fn standard_forward_continuous(params: &HmmParams, path: &[DVector<f64>]) -> Result<f64> {
    check_len(params, path.len())?;
    let ll = vector_log_likelihoods(params, path)?;
    Ok(forward_log_likelihood(
        &params.initial,
        &params.transition,
        &ll,
    ))
}

/// Scaled forward-backward posteriors from per-step log-likelihoods.
pub fn standard_forward_backward(
    initial: &DVector<f64>,
    transition: &DMatrix<f64>,
    log_lik: &[DVector<f64>],
) -> Posterior {
    let shifted: Vec<(DVector<f64>, f64)> = log_lik
        .iter()
        .map(|ll| {
            let top = ll.max();
            let top = if top.is_finite() { top } else { 0.0 };
            (ll.map(|l| (l - top).exp()), top)
        })
        .collect();
    if let Some(p) = scaled_pass(initial, transition, &shifted, false) {
        return p;
    }
    let lik = shifted
        .into_iter()
        .map(|(l, top)| (l.map(|v| v.max(FLOOR)), top))
        .collect::<Vec<_>>();
    let initial = initial.map(|v| v.max(FLOOR));
    let transition = transition.map(|v| v.max(FLOOR));
    let mut p = scaled_pass(&initial, &transition, &lik, true)
        .expect("floored model gives every path positive mass");
    p.log_likelihood = f64::NEG_INFINITY;
    p
}

fn scaled_pass(
    initial: &DVector<f64>,
    transition: &DMatrix<f64>,
    lik: &[(DVector<f64>, f64)],
    floored: bool,
) -> Option<Posterior> {
    let horizon = lik.len();
    let mut alpha = Vec::with_capacity(horizon);
    let mut scale = Vec::with_capacity(horizon);
    let mut log_likelihood = 0.0;
    for (t, (l, top)) in lik.iter().enumerate() {
        let mut a = if t == 0 {
            initial.clone()
        } else {
            transition.tr_mul(&alpha[t - 1])
        };
        a.component_mul_assign(l);
        let c = a.sum();
        if !(c > 0.0) {
            return None;
        }
        a /= c;
        log_likelihood += c.ln() + top;
        alpha.push(a);
        scale.push(c);
    }
    let d = initial.len();
    let mut beta = vec![DVector::from_element(d, 1.0); horizon];
    for t in (0..horizon.saturating_sub(1)).rev() {
        let next = beta[t + 1].component_mul(&lik[t + 1].0);
        beta[t] = (transition * next) / scale[t + 1];
    }
    let node = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let mut n = a.component_mul(b);
            n /= n.sum();
            n
        })
        .collect();
    let edge = (0..horizon.saturating_sub(1))
        .map(|t| {
            let to = beta[t + 1].component_mul(&lik[t + 1].0);
            let mut e = DMatrix::from_fn(d, d, |i, j| alpha[t][i] * transition[(i, j)] * to[j]);
            e /= e.sum();
            e
        })
        .collect();
    Some(Posterior {
        log_likelihood,
        node,
        edge,
        floored,
    })
}

fn check_len(params: &HmmParams, len: usize) -> Result<()> {
    if len != params.horizon {
        return Err(Error::DimensionMismatch(format!(
            "path has {len} steps, model has T = {}",
            params.horizon
        )));
    }
    Ok(())
}
