//! Sinkhorn belief propagation.
//!
//! Observed leaves are visited cyclically in ascending node order. At each one
//! the outgoing message is rescaled against its histogram, then the ordinary
//! sum-product messages are refreshed along the tree path leading to the next
//! observed leaf, so that leaf sees the effect of the scaling before its own
//! turn. A full cycle over the schedule is one pass.

use serde::{Deserialize, Serialize};

use super::messages::{MessageSet, TreeMarginals};
use super::model::TreeModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbpOptions {
    /// Stop when no message moves more than this over a pass.
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SbpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_passes: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SbpResult {
    pub messages: MessageSet,
    pub marginals: TreeMarginals,
    pub residual: f64,
    pub passes: usize,
}

/// Runs SBP to a fixed point and returns the constrained Bethe minimizer's
/// node and edge marginals. Without observed leaves this is plain BP.
pub fn run_sbp(model: &TreeModel, opts: &SbpOptions) -> Result<SbpResult> {
    let schedule: Vec<usize> = model.observed().keys().copied().collect();
    let mut messages = MessageSet::uniform(model);
    // Messages leaving unobserved subtrees never change afterwards; one full
    // sweep sets them.
    messages.sweep(model, false);

    let legs: Vec<(usize, usize, Vec<(usize, usize)>)> = schedule
        .iter()
        .enumerate()
        .map(|(k, &leaf)| {
            let next = schedule[(k + 1) % schedule.len()];
            let edge = model.neighbors(leaf)[0].1;
            // First step of the path is the scaled message itself.
            let path = model.path(leaf, next).into_iter().skip(1).collect();
            (leaf, edge, path)
        })
        .collect();

    let mut residual = 0.0;
    let mut passes = 0;
    if !legs.is_empty() {
        residual = f64::INFINITY;
        while residual > opts.tol {
            if passes >= opts.max_passes {
                return Err(Error::NotConverged { passes, residual });
            }
            let before = messages.clone();
            for (leaf, edge, path) in &legs {
                let y = &model.observed()[leaf];
                let m = messages.scaling_update(model, *leaf, *edge, y);
                messages.set(model, *leaf, *edge, m);
                for &(from, e) in path {
                    let m = messages.standard_update(model, from, e);
                    messages.set(model, from, e, m);
                }
            }
            passes += 1;
            residual = messages.max_abs_diff(&before);
        }
    }
    // Refresh every message not leaving an observed leaf, including those
    // pointing into unobserved subtrees that the schedule never touches.
    messages.sweep(model, true);
    let marginals = messages.marginals(model);
    Ok(SbpResult {
        messages,
        marginals,
        residual,
        passes,
    })
}
