use super::messages::{MessageSet, TreeMarginals};
use super::model::TreeModel;
use crate::error::{Error, Result};

/// Sweeps stop once messages change by no more than this.
const SWEEP_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct BpResult {
    pub messages: MessageSet,
    pub marginals: TreeMarginals,
    /// Message change over the last sweep.
    pub residual: f64,
    pub sweeps: usize,
}

/// Sum-product belief propagation on a tree without observations.
///
/// Each sweep passes messages leaf-to-root then root-to-leaf; one sweep is
/// exact on a tree, and further sweeps (up to `max_sweeps`) only confirm it.
pub fn run_bp(model: &TreeModel, max_sweeps: usize) -> Result<BpResult> {
    if !model.observed().is_empty() {
        return Err(Error::InvalidDimensions(
            "run_bp takes a model without observed leaves; use run_sbp".into(),
        ));
    }
    let mut messages = MessageSet::uniform(model);
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_sweeps.max(1) {
        let before = messages.clone();
        messages.sweep(model, false);
        sweeps += 1;
        residual = messages.max_abs_diff(&before);
        if residual <= SWEEP_TOL {
            break;
        }
    }
    let marginals = messages.marginals(model);
    Ok(BpResult {
        messages,
        marginals,
        residual,
        sweeps,
    })
}
