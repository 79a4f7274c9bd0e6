//! The HMM as a tree: hidden nodes `X_t` (index `t`) and observation leaves
//! `O_t` (index `T + t`). Chain edges `(X_t, X_{t+1})` come first and carry
//! the transition matrix; observation edges `(X_t, O_t)` follow and carry the
//! emission table, with the initial distribution folded into the first one.

use nalgebra::{DMatrix, DVector};

use super::cfb::shifted_likelihoods;
use crate::error::{Error, Result};
use crate::model::{AggregateSequence, HmmParams, MarginalSet, ObsMarginals, SampleSequence};
use crate::simplex::{col_sums, FLOOR};
use crate::tree::{bethe_free_energy, TreeEdge, TreeMarginals, TreeModel};

fn build(params: &HmmParams, emission: &[DMatrix<f64>]) -> Result<TreeModel> {
    let d = params.num_states();
    let horizon = emission.len();
    let mut cards = vec![d; horizon];
    cards.extend(emission.iter().map(DMatrix::ncols));
    let floor = |m: DMatrix<f64>| m.map(|v| v.max(FLOOR));
    let mut edges: Vec<TreeEdge> = (0..horizon.saturating_sub(1))
        .map(|t| TreeEdge::new(t, t + 1, floor(params.transition.clone())))
        .collect();
    for (t, l) in emission.iter().enumerate() {
        let mut psi = l.clone();
        if t == 0 {
            for (x, mut row) in psi.row_iter_mut().enumerate() {
                row *= params.initial[x];
            }
        }
        edges.push(TreeEdge::new(t, horizon + t, floor(psi)));
    }
    TreeModel::new(cards, edges)
}

/// Tree expansion of a discrete HMM with the histograms attached to the
/// observation leaves.
pub fn hmm_tree(params: &HmmParams, obs: &AggregateSequence) -> Result<TreeModel> {
    let b = params.discrete().ok_or_else(|| {
        Error::DimensionMismatch("hmm_tree needs a discrete emission model".into())
    })?;
    if obs.horizon() != params.horizon || obs.num_symbols() != b.num_symbols() {
        return Err(Error::DimensionMismatch(format!(
            "sequence is {}x{}, model expects {}x{}",
            obs.horizon(),
            obs.num_symbols(),
            params.horizon,
            b.num_symbols()
        )));
    }
    let mut tree = build(params, &vec![b.probs.clone(); params.horizon])?;
    for (t, y) in obs.histograms.iter().enumerate() {
        tree.observe(params.horizon + t, y.clone())?;
    }
    Ok(tree)
}

/// Tree expansion of a Gaussian HMM: leaf `O_t` ranges over the `M` samples
/// at step `t`, each observed with weight `1/M`. Emission potentials are the
/// per-sample likelihoods divided by `exp(shift[t][m])`, which is returned.
pub fn hmm_tree_continuous(
    params: &HmmParams,
    obs: &SampleSequence,
) -> Result<(TreeModel, Vec<DVector<f64>>)> {
    let (tables, shifts) = shifted_likelihoods(params, obs)?;
    let mut tree = build(params, &tables)?;
    for (t, l) in tables.iter().enumerate() {
        tree.observe(
            params.horizon + t,
            DVector::from_element(l.ncols(), 1.0 / l.ncols() as f64),
        )?;
    }
    Ok((tree, shifts))
}

/// Lays HMM marginals out on the tree expansion. Observation-leaf marginals
/// are the column sums of the observation tables.
pub fn to_tree_marginals(marginals: &MarginalSet) -> TreeMarginals {
    let joints = obs_joints(marginals);
    let mut nodes = marginals.node.clone();
    nodes.extend(joints.iter().map(col_sums));
    let mut edges = marginals.edge.clone();
    edges.extend(joints);
    TreeMarginals { nodes, edges }
}

/// Reads HMM marginals back off a tree expansion.
pub fn from_tree_marginals(tree: &TreeMarginals, horizon: usize, continuous: bool) -> MarginalSet {
    let node = tree.nodes[..horizon].to_vec();
    let edge = tree.edges[..horizon.saturating_sub(1)].to_vec();
    let joints = tree.edges[horizon.saturating_sub(1)..].to_vec();
    let obs = if continuous {
        ObsMarginals::Samples(joints.into_iter().map(column_normalized).collect())
    } else {
        ObsMarginals::Discrete(joints)
    };
    MarginalSet { node, edge, obs }
}

fn column_normalized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let total = col.sum();
        if total > 0.0 {
            col /= total;
        }
    }
    m
}

/// Joint observation tables `n_{t,t}`; per-sample weights are divided by `M`.
pub(crate) fn obs_joints(marginals: &MarginalSet) -> Vec<DMatrix<f64>> {
    match &marginals.obs {
        ObsMarginals::Discrete(j) => j.clone(),
        ObsMarginals::Samples(w) => w.iter().map(|w| w / w.ncols() as f64).collect(),
    }
}

/// Bethe free energy of discrete HMM marginals on the tree expansion.
pub fn bethe_discrete(
    params: &HmmParams,
    obs: &AggregateSequence,
    marginals: &MarginalSet,
) -> Result<f64> {
    let tree = hmm_tree(params, obs)?;
    bethe_free_energy(&tree, &to_tree_marginals(marginals))
}

/// Bethe free energy of Gaussian HMM marginals, in terms of the unshifted
/// densities.
pub fn bethe_continuous(
    params: &HmmParams,
    obs: &SampleSequence,
    marginals: &MarginalSet,
) -> Result<f64> {
    let (tree, shifts) = hmm_tree_continuous(params, obs)?;
    let tm = to_tree_marginals(marginals);
    let shifted = bethe_free_energy(&tree, &tm)?;
    let horizon = params.horizon;
    let correction: f64 = shifts
        .iter()
        .enumerate()
        .map(|(t, c)| c.dot(&tm.nodes[horizon + t]))
        .sum();
    Ok(shifted - correction)
}
