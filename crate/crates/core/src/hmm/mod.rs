//! Inference on HMM chains: collective forward-backward for aggregate
//! observations, the classic single-path forward-backward, and the tree
//! expansion that ties the chain to general SBP.

mod cfb;
mod expansion;
mod standard;

pub use cfb::{cfb_continuous, cfb_discrete, CfbMessages, CfbOptions, CfbResult};
pub use expansion::{
    bethe_continuous, bethe_discrete, from_tree_marginals, hmm_tree, hmm_tree_continuous,
    to_tree_marginals,
};
pub use standard::{
    forward_log_likelihood, standard_forward, standard_forward_backward,
    standard_forward_continuous, symbol_log_likelihoods, vector_log_likelihoods, Posterior,
};

pub(crate) use expansion::obs_joints;
