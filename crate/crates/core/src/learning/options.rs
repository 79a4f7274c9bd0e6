use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::hmm::CfbOptions;

/// Parameter blocks that an M-step can hold fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    #[serde(rename = "pi")]
    Initial,
    #[serde(rename = "A")]
    Transition,
    #[serde(rename = "B")]
    Emission,
    #[serde(rename = "mu")]
    Means,
    #[serde(rename = "cov")]
    Covariances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmOptions {
    /// Stop once no parameter moves more than this in one iteration.
    pub tol: f64,
    pub max_iters: usize,
    /// Update Gaussian covariances; means are always updated unless frozen.
    pub estimate_cov: bool,
    pub freeze: BTreeSet<ParamGroup>,
    /// Seed for any randomized initialization done on behalf of the fit.
    pub seed: u64,
    /// Added to every re-estimated covariance diagonal.
    pub cov_reg: f64,
    /// Convergence settings of the inner inference.
    pub estep: CfbOptions,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 200,
            estimate_cov: false,
            freeze: BTreeSet::new(),
            seed: 0,
            cov_reg: 1e-6,
            estep: CfbOptions::default(),
        }
    }
}

impl EmOptions {
    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        self.freeze.contains(&group)
    }

    pub fn with_freeze(mut self, groups: impl IntoIterator<Item = ParamGroup>) -> Self {
        self.freeze.extend(groups);
        self
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
