use nalgebra::{DMatrix, DVector};

use crate::simplex::{col_sums, row_sums};

/// Observation-side marginals of an aggregate HMM.
#[derive(Debug, Clone, PartialEq)]
pub enum ObsMarginals {
    /// Joint `n_{t,t}(x, o)` per step, a `d × s` table summing to 1.
    Discrete(Vec<DMatrix<f64>>),
    /// Per-sample state weights per step: column `m` of the `d × M` table is
    /// `n_t^{(m)}`, summing to 1 over states.
    Samples(Vec<DMatrix<f64>>),
}

/// Inferred node, transition and observation marginals over a length-`T` chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSet {
    /// `n_t`, one probability vector per step.
    pub node: Vec<DVector<f64>>,
    /// `n_{t,t+1}` for `t = 1..T-1`, each a `d × d` joint.
    pub edge: Vec<DMatrix<f64>>,
    pub obs: ObsMarginals,
}

/// Worst-case residuals of the marginal constraints.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConsistencyReport {
    /// `max_t |Σ n_t − 1|`.
    pub normalization: f64,
    /// Max deviation between edge-table row/column sums and node marginals.
    pub edge_node: f64,
    /// Max deviation between observation-table row sums and node marginals.
    pub obs_node: f64,
    /// Max deviation between observation-table column sums and the histograms
    /// (discrete case, when histograms are supplied).
    pub obs_histogram: f64,
}

impl MarginalSet {
    pub fn horizon(&self) -> usize {
        self.node.len()
    }

    pub fn num_states(&self) -> usize {
        self.node.first().map_or(0, |n| n.len())
    }

    /// Per-sample weight tables (continuous case), `None` for discrete.
    pub fn sample_weights(&self) -> Option<&[DMatrix<f64>]> {
        match &self.obs {
            ObsMarginals::Samples(w) => Some(w),
            ObsMarginals::Discrete(_) => None,
        }
    }

    pub fn obs_joint(&self) -> Option<&[DMatrix<f64>]> {
        match &self.obs {
            ObsMarginals::Discrete(j) => Some(j),
            ObsMarginals::Samples(_) => None,
        }
    }

    /// Measures how far the marginals are from satisfying the consistency,
    /// normalization and (optionally) observation constraints.
    pub fn consistency(&self, histograms: Option<&[DVector<f64>]>) -> ConsistencyReport {
        let mut r = ConsistencyReport::default();
        for n in &self.node {
            r.normalization = r.normalization.max((n.sum() - 1.0).abs());
        }
        for (t, e) in self.edge.iter().enumerate() {
            r.edge_node = r
                .edge_node
                .max((row_sums(e) - &self.node[t]).amax())
                .max((col_sums(e) - &self.node[t + 1]).amax());
        }
        match &self.obs {
            ObsMarginals::Discrete(joint) => {
                for (t, j) in joint.iter().enumerate() {
                    r.obs_node = r.obs_node.max((row_sums(j) - &self.node[t]).amax());
                    if let Some(y) = histograms {
                        r.obs_histogram = r.obs_histogram.max((col_sums(j) - &y[t]).amax());
                    }
                }
            }
            ObsMarginals::Samples(weights) => {
                for (t, w) in weights.iter().enumerate() {
                    let population = w.ncols() as f64;
                    let pooled = row_sums(w) / population;
                    r.obs_node = r.obs_node.max((pooled - &self.node[t]).amax());
                    for col in w.column_iter() {
                        r.normalization = r.normalization.max((col.sum() - 1.0).abs());
                    }
                }
            }
        }
        r
    }
}
