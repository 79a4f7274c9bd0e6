use serde::{Deserialize, Serialize};

/// What happened in one EM iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iter: usize,
    /// `−F_Bethe(n^ℓ, Ψ^ℓ)`: the surrogate after this iteration's M-step,
    /// summed over sequences.
    pub neg_bethe: f64,
    /// `−F_Bethe(n^ℓ, Ψ^{ℓ−1})`: the surrogate right after the E-step. For a
    /// single individual path this is its log-likelihood under `Ψ^{ℓ−1}`.
    pub estep_neg_bethe: f64,
    pub params_hash: String,
    /// Worst inner-solver residual across sequences.
    pub estep_residual: f64,
    pub estep_passes: usize,
    /// Max-norm parameter change made by the M-step.
    pub param_change: f64,
    pub wall_secs: f64,
    /// Non-fatal events: rows kept for lack of mass, covariance
    /// regularization escalated, zero-probability paths floored.
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub records: Vec<IterationRecord>,
    /// The parameter change fell to the tolerance before the iteration cap.
    pub converged: bool,
}

impl EmTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn neg_bethe(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.neg_bethe).collect()
    }

    /// Largest drop of the surrogate between consecutive iterations, counting
    /// both the E-step and the M-step half of every iteration; zero for a
    /// monotone trace.
    pub fn max_decrease(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut prev: Option<f64> = None;
        for r in &self.records {
            for v in [r.estep_neg_bethe, r.neg_bethe] {
                if let Some(p) = prev {
                    worst = worst.max(p - v);
                }
                prev = Some(v);
            }
        }
        worst
    }

    pub fn flags(&self) -> impl Iterator<Item = (usize, &str)> {
        self.records
            .iter()
            .flat_map(|r| r.flags.iter().map(move |f| (r.iter, f.as_str())))
    }
}
