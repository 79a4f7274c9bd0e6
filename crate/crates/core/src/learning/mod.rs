//! Approximate EM for aggregate HMMs: collective inference in the E-step,
//! closed-form M-steps, and a classic Baum-Welch for comparison.

mod fit;
mod mstep;
mod options;
mod reference;
mod trace;

pub use fit::{
    em_fit_discrete, em_fit_ensemble, em_fit_ensemble_with, em_fit_gaussian,
    em_fit_gaussian_ensemble, em_fit_gaussian_ensemble_with, Observer,
};
pub use mstep::{
    m_step_discrete, m_step_discrete_pooled, m_step_gaussian, m_step_gaussian_pooled,
    GaussianMoments, MStepOutput, PooledCounts,
};
pub use options::{EmOptions, ParamGroup};
pub use reference::{baum_welch_reference, baum_welch_reference_with};
pub use trace::{EmTrace, IterationRecord};
