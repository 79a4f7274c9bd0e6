//! Learning hidden Markov models when only aggregate snapshots of a
//! population are observed.
//!
//! Individuals follow a shared HMM, but at each step we only see a histogram
//! of their emitted symbols (or an unlabeled bag of their vector emissions).
//! Inference runs Sinkhorn belief propagation on the HMM's tree expansion,
//! implemented for chains as collective forward-backward ([`hmm::cfb_discrete`],
//! [`hmm::cfb_continuous`]). Learning is EM on the Bethe free energy
//! ([`learning`]); [`synth`] and [`eval`] provide synthetic benchmarks.
//!
//! ```
//! use aggregate_hmm::prelude::*;
//!
//! let spec = ExperimentSpec {
//!     d: 2,
//!     horizon: 4,
//!     individuals: 40,
//!     population: 20,
//!     emission: EmissionKind::Discrete { num_symbols: None },
//!     seed: 7,
//!     em: EmOptions::default(),
//! };
//! let truth = gen_ground_truth(&spec).unwrap();
//! let paths = sample_trajectories(&truth, 40, 4, 1).unwrap();
//! let obs = aggregate(&paths, 20).unwrap();
//! let init = random_init(2, 4, &EmissionSpec::Discrete { num_symbols: 2 }, 3).unwrap();
//! let opts = EmOptions { max_iters: 5, ..EmOptions::default() };
//! let (fitted, trace) = em_fit_ensemble(&obs, &init, &opts).unwrap();
//! assert!(fitted.validate().is_empty());
//! assert!(trace.max_decrease() <= 1e-9);
//! ```

pub mod error;
pub mod eval;
pub mod gaussian;
pub mod hmm;
pub mod learning;
pub mod model;
pub mod simplex;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};

/// The types and entry points most programs need.
pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::eval::{delta_nll, nll, param_distance, param_distance_permuted, LearningCurve};
    pub use crate::hmm::{cfb_continuous, cfb_discrete, standard_forward, CfbOptions};
    pub use crate::learning::{
        baum_welch_reference, em_fit_discrete, em_fit_ensemble, em_fit_gaussian,
        em_fit_gaussian_ensemble, EmOptions, EmTrace, ParamGroup,
    };
    pub use crate::model::{
        random_init, AggregateSequence, EmissionSpec, HmmParams, MarginalSet, SampleSequence,
        TrajectorySet,
    };
    pub use crate::synth::{
        aggregate, aggregate_continuous, gen_ground_truth, sample_trajectories, EmissionKind,
        ExperimentSpec,
    };
}
