//! Domain types: HMM parameters, aggregate and individual observations, and
//! inferred marginals.

mod io;
mod marginals;
mod observations;
mod params;

pub use marginals::{ConsistencyReport, MarginalSet, ObsMarginals};
pub use observations::{
    AggregateSequence, Observations, SampleSequence, TrajectorySet, COUNT_TOL, HISTOGRAM_TOL,
};
pub use params::{
    random_init, DiscreteEmission, Emission, EmissionSpec, GaussianEmission, HmmParams, Violation,
    STOCHASTIC_TOL, SYMMETRY_TOL,
};

pub(crate) use params::dirichlet_flat;
