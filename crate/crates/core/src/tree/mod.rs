//! Tree-structured pairwise models: belief propagation, Sinkhorn belief
//! propagation for aggregate leaf observations, and the Bethe free energy.

mod bethe;
mod bp;
mod messages;
mod model;
mod sbp;

pub use bethe::{bethe_free_energy, BETHE_CONSISTENCY_TOL};
pub use bp::{run_bp, BpResult};
pub use messages::{MessageSet, TreeMarginals};
pub use model::{TreeEdge, TreeModel};
pub use sbp::{run_sbp, SbpOptions, SbpResult};
