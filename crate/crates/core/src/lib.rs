//! Finite-horizon optimal formation flying for multi-quadrotor teams in
//! differentially flat coordinates.
//!
//! The pipeline has three stages. A closed-form planner solves the
//! finite-horizon consensus formation problem through the exponential of
//! a Hamiltonian block matrix, with no iterative optimization. A Riccati
//! tracking controller follows the planned trajectory and augments its
//! feedback with collision penalty gradients whenever a vehicle pair
//! enters the reaction band; directional weighting factors prioritize
//! threats ahead and on approach. The flatness map finally recovers
//! physical thrust, attitude, body rates, and moments from the flat
//! outputs.

// Validation uses `!(x > 0.0)` throughout so NaN weights are rejected
// along with non-positive ones; stencil code indexes neighbors directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod collision;
pub mod error;
pub mod expm;
pub mod flat;
pub mod flatness;
pub mod graph;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod tracker;

pub use collision::{AvoidanceStrategy, PairRegion, SafetyConfig};
pub use error::{Error, Result};
pub use flat::{CostMatrices, FlatControl, FlatTeamState};
pub use flatness::{QuadrotorParams, QuadrotorState};
pub use graph::{DirectedGraph, FormationEdge, FormationSpec};
pub use planner::{PlannerSolution, ReferenceTrajectory};
pub use scenario::ScenarioConfig;
pub use sim::{Metrics, SimTrace};
pub use tracker::{LawVariant, RiccatiSolution};
