//! Mixed-integer predictive control of weakly coupled linear systems.
//!
//! The exact controller solves the stacked mixed-integer program by
//! branch-and-bound. The decomposed controller splits the plant into scalar
//! capacitated lot-sizing problems and solves each one as a shortest path over
//! regeneration intervals, where every arc cost is an integral LP.

pub mod error;
pub mod experiments;
pub mod decomposition;
pub mod lotsizing;
pub mod lp;
pub mod milp;
pub mod model;
pub mod receding;

pub use error::{LpError, ModelError};
pub use lp::{solve_lp, LpProblem, LpSolution, LpStatus};
pub use model::{
    check_unstabilizing, check_weak_coupling, step_plant, trajectory_cost, validate_spec,
    BoundaryConditions, CostParams, DisturbanceTrajectory, Matrix, StateBox, SystemSpec,
    Trajectory, ValidationReport,
};
