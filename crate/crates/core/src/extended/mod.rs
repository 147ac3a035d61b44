//! Simulation-based worst-case bias bound over the μ-representation class.

pub mod constraints;
pub mod grid;
pub mod isotonic;
pub mod objective;
pub mod opt;
pub mod solver;

pub use constraints::{c3_witness, candidates, Candidate, Orientation};
pub use grid::McGrid;
pub use objective::{bias_objective, model_bias, DecisionVars, Direction, InnerMode};
pub use opt::{
    a1_bound, a1_bound_on, combine, extended_bound, extended_bound_on, solve_opt2, solve_opt2_on, ExtBoundResult,
    ExtendedBound, Opt2Solution, OptConfig, SolveDiagnostics,
};
