//! Concordance-penalized value transfer.
//!
//! A source value table fixes, for every time step and every pair in `E`,
//! which of the two cells should be worth more. Target values are fitted per
//! time step by least-squares TD plus `lambda` times a hinge penalty on pairs
//! whose target ordering falls short of the source ordering by `margin`.

mod concordance;
mod objective;
mod optimizer;
mod spec;

pub use concordance::{concordance_loss, concordance_rate_report, ConcordanceReport};
pub use objective::{hinge_penalty, objective_gradient, penalized_objective, StepProblem};
pub use optimizer::{solve_time_step, transfer_evaluate, OptimizerSettings, SolveOutcome};
pub use spec::{default_pair_set, ConcordanceSpec};
