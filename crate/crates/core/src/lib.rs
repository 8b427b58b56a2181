//! Direct-method optimal control over sampled relaxed controls.
//!
//! A relaxed control assigns, on every interval of a uniform time grid, a
//! probability vector over a fixed set of sampled control values ("atoms").
//! The solver descends on those weights using the Hamiltonian of the
//! relaxed system, which drives the weights toward Pontryagin-optimal points
//! rather than mere first-order stationary points. A converged relaxed
//! control is then turned into an ordinary bang-bang input by block
//! averaging and pulse-width modulation.
//!
//! Module map:
//!
//! * [`problem`]: Mayer-form problems, running-cost augmentation, builtins.
//! * [`sampling`]: atom sets (grid or seeded Monte Carlo) and sampled hulls.
//! * [`control`]: time grid, weight matrix, descent directions.
//! * [`integrate`]: RK4 forward passes and the discrete costate.
//! * [`optimality`]: Hamiltonian table, optimality function, Pontryagin gap.
//! * [`descent`]: Armijo step selection and the outer loop.
//! * [`synthesis`]: block averaging, PWM and chattering error.
//! * [`cli`]: configuration and the file-emitting batch runs.

pub mod cli;
pub mod control;
pub mod descent;
mod error;
pub mod integrate;
pub mod optimality;
pub mod problem;
pub mod sampling;
pub mod synthesis;

pub use control::{DescentDirection, RelaxedControl, TimeGrid};
pub use descent::{armijo, solve, solve_from, ArmijoOutcome, IterationLog, IterationRecord, SolveResult, SolverConfig, Termination};
pub use error::{Error, Result};
pub use integrate::{backward_costate, forward_input, forward_relaxed, Costate, Trajectory};
pub use optimality::{hamiltonian_table, pontryagin_gap, theta_and_direction, GapReport, GapRow, HamiltonianTable};
pub use problem::{augment_mayer, builtin, ControlBox, Overrides, ParamValue, Problem, RunningCostProblem};
pub use sampling::{hull_points, sample_grid, sample_uniform, AtomSet, HullData};
pub use synthesis::{chattering_error, haar_filter, pwm, FilteredWeights, InputSchedule, Segment};
