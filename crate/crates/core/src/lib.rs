//! Robust (max–min) optimal stopping of regime-switching diffusions.
//!
//! The crate solves the coupled HJB variational inequality with a
//! relative-entropy ambiguity penalty, reads off threshold-type stopping
//! rules, aggregates two-time-scale Markov chains into their limit problem,
//! and checks computed rules by Monte Carlo simulation of the controlled SDE.
//!
//! ```no_run
//! use robuststop::prelude::*;
//!
//! let chain = Generator::two_state(1.0, 1.0).unwrap();
//! let spec = ProblemSpec::switching_gbm(
//!     chain, vec![2.125, 0.875], vec![1.0, 1.0], 5.0, 0.01, 1.0, (0.0, 6.0),
//! ).unwrap();
//! let grid = build_grid(0.0, 6.0, 0.01).unwrap();
//! let sol = solve(&spec, &grid, &SolverOptions::default()).unwrap();
//! let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
//! println!("{:?}", rule.thresholds);
//! ```

pub mod exec;
pub mod free_boundary;
pub mod hjb_solver;
pub mod markov_chain;
pub mod model;
pub mod two_time_scale;
pub mod verification;

pub mod prelude {
    pub use crate::exec::Execution;
    pub use crate::free_boundary::{classify_regions, smooth_fit_gap, StoppingRule, DEFAULT_TOL_REGION};
    pub use crate::hjb_solver::{build_grid, residual_report, scheme_residual, solve, Grid, SolutionField, SolverOptions};
    pub use crate::markov_chain::{
        assemble_generator, limit_generator, stationary_distribution, validate_generator, Generator,
        ProbVector, TwoTimeScaleSpec,
    };
    pub use crate::model::{
        evaluate_coefficients, worst_case_control, CoefficientModel, Obstacle, ProblemSpec, RewardModel,
        RunningReward,
    };
    pub use crate::two_time_scale::{averaged_coefficients, build_limit_problem, epsilon_study, error_norms, LimitProblem};
    pub use crate::verification::{simulate_reward, QPolicy, SimConfig, SimulationReport};
}
