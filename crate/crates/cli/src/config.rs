//! JSON run configuration.
//!
//! ```json
//! {
//!   "problem": {
//!     "chain": { "rates": [[-1, 1], [1, -1]] },
//!     "coefficients": { "kind": "gbm_linear", "b": [2.125, 0.875], "sigma": [1, 1] },
//!     "obstacle": { "kind": "call", "strike": 1 },
//!     "r": 5, "theta": 0.01
//!   },
//!   "grid": { "x_min": 0, "x_max": 6, "h": 0.01 }
//! }
//! ```
//!
//! Optional sections: `solver` (any subset of the solver options),
//! `two_time_scale` (`fast_blocks`, `slow`, `epsilon` list) and `simulation`
//! (`x0`, 1-based `i0`, `dt`, `horizon`, `n_paths`, `seed`, `q_policy`).
//! With `two_time_scale` present `problem.chain` may be omitted; the chain
//! is then assembled at the first listed `ε`.

use std::path::Path;

use robuststop::hjb_solver::GridError;
use robuststop::markov_chain::GeneratorError;
use robuststop::model::{ModelError, DEFAULT_Q_MAX};
use robuststop::prelude::*;
use robuststop::verification::{default_horizon, DEFAULT_DT, DEFAULT_N_PATHS};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    grid: RawGrid,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default, alias = "tts")]
    two_time_scale: Option<RawTts>,
    #[serde(default, alias = "sim")]
    simulation: Option<RawSim>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    rates: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    chain: Option<RawChain>,
    coefficients: CoefficientModel,
    #[serde(default)]
    running_reward: RunningReward,
    obstacle: Obstacle,
    r: f64,
    theta: f64,
    #[serde(default = "default_q_max")]
    q_max: f64,
    /// Defaults to the grid interval.
    domain: Option<(f64, f64)>,
}

fn default_q_max() -> f64 {
    DEFAULT_Q_MAX
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    x_min: f64,
    x_max: f64,
    h: f64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSolver {
    tol_outer: f64,
    tol_inner: f64,
    max_outer: usize,
    max_inner: usize,
    omega: f64,
}

impl Default for RawSolver {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol_outer: d.tol_outer,
            tol_inner: d.tol_inner,
            max_outer: d.max_outer,
            max_inner: d.max_inner,
            omega: d.omega,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTts {
    fast_blocks: Vec<RawChain>,
    slow: RawChain,
    epsilon: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    x0: f64,
    #[serde(default = "one")]
    i0: usize,
    dt: Option<f64>,
    horizon: Option<f64>,
    n_paths: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    q_policy: QPolicy,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct TwoTimeScaleConfig {
    /// Carries the first listed `ε`.
    pub spec: TwoTimeScaleSpec,
    pub epsilons: Vec<f64>,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: Grid,
    pub solver: SolverOptions,
    pub two_time_scale: Option<TwoTimeScaleConfig>,
    pub simulation: Option<SimConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path == "." { "<root>".into() } else { path }, e.into_inner())
        })?;
        raw.validate()
    }

    /// The configured problem with its chain rebuilt at `epsilon`.
    pub fn problem_at_epsilon(&self, epsilon: f64) -> Result<ProblemSpec, CliError> {
        let tts = self
            .two_time_scale
            .as_ref()
            .ok_or_else(|| CliError::config("two_time_scale", "section required for ε-dependent commands"))?;
        let chain = tts
            .spec
            .with_epsilon(epsilon)
            .and_then(|t| assemble_generator(&t))
            .map_err(|e| CliError::config("two_time_scale.epsilon", e))?;
        Ok(ProblemSpec {
            chain,
            ..self.problem.clone()
        })
    }
}

fn generator(path: &str, chain: &RawChain) -> Result<Generator, CliError> {
    Generator::from_rows(&chain.rates).map_err(|e| {
        let at = match &e {
            GeneratorError::NotSquare { row, .. }
            | GeneratorError::NonFinite { row, .. }
            | GeneratorError::NegativeOffDiagonal { row, .. }
            | GeneratorError::RowSumNonzero { row, .. } => format!("{path}.rates[{row}]"),
            _ => format!("{path}.rates"),
        };
        CliError::config(at, e)
    })
}

fn model_path(e: &ModelError) -> String {
    match e {
        ModelError::NonPositiveDiscount(_) => "problem.r".into(),
        ModelError::NegativeTheta(_) => "problem.theta".into(),
        ModelError::NonPositiveControlBound(_) => "problem.q_max".into(),
        ModelError::EmptyDomain(..) => "problem.domain".into(),
        ModelError::RegimeCount { field, .. } | ModelError::BadTable { field, .. } | ModelError::NonFinite { field } => {
            format!("problem.{field}")
        }
        _ => "problem".into(),
    }
}

impl RawConfig {
    fn validate(self) -> Result<RunConfig, CliError> {
        let grid = build_grid(self.grid.x_min, self.grid.x_max, self.grid.h).map_err(|e| {
            let at = match e {
                GridError::NonPositiveStep(_) => "grid.h",
                _ => "grid",
            };
            CliError::config(at, e)
        })?;

        let solver = SolverOptions {
            tol_outer: self.solver.tol_outer,
            tol_inner: self.solver.tol_inner,
            max_outer: self.solver.max_outer,
            max_inner: self.solver.max_inner,
            omega: self.solver.omega,
        };
        solver.validate().map_err(|e| CliError::config("solver", e))?;

        let two_time_scale = match &self.two_time_scale {
            None => None,
            Some(raw) => {
                let blocks = raw
                    .fast_blocks
                    .iter()
                    .enumerate()
                    .map(|(k, b)| generator(&format!("two_time_scale.fast_blocks[{k}]"), b))
                    .collect::<Result<Vec<_>, _>>()?;
                let slow = generator("two_time_scale.slow", &raw.slow)?;
                let first = *raw
                    .epsilon
                    .first()
                    .ok_or_else(|| CliError::config("two_time_scale.epsilon", "list must not be empty"))?;
                if let Some(j) = raw.epsilon.iter().position(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(CliError::config(
                        format!("two_time_scale.epsilon[{j}]"),
                        "ε must be positive and finite",
                    ));
                }
                let spec =
                    TwoTimeScaleSpec::new(blocks, slow, first).map_err(|e| CliError::config("two_time_scale", e))?;
                Some(TwoTimeScaleConfig {
                    spec,
                    epsilons: raw.epsilon.clone(),
                })
            }
        };

        let chain = match (&self.problem.chain, &two_time_scale) {
            (Some(raw), None) => generator("problem.chain", raw)?,
            (None, Some(t)) => assemble_generator(&t.spec).map_err(|e| CliError::config("two_time_scale", e))?,
            (Some(raw), Some(t)) => {
                let given = generator("problem.chain", raw)?;
                let assembled =
                    assemble_generator(&t.spec).map_err(|e| CliError::config("two_time_scale", e))?;
                if given.m() != assembled.m() || (given.rates() - assembled.rates()).amax() > 1e-12 {
                    return Err(CliError::config(
                        "problem.chain",
                        "differs from the two-time-scale generator at the first ε; omit it or make them agree",
                    ));
                }
                given
            }
            (None, None) => {
                return Err(CliError::config(
                    "problem.chain",
                    "missing: give a chain or a two_time_scale section",
                ))
            }
        };

        let p = self.problem;
        let domain = p.domain.unwrap_or((grid.x_min(), grid.x_max()));
        let problem = ProblemSpec::new(chain, p.coefficients, RewardModel {
            running: p.running_reward,
            terminal: p.obstacle,
        }, p.r, p.theta, p.q_max, domain)
        .map_err(|e| CliError::config(model_path(&e), e))?;
        let slack = 1e-9 * grid.h();
        if grid.x_min() < domain.0 - slack || grid.x_max() > domain.1 + slack {
            return Err(CliError::config("grid", format!("grid leaves the problem domain {domain:?}")));
        }
        if two_time_scale.is_some() && !problem.rewards.terminal.is_regime_independent() {
            return Err(CliError::config(
                "problem.obstacle",
                "must not depend on the regime when two_time_scale is given",
            ));
        }

        let simulation = match self.simulation {
            None => None,
            Some(s) => {
                if s.i0 == 0 || s.i0 > problem.m() {
                    return Err(CliError::config(
                        "simulation.i0",
                        format!("regime must lie in 1..={} (1-based)", problem.m()),
                    ));
                }
                if !(s.x0 >= grid.x_min() && s.x0 <= grid.x_max()) {
                    return Err(CliError::config("simulation.x0", "starting point lies outside the grid"));
                }
                let cfg = SimConfig {
                    x0: s.x0,
                    i0: s.i0 - 1,
                    dt: s.dt.unwrap_or(DEFAULT_DT),
                    horizon: s.horizon.unwrap_or_else(|| default_horizon(problem.r)),
                    n_paths: s.n_paths.unwrap_or(DEFAULT_N_PATHS),
                    seed: s.seed,
                    q_policy: s.q_policy,
                };
                cfg.validate().map_err(|e| CliError::config("simulation", e))?;
                Some(cfg)
            }
        };

        Ok(RunConfig {
            problem,
            grid,
            solver,
            two_time_scale,
            simulation,
        })
    }
}
