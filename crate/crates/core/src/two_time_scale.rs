//! Aggregation of two-time-scale problems into their limit problem.
//!
//! Within each fast block `k` the coefficients are averaged against the
//! block's stationary distribution `νᵏ`:
//!
//! ```text
//! b̄(x,k) = Σ_r νᵏ_r b(x, s_kr)     f̄(x,k) = Σ_r νᵏ_r f(x, s_kr)
//! σ̄²(x,k) = Σ_r νᵏ_r σ²(x, s_kr)
//! ```
//!
//! and the chain is replaced by the limit generator `Q̄` on the blocks.

use thiserror::Error;

use crate::exec::Execution;
use crate::hjb_solver::{solve, Grid, SolutionField, SolverError, SolverOptions};
use crate::markov_chain::{assemble_generator, limit_generator, GeneratorError, ProbVector, TwoTimeScaleSpec};
use crate::model::{CoefficientModel, ModelError, ProblemSpec, RewardModel, RunningReward, Table};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregationError {
    #[error("obstacle depends on the regime; aggregation needs g(x,i) = g(x)")]
    ObstacleRegimeDependent,
    #[error("problem chain differs from the assembled two-time-scale generator (max entry gap {0:e})")]
    ChainMismatch(f64),
    #[error("solutions live on different grids")]
    GridMismatch,
    #[error("solution has {got} regimes, block map covers {expected}")]
    RegimeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Aggregated problem on the `L` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitProblem {
    pub spec: ProblemSpec,
    /// Block index of every original state.
    pub block_map: Vec<usize>,
}

/// Mean absolute deviation per block, `N_k = (1/N) Σ_n Σ_{l∈k} |V^ε(n, s_kl) − V̄(n, k)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorNorms {
    pub per_block: Vec<f64>,
}

fn average(weights: &ProbVector, values: impl Iterator<Item = f64>) -> f64 {
    weights.weights().iter().zip(values).map(|(w, v)| w * v).sum()
}

fn average_per_block(
    tts: &TwoTimeScaleSpec,
    nus: &[ProbVector],
    per_state: &[f64],
    squared: bool,
) -> Vec<f64> {
    (0..tts.n_blocks())
        .map(|k| {
            let off = tts.offset(k);
            let block = &per_state[off..off + nus[k].len()];
            if squared {
                average(&nus[k], block.iter().map(|s| s * s)).sqrt()
            } else {
                average(&nus[k], block.iter().copied())
            }
        })
        .collect()
}

fn average_table(tts: &TwoTimeScaleSpec, nus: &[ProbVector], table: &Table, squared: bool) -> Table {
    let n = table.n_nodes();
    let mut values = vec![vec![0.0; n]; tts.n_blocks()];
    for node in 0..n {
        let column: Vec<f64> = table.values.iter().map(|row| row[node]).collect();
        for (k, v) in average_per_block(tts, nus, &column, squared).into_iter().enumerate() {
            values[k][node] = v;
        }
    }
    Table {
        x_min: table.x_min,
        h: table.h,
        values,
    }
}

/// Stationary-weighted block averages of `b`, `σ²` and `f`.
///
/// Returns the averaged coefficient model (with `σ̄ = √σ̄²`) and running reward,
/// each of the same kind as its input.
pub fn averaged_coefficients(
    tts: &TwoTimeScaleSpec,
    coeffs: &CoefficientModel,
    rewards: &RewardModel,
) -> Result<(CoefficientModel, RunningReward), AggregationError> {
    if !rewards.terminal.is_regime_independent() {
        return Err(AggregationError::ObstacleRegimeDependent);
    }
    let nus = tts.block_stationary()?;
    let m = tts.n_states();
    let check = |field: &'static str, got: usize| {
        if got == m {
            Ok(())
        } else {
            Err(ModelError::RegimeCount { field, expected: m, got })
        }
    };
    let avg_coeffs = match coeffs {
        CoefficientModel::GbmLinear { b, sigma } | CoefficientModel::Constant { b, sigma } => {
            check("coefficients.b", b.len())?;
            check("coefficients.sigma", sigma.len())?;
            let b = average_per_block(tts, &nus, b, false);
            let sigma = average_per_block(tts, &nus, sigma, true);
            if matches!(coeffs, CoefficientModel::GbmLinear { .. }) {
                CoefficientModel::GbmLinear { b, sigma }
            } else {
                CoefficientModel::Constant { b, sigma }
            }
        }
        CoefficientModel::Tabulated { b, sigma } => {
            check("coefficients.b", b.values.len())?;
            check("coefficients.sigma", sigma.values.len())?;
            CoefficientModel::Tabulated {
                b: average_table(tts, &nus, b, false),
                sigma: average_table(tts, &nus, sigma, true),
            }
        }
    };
    let avg_running = match &rewards.running {
        RunningReward::Zero => RunningReward::Zero,
        RunningReward::GbmLinear { c } => {
            check("running_reward.c", c.len())?;
            RunningReward::GbmLinear {
                c: average_per_block(tts, &nus, c, false),
            }
        }
        RunningReward::Constant { c } => {
            check("running_reward.c", c.len())?;
            RunningReward::Constant {
                c: average_per_block(tts, &nus, c, false),
            }
        }
        RunningReward::Tabulated { table } => {
            check("running_reward.table", table.values.len())?;
            RunningReward::Tabulated {
                table: average_table(tts, &nus, table, false),
            }
        }
    };
    Ok((avg_coeffs, avg_running))
}

/// Limit problem of `spec`, whose chain must be `assemble_generator(tts)`.
pub fn build_limit_problem(spec: &ProblemSpec, tts: &TwoTimeScaleSpec) -> Result<LimitProblem, AggregationError> {
    let assembled = assemble_generator(tts)?;
    if assembled.m() != spec.m() {
        return Err(AggregationError::ChainMismatch(f64::INFINITY));
    }
    let gap = (assembled.rates() - spec.chain.rates()).amax();
    if gap > 1e-12 * assembled.rates().amax().max(1.0) {
        return Err(AggregationError::ChainMismatch(gap));
    }
    let (coeffs, running) = averaged_coefficients(tts, &spec.coeffs, &spec.rewards)?;
    let limit = ProblemSpec::new(
        limit_generator(tts)?,
        coeffs,
        RewardModel {
            running,
            terminal: spec.rewards.terminal.clone(),
        },
        spec.r,
        spec.theta,
        spec.q_max,
        spec.domain,
    )?;
    Ok(LimitProblem {
        spec: limit,
        block_map: tts.block_map(),
    })
}

/// `N_k^ε` for every block.
pub fn error_norms(
    sol_eps: &SolutionField,
    sol_limit: &SolutionField,
    block_map: &[usize],
) -> Result<ErrorNorms, AggregationError> {
    if !sol_eps.grid.matches(&sol_limit.grid, 1e-9) {
        return Err(AggregationError::GridMismatch);
    }
    if sol_eps.m() != block_map.len() {
        return Err(AggregationError::RegimeMismatch {
            expected: block_map.len(),
            got: sol_eps.m(),
        });
    }
    let n_blocks = sol_limit.m();
    if block_map.iter().any(|&k| k >= n_blocks) {
        return Err(AggregationError::RegimeMismatch {
            expected: n_blocks,
            got: block_map.iter().max().map_or(0, |k| k + 1),
        });
    }
    let n_nodes = sol_eps.grid.n_nodes();
    let mut per_block = vec![0.0; n_blocks];
    for n in 0..n_nodes {
        for (s, &k) in block_map.iter().enumerate() {
            per_block[k] += (sol_eps.values[n][s] - sol_limit.values[n][k]).abs();
        }
    }
    per_block.iter_mut().for_each(|v| *v /= n_nodes as f64);
    Ok(ErrorNorms { per_block })
}

/// Copies each block's limit value onto every member state.
pub fn lift(sol_limit: &SolutionField, block_map: &[usize]) -> SolutionField {
    let pick = |table: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        table
            .iter()
            .map(|row| block_map.iter().map(|&k| row[k]).collect())
            .collect()
    };
    SolutionField {
        grid: sol_limit.grid,
        values: pick(&sol_limit.values),
        obstacle: pick(&sol_limit.obstacle),
        q_field: pick(&sol_limit.q_field),
        iterations: sol_limit.iterations,
        max_complementarity_residual: sol_limit.max_complementarity_residual,
        warnings: sol_limit.warnings.clone(),
    }
}

/// `max_n |V(n, s_kl) − V(n, s_k1)|` over the members of each block.
pub fn within_block_spread(sol: &SolutionField, tts: &TwoTimeScaleSpec) -> Vec<f64> {
    (0..tts.n_blocks())
        .map(|k| {
            let off = tts.offset(k);
            let size = tts.fast_blocks()[k].m();
            sol.values
                .iter()
                .flat_map(|row| (off + 1..off + size).map(move |s| (row[s] - row[off]).abs()))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Original problems for a list of `ε`, their limit problem, and the norms.
#[derive(Debug, Clone)]
pub struct EpsilonStudy {
    pub epsilons: Vec<f64>,
    pub solutions: Vec<SolutionField>,
    pub limit: LimitProblem,
    pub limit_solution: SolutionField,
    pub norms: Vec<ErrorNorms>,
}

/// Solve the original problem for every `ε` (concurrently) and the limit
/// problem once, then compute the error norms in input order.
///
/// `template` supplies everything but the chain, which is rebuilt from `tts`
/// for each `ε`.
pub fn epsilon_study(
    template: &ProblemSpec,
    tts: &TwoTimeScaleSpec,
    epsilons: &[f64],
    grid: &Grid,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<EpsilonStudy, AggregationError> {
    let specs = epsilons
        .iter()
        .map(|&eps| {
            let tts_eps = tts.with_epsilon(eps)?;
            let spec = ProblemSpec {
                chain: assemble_generator(&tts_eps)?,
                ..template.clone()
            };
            Ok((spec, tts_eps))
        })
        .collect::<Result<Vec<_>, AggregationError>>()?;
    let (first_spec, first_tts) = specs.first().cloned().unwrap_or((
        ProblemSpec {
            chain: assemble_generator(tts)?,
            ..template.clone()
        },
        tts.clone(),
    ));
    let limit = build_limit_problem(&first_spec, &first_tts)?;

    // index 0 is the limit problem, the rest follow `epsilons`
    let mut solved = exec.try_map(specs.len() + 1, |j| {
        if j == 0 {
            solve(&limit.spec, grid, opts)
        } else {
            solve(&specs[j - 1].0, grid, opts)
        }
    })?;
    let limit_solution = solved.remove(0);
    let norms = solved
        .iter()
        .map(|sol| error_norms(sol, &limit_solution, &limit.block_map))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EpsilonStudy {
        epsilons: epsilons.to_vec(),
        solutions: solved,
        limit,
        limit_solution,
        norms,
    })
}
