//! Monte Carlo evaluation of stopping rules under the worst-case measure.
//!
//! Paths follow
//!
//! ```text
//! dX = (b(X,α) + σ(X,α) q) dt + σ(X,α) dB
//! ```
//!
//! by Euler–Maruyama, while the regime runs on exact exponential clocks;
//! each Euler step is cut at the next jump time. The reward of a path is
//! `∫₀^τ e^{−rt}(f + q²/2θ) dt + e^{−rτ} g(X_τ, α_τ)`, with the integral
//! taken by left-endpoint quadrature and the terminal part dropped for
//! paths still running at the horizon.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path
//! index) and results are reduced in path order, so a report does not
//! depend on how many threads produced it.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::free_boundary::StoppingRule;
use crate::hjb_solver::{fmt17, interpolate_column, SolutionField};
use crate::markov_chain::Generator;
use crate::model::ProblemSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),
    #[error("initial regime {0} out of range")]
    RegimeOutOfRange(usize),
    #[error("initial point {0} lies outside the solution grid")]
    OutOfDomain(f64),
    #[error("stopping rule and solution are on different grids or regime counts")]
    RuleMismatch,
}

/// Feedback control used by the adversary during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QPolicy {
    /// `q = clamp(−θσ·v′)` with `v′` interpolated from the solution.
    #[default]
    WorstCaseFromSolution,
    Zero,
    Constant(f64),
}

impl QPolicy {
    pub fn label(&self) -> String {
        match self {
            QPolicy::WorstCaseFromSolution => "worst_case_from_solution".into(),
            QPolicy::Zero => "zero".into(),
            QPolicy::Constant(c) => format!("constant({c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub x0: f64,
    /// 0-based initial regime.
    pub i0: usize,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub q_policy: QPolicy,
}

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_N_PATHS: usize = 100_000;

/// Horizon with `e^{−rT} = 1e−8`.
pub fn default_horizon(r: f64) -> f64 {
    1e8f64.ln() / r
}

impl SimConfig {
    /// Defaults for everything but the starting point and seed.
    pub fn new(spec: &ProblemSpec, x0: f64, i0: usize, seed: u64) -> Self {
        Self {
            x0,
            i0,
            dt: DEFAULT_DT,
            horizon: default_horizon(spec.r),
            n_paths: DEFAULT_N_PATHS,
            seed,
            q_policy: QPolicy::WorstCaseFromSolution,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |s: &str| Err(SimulationError::InvalidConfig(s.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if let QPolicy::Constant(c) = self.q_policy {
            if !c.is_finite() {
                return bad("constant control must be finite");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub fraction_stopped_before_t: f64,
    /// Mean of `min(τ, T)` over all paths.
    pub mean_stop_time: f64,
    /// Paths that left the grid before stopping; they were stopped on the edge.
    pub domain_escapes: usize,
}

impl SimulationReport {
    /// Combined standard error of a difference of two independent estimates.
    pub fn combined_se(&self, other: &SimulationReport) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// Writes the one-line report CSV with header
/// `x0,i0,policy,estimate,std_error,n_paths,frac_stopped,mean_stop_time`.
pub fn write_report_csv<W: Write>(mut w: W, cfg: &SimConfig, report: &SimulationReport) -> io::Result<()> {
    writeln!(w, "x0,i0,policy,estimate,std_error,n_paths,frac_stopped,mean_stop_time")?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        fmt17(cfg.x0),
        cfg.i0 + 1,
        cfg.q_policy.label(),
        fmt17(report.estimate),
        fmt17(report.std_error),
        report.n_paths,
        fmt17(report.fraction_stopped_before_t),
        fmt17(report.mean_stop_time)
    )
}

/// Piecewise-constant regime path: `states[k]` holds on `[jump_times[k], jump_times[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl RegimePath {
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k.saturating_sub(1)]
    }

    /// Time spent in regime `i` on `[0, horizon]`.
    pub fn occupation(&self, i: usize) -> f64 {
        (0..self.states.len())
            .filter(|&k| self.states[k] == i)
            .map(|k| self.jump_times.get(k + 1).copied().unwrap_or(self.horizon) - self.jump_times[k])
            .sum()
    }
}

/// Holding time in `i` and the next state, or `None` when `i` is absorbing.
fn next_jump<R: Rng>(chain: &Generator, i: usize, rng: &mut R) -> Option<(f64, usize)> {
    let rate = chain.exit_rate(i);
    if rate <= 0.0 {
        return None;
    }
    let hold = rng.sample::<f64, _>(Exp1) / rate;
    let mut u = rng.random::<f64>() * rate;
    let mut next = i;
    for j in (0..chain.m()).filter(|&j| j != i) {
        let w = chain.rate(i, j);
        if w <= 0.0 {
            continue;
        }
        next = j;
        if u < w {
            break;
        }
        u -= w;
    }
    Some((hold, next))
}

/// Exact sample of the chain on `[0, horizon]` starting from `i0`.
pub fn sample_regime_path<R: Rng>(chain: &Generator, i0: usize, horizon: f64, rng: &mut R) -> RegimePath {
    let mut jump_times = vec![0.0];
    let mut states = vec![i0];
    let mut t = 0.0;
    let mut i = i0;
    while let Some((hold, j)) = next_jump(chain, i, rng) {
        t += hold;
        if t >= horizon {
            break;
        }
        jump_times.push(t);
        states.push(j);
        i = j;
    }
    RegimePath {
        jump_times,
        states,
        horizon,
    }
}

/// The per-path RNG used by [`simulate_reward`].
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Result of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    /// Discounted running reward plus the discounted payoff at stopping.
    pub reward: f64,
    /// Discounted running part alone (includes the ambiguity penalty).
    pub running: f64,
    /// `None` when the path was still running at the horizon.
    pub stop_time: Option<f64>,
    pub escaped: bool,
}

struct Simulator<'a> {
    spec: &'a ProblemSpec,
    sol: &'a SolutionField,
    rule: &'a StoppingRule,
    cfg: &'a SimConfig,
    /// Node slopes `slopes[n][i]` for the worst-case policy.
    slopes: Vec<Vec<f64>>,
}

impl<'a> Simulator<'a> {
    fn control(&self, x: f64, i: usize, sigma: f64) -> f64 {
        match self.cfg.q_policy {
            QPolicy::Zero => 0.0,
            QPolicy::Constant(c) => c,
            QPolicy::WorstCaseFromSolution => {
                let dv = interpolate_column(&self.sol.grid, |n| self.slopes[n][i], x);
                self.spec.control_for(sigma, dv)
            }
        }
    }

    fn run(&self, path: usize) -> PathOutcome {
        let spec = self.spec;
        let grid = &self.sol.grid;
        let (lo, hi) = (grid.x_min(), grid.x_max());
        let mut rng = path_rng(self.cfg.seed, path as u64);
        let mut x = self.cfg.x0;
        let mut i = self.cfg.i0;
        let mut t = 0.0;
        let mut reward = 0.0;
        let mut jump = next_jump(&spec.chain, i, &mut rng);
        let mut jump_at = jump.map_or(f64::INFINITY, |(h, _)| h);

        if !self.rule.continues(x, i) {
            return PathOutcome {
                reward: spec.point(x, i).g,
                running: 0.0,
                stop_time: Some(0.0),
                escaped: false,
            };
        }
        while t < self.cfg.horizon {
            let to_jump = jump_at - t;
            let mut step = self.cfg.dt.min(self.cfg.horizon - t);
            let jumps = to_jump <= step;
            if jumps {
                step = to_jump;
            }
            let p = spec.point(x, i);
            let q = self.control(x, i, p.sigma);
            let discount = (-spec.r * t).exp();
            reward += discount * (p.f + spec.penalty(q)) * step;
            let z: f64 = rng.sample(StandardNormal);
            x += (p.b + p.sigma * q) * step + p.sigma * step.sqrt() * z;
            if jumps {
                t = jump_at;
                i = jump.map_or(i, |(_, j)| j);
                jump = next_jump(&spec.chain, i, &mut rng);
                jump_at = jump.map_or(f64::INFINITY, |(h, _)| t + h);
            } else {
                t += step;
            }
            let escaped = x < lo || x > hi;
            if escaped {
                x = x.clamp(lo, hi);
            }
            if escaped || !self.rule.continues(x, i) {
                let running = reward;
                reward += (-spec.r * t).exp() * spec.point(x, i).g;
                return PathOutcome {
                    reward,
                    running,
                    stop_time: Some(t),
                    escaped,
                };
            }
        }
        PathOutcome {
            reward,
            running: reward,
            stop_time: None,
            escaped: false,
        }
    }
}

/// [`simulate_reward_with`] using the default (parallel when available) execution.
pub fn simulate_reward(
    spec: &ProblemSpec,
    sol: &SolutionField,
    rule: &StoppingRule,
    cfg: &SimConfig,
) -> Result<SimulationReport, SimulationError> {
    simulate_reward_with(spec, sol, rule, cfg, Execution::default())
}

/// Simulated reward `J(x0, i0; τ_rule, q_policy)` with its standard error.
pub fn simulate_reward_with(
    spec: &ProblemSpec,
    sol: &SolutionField,
    rule: &StoppingRule,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<SimulationReport, SimulationError> {
    let outcomes = simulate_paths(spec, sol, rule, cfg, exec)?;
    Ok(summarize(&outcomes, cfg.horizon))
}

/// Every path outcome, in path order.
pub fn simulate_paths(
    spec: &ProblemSpec,
    sol: &SolutionField,
    rule: &StoppingRule,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<Vec<PathOutcome>, SimulationError> {
    cfg.validate()?;
    let m = sol.m();
    if spec.m() != m || rule.m() != m || !rule.grid.matches(&sol.grid, 1e-9) {
        return Err(SimulationError::RuleMismatch);
    }
    if cfg.i0 >= m {
        return Err(SimulationError::RegimeOutOfRange(cfg.i0));
    }
    let grid = &sol.grid;
    if !(cfg.x0 >= grid.x_min() && cfg.x0 <= grid.x_max()) {
        return Err(SimulationError::OutOfDomain(cfg.x0));
    }
    if let QPolicy::Constant(c) = cfg.q_policy {
        if c != 0.0 && spec.theta == 0.0 {
            return Err(SimulationError::InvalidConfig(
                "a non-zero control has infinite cost when theta = 0".into(),
            ));
        }
    }

    let slopes = node_slopes(sol);
    let sim = Simulator {
        spec,
        sol,
        rule,
        cfg,
        slopes,
    };
    Ok(exec.map(cfg.n_paths, |p| sim.run(p)))
}

fn node_slopes(sol: &SolutionField) -> Vec<Vec<f64>> {
    let n_nodes = sol.grid.n_nodes();
    let h = sol.grid.h();
    let v = &sol.values;
    (0..n_nodes)
        .map(|n| {
            (0..sol.m())
                .map(|i| {
                    if n_nodes < 2 {
                        0.0
                    } else if n == 0 {
                        (v[1][i] - v[0][i]) / h
                    } else if n == n_nodes - 1 {
                        (v[n][i] - v[n - 1][i]) / h
                    } else {
                        (v[n + 1][i] - v[n - 1][i]) / (2.0 * h)
                    }
                })
                .collect()
        })
        .collect()
}

// Sequential, in path order. Sums are shifted by the first reward so a
// constant payoff comes back exactly.
fn summarize(outcomes: &[PathOutcome], horizon: f64) -> SimulationReport {
    let n = outcomes.len() as f64;
    let shift = outcomes[0].reward;
    let mean = shift + outcomes.iter().map(|o| o.reward - shift).sum::<f64>() / n;
    let var = if outcomes.len() > 1 {
        outcomes.iter().map(|o| (o.reward - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let stopped = outcomes.iter().filter(|o| o.stop_time.is_some()).count();
    SimulationReport {
        estimate: mean,
        std_error: (var / n).sqrt(),
        n_paths: outcomes.len(),
        fraction_stopped_before_t: stopped as f64 / n,
        mean_stop_time: outcomes.iter().map(|o| o.stop_time.unwrap_or(horizon)).sum::<f64>() / n,
        domain_escapes: outcomes.iter().filter(|o| o.escaped).count(),
    }
}
