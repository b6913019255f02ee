//! Stopping-problem data and the pointwise Hamiltonian algebra.
//!
//! The controlled state follows `dX = [b + σq] dt + σ dB` under the
//! alternative measure, with ambiguity penalty `q²/(2θ)`. The supremum over
//! `q` is attained at `q* = −θσv′`, which turns the continuation operator into
//!
//! ```text
//! H*v = r v − b v′ + (θ/2) σ² (v′)² − ½ σ² v″ − Qv(x,·)(i) − f
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov_chain::Generator;

/// Default bound on admissible ambiguity controls.
pub const DEFAULT_Q_MAX: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("discount rate must be positive, got {0}")]
    NonPositiveDiscount(f64),
    #[error("ambiguity factor must be non-negative, got {0}")]
    NegativeTheta(f64),
    #[error("control bound q_max must be positive, got {0}")]
    NonPositiveControlBound(f64),
    #[error("empty domain [{0}, {1}]")]
    EmptyDomain(f64, f64),
    #[error("{field}: expected {expected} regimes, got {got}")]
    RegimeCount {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{field}: {reason}")]
    BadTable { field: &'static str, reason: String },
    #[error("{field}: non-finite parameter")]
    NonFinite { field: &'static str },
    #[error("x = {0} lies outside the tabulated range")]
    OutOfDomain(f64),
    #[error("regime {0} out of range")]
    RegimeOutOfRange(usize),
}

/// Per-regime samples on a uniform node set `x_min + n·h`, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub x_min: f64,
    pub h: f64,
    /// `values[i][n]`: regime `i` at node `n`.
    pub values: Vec<Vec<f64>>,
}

impl Table {
    pub fn n_nodes(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + (self.n_nodes().saturating_sub(1)) as f64 * self.h
    }

    fn check(&self, field: &'static str, m: usize) -> Result<(), ModelError> {
        if self.values.len() != m {
            return Err(ModelError::RegimeCount {
                field,
                expected: m,
                got: self.values.len(),
            });
        }
        if !(self.h > 0.0 && self.x_min.is_finite()) {
            return Err(ModelError::BadTable {
                field,
                reason: format!("invalid node spacing h = {}", self.h),
            });
        }
        let n = self.n_nodes();
        if n < 2 || self.values.iter().any(|row| row.len() != n) {
            return Err(ModelError::BadTable {
                field,
                reason: "every regime needs the same number (≥ 2) of samples".into(),
            });
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { field });
        }
        Ok(())
    }

    fn contains(&self, x: f64) -> bool {
        let slack = 1e-9 * self.h;
        x >= self.x_min - slack && x <= self.x_max() + slack
    }

    /// Linear interpolation; `x` is clamped into the node hull.
    fn interp(&self, i: usize, x: f64) -> f64 {
        let row = &self.values[i];
        let last = row.len() - 1;
        let s = ((x - self.x_min) / self.h).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last - 1);
        let w = s - k as f64;
        row[k] * (1.0 - w) + row[k + 1] * w
    }
}

/// Drift `b(x,i)` and volatility `σ(x,i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientModel {
    /// `b(x,i) = b_i·x`, `σ(x,i) = σ_i·x` (switching geometric Brownian motion).
    GbmLinear { b: Vec<f64>, sigma: Vec<f64> },
    /// `b(x,i) = b_i`, `σ(x,i) = σ_i`.
    Constant { b: Vec<f64>, sigma: Vec<f64> },
    Tabulated { b: Table, sigma: Table },
}

impl CoefficientModel {
    fn check(&self, m: usize) -> Result<(), ModelError> {
        match self {
            Self::GbmLinear { b, sigma } | Self::Constant { b, sigma } => {
                check_len("coefficients.b", b, m)?;
                check_len("coefficients.sigma", sigma, m)
            }
            Self::Tabulated { b, sigma } => {
                b.check("coefficients.b", m)?;
                sigma.check("coefficients.sigma", m)?;
                if b.n_nodes() != sigma.n_nodes() || b.x_min != sigma.x_min || b.h != sigma.h {
                    return Err(ModelError::BadTable {
                        field: "coefficients",
                        reason: "b and sigma tables must share nodes".into(),
                    });
                }
                Ok(())
            }
        }
    }

    fn tables(&self) -> Option<(&Table, &Table)> {
        match self {
            Self::Tabulated { b, sigma } => Some((b, sigma)),
            _ => None,
        }
    }

    fn eval(&self, x: f64, i: usize) -> (f64, f64) {
        match self {
            Self::GbmLinear { b, sigma } => (b[i] * x, sigma[i] * x),
            Self::Constant { b, sigma } => (b[i], sigma[i]),
            Self::Tabulated { b, sigma } => (b.interp(i, x), sigma.interp(i, x)),
        }
    }
}

/// Running reward `f(x,i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunningReward {
    #[default]
    Zero,
    /// `f(x,i) = c_i·x`.
    GbmLinear { c: Vec<f64> },
    Constant { c: Vec<f64> },
    Tabulated { table: Table },
}

impl RunningReward {
    fn check(&self, m: usize) -> Result<(), ModelError> {
        match self {
            Self::Zero => Ok(()),
            Self::GbmLinear { c } | Self::Constant { c } => check_len("running_reward.c", c, m),
            Self::Tabulated { table } => table.check("running_reward.table", m),
        }
    }

    fn eval(&self, x: f64, i: usize) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::GbmLinear { c } => c[i] * x,
            Self::Constant { c } => c[i],
            Self::Tabulated { table } => table.interp(i, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }
}

/// Terminal reward (obstacle) `g(x,i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    /// Selling a stock for a transaction fee `K`: `g(x) = x − K`.
    Call { strike: f64 },
    Constant { value: f64 },
    /// `g(x,i) = slope_i·x + intercept_i`.
    Affine { slope: Vec<f64>, intercept: Vec<f64> },
}

impl Obstacle {
    fn check(&self, m: usize) -> Result<(), ModelError> {
        match self {
            Self::Call { strike } if !strike.is_finite() => {
                Err(ModelError::NonFinite { field: "obstacle.strike" })
            }
            Self::Constant { value } if !value.is_finite() => {
                Err(ModelError::NonFinite { field: "obstacle.value" })
            }
            Self::Affine { slope, intercept } => {
                check_len("obstacle.slope", slope, m)?;
                check_len("obstacle.intercept", intercept, m)
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64, i: usize) -> f64 {
        match self {
            Self::Call { strike } => x - strike,
            Self::Constant { value } => *value,
            Self::Affine { slope, intercept } => slope[i] * x + intercept[i],
        }
    }

    /// `g(x,i) ≡ g(x)`.
    pub fn is_regime_independent(&self) -> bool {
        match self {
            Self::Call { .. } | Self::Constant { .. } => true,
            Self::Affine { slope, intercept } => {
                slope.windows(2).all(|w| w[0] == w[1])
                    && intercept.windows(2).all(|w| w[0] == w[1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    #[serde(default)]
    pub running: RunningReward,
    pub terminal: Obstacle,
}

fn check_len(field: &'static str, v: &[f64], m: usize) -> Result<(), ModelError> {
    if v.len() != m {
        return Err(ModelError::RegimeCount {
            field,
            expected: m,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite { field });
    }
    Ok(())
}

/// Complete robust stopping problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub chain: Generator,
    pub coeffs: CoefficientModel,
    pub rewards: RewardModel,
    /// Discount rate `r > 0`.
    pub r: f64,
    /// Ambiguity factor `θ ≥ 0`; `θ = 0` means no ambiguity.
    pub theta: f64,
    /// Admissible controls are clamped to `[−q_max, q_max]`.
    pub q_max: f64,
    pub domain: (f64, f64),
}

/// The four pointwise coefficient values at `(x, i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    pub b: f64,
    pub sigma: f64,
    pub f: f64,
    pub g: f64,
}

impl ProblemSpec {
    pub fn new(
        chain: Generator,
        coeffs: CoefficientModel,
        rewards: RewardModel,
        r: f64,
        theta: f64,
        q_max: f64,
        domain: (f64, f64),
    ) -> Result<Self, ModelError> {
        let spec = Self {
            chain,
            coeffs,
            rewards,
            r,
            theta,
            q_max,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Switching geometric Brownian motion with a sell-for-fee obstacle and no running reward.
    pub fn switching_gbm(
        chain: Generator,
        b: Vec<f64>,
        sigma: Vec<f64>,
        r: f64,
        theta: f64,
        strike: f64,
        domain: (f64, f64),
    ) -> Result<Self, ModelError> {
        Self::new(
            chain,
            CoefficientModel::GbmLinear { b, sigma },
            RewardModel {
                running: RunningReward::Zero,
                terminal: Obstacle::Call { strike },
            },
            r,
            theta,
            DEFAULT_Q_MAX,
            domain,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let m = self.m();
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(ModelError::NonPositiveDiscount(self.r));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(ModelError::NegativeTheta(self.theta));
        }
        if !(self.q_max > 0.0) {
            return Err(ModelError::NonPositiveControlBound(self.q_max));
        }
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ModelError::EmptyDomain(lo, hi));
        }
        self.coeffs.check(m)?;
        self.rewards.running.check(m)?;
        self.rewards.terminal.check(m)
    }

    pub fn m(&self) -> usize {
        self.chain.m()
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    /// Tabulated data covering `[lo, hi]`, if any table is present.
    pub(crate) fn tables_cover(&self, lo: f64, hi: f64) -> bool {
        let mut tables: Vec<&Table> = Vec::new();
        if let Some((b, s)) = self.coeffs.tables() {
            tables.push(b);
            tables.push(s);
        }
        if let RunningReward::Tabulated { table } = &self.rewards.running {
            tables.push(table);
        }
        tables.iter().all(|t| t.contains(lo) && t.contains(hi))
    }

    fn has_tables(&self) -> bool {
        self.coeffs.tables().is_some()
            || matches!(self.rewards.running, RunningReward::Tabulated { .. })
    }

    /// Pointwise values with tabulated data clamped to the sample hull.
    pub(crate) fn point(&self, x: f64, i: usize) -> PointCoefficients {
        let (b, sigma) = self.coeffs.eval(x, i);
        PointCoefficients {
            b,
            sigma,
            f: self.rewards.running.eval(x, i),
            g: self.rewards.terminal.eval(x, i),
        }
    }

    /// Ambiguity penalty `q²/(2θ)`; with `θ = 0` only `q = 0` is free.
    pub fn penalty(&self, q: f64) -> f64 {
        if q == 0.0 {
            0.0
        } else if self.theta == 0.0 {
            f64::INFINITY
        } else {
            q * q / (2.0 * self.theta)
        }
    }

    /// `clamp(−θσ·dv, −q_max, q_max)` for a known volatility.
    #[inline]
    pub fn control_for(&self, sigma: f64, dv: f64) -> f64 {
        let q = -self.theta * sigma * dv;
        // -0.0 and NaN-free when theta or sigma vanish
        if q == 0.0 {
            0.0
        } else {
            q.clamp(-self.q_max, self.q_max)
        }
    }
}

/// Evaluate `(b, σ, f, g)` for regime `i` at `x`.
pub fn evaluate_coefficients(
    spec: &ProblemSpec,
    x: f64,
    i: usize,
) -> Result<PointCoefficients, ModelError> {
    if i >= spec.m() {
        return Err(ModelError::RegimeOutOfRange(i));
    }
    if spec.has_tables() && !spec.tables_cover(x, x) {
        return Err(ModelError::OutOfDomain(x));
    }
    Ok(spec.point(x, i))
}

/// Worst-case (minimising) ambiguity control `q* = −θσ(x,i)·dv`, clamped to the admissible box.
pub fn worst_case_control(spec: &ProblemSpec, x: f64, i: usize, dv: f64) -> f64 {
    spec.control_for(spec.point(x, i).sigma, dv)
}

/// Continuation operator `H*v(x,i)` in its unclamped supremum form.
pub fn hamiltonian_residual(
    spec: &ProblemSpec,
    i: usize,
    x: f64,
    v_all: &[f64],
    dv: f64,
    ddv: f64,
) -> f64 {
    let p = spec.point(x, i);
    let s2 = p.sigma * p.sigma;
    spec.r * v_all[i] - p.b * dv + 0.5 * spec.theta * s2 * dv * dv
        - 0.5 * s2 * ddv
        - spec.chain.apply_row(i, v_all)
        - p.f
}

/// Continuation operator with the ambiguity control frozen at `q`:
/// `rv − (b+σq)v′ − ½σ²v″ − Qv − f − q²/(2θ)`.
pub fn frozen_hamiltonian(
    spec: &ProblemSpec,
    i: usize,
    x: f64,
    v_all: &[f64],
    dv: f64,
    ddv: f64,
    q: f64,
) -> f64 {
    let p = spec.point(x, i);
    spec.r * v_all[i] - (p.b + p.sigma * q) * dv - 0.5 * p.sigma * p.sigma * ddv
        - spec.chain.apply_row(i, v_all)
        - p.f
        - spec.penalty(q)
}

/// `min{H*v, v − g}`.
pub fn complementarity_residual(
    spec: &ProblemSpec,
    i: usize,
    x: f64,
    v_all: &[f64],
    dv: f64,
    ddv: f64,
) -> f64 {
    let h = hamiltonian_residual(spec, i, x, v_all, dv, ddv);
    h.min(v_all[i] - spec.point(x, i).g)
}
