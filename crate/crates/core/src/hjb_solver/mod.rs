//! Finite-difference solver for the coupled HJB variational inequality
//!
//! ```text
//! min{ sup_q [ r v − (b+σq) v′ − ½σ² v″ − Qv − f − q²/(2θ) ],  v − g } = 0
//! ```
//!
//! Outer loop: policy iteration on the ambiguity control, `q̄ = −θσ·Dv`
//! frozen from the current iterate. Inner loop: projected SOR on the linear
//! obstacle problem with `q̄` frozen, sweeping nodes in ascending order and
//! regimes in ascending order within each node.

mod grid;
pub(crate) mod scheme;

use std::io::{self, Write};

use thiserror::Error;

pub use grid::{build_grid, Grid, GridError};
use scheme::{Drift, NodeData, Stencil};

use crate::model::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Outer,
    Inner,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Outer => "outer",
            Stage::Inner => "inner",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("{stage} iteration did not converge within {iterations} iterations (last change {change:e})")]
    MaxIterations {
        stage: Stage,
        iterations: usize,
        change: f64,
    },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("grid [{0}, {1}] is not inside the problem domain")]
    DomainMismatch(f64, f64),
    #[error("tabulated data does not match the solver grid")]
    TableMismatch,
    #[error("obstacle or coefficients are not finite at node {node}, regime {regime}")]
    NonFiniteData { node: usize, regime: usize },
}

/// Non-fatal findings of a solve.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverWarning {
    /// The node next to `x_max` is still in the continuation region for this
    /// regime, so the Dirichlet condition `v = g` there is suspect.
    BoundaryNotStopping { regime: usize, gap: f64 },
    /// Over-relaxation diverged in this outer iteration and the inner
    /// solve was redone with plain projected Gauss–Seidel.
    RelaxationReduced { outer: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub omega: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_outer: 1e-8,
            tol_inner: 1e-10,
            max_outer: 200,
            max_inner: 50_000,
            omega: 1.5,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidOptions(msg.into()));
        if !(self.tol_outer > 0.0) || !(self.tol_inner > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return bad("omega must lie in (0, 2)");
        }
        Ok(())
    }
}

/// Discrete value function on a grid. Every per-node table is indexed `[node][regime]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub grid: Grid,
    pub values: Vec<Vec<f64>>,
    pub obstacle: Vec<Vec<f64>>,
    /// Ambiguity controls the final linear solve was frozen at.
    pub q_field: Vec<Vec<f64>>,
    pub iterations: usize,
    pub max_complementarity_residual: f64,
    pub warnings: Vec<SolverWarning>,
}

impl SolutionField {
    pub fn m(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn value(&self, n: usize, i: usize) -> f64 {
        self.values[n][i]
    }

    /// Linear interpolation of `v(·, i)`, clamped to the grid.
    pub fn interpolate(&self, x: f64, i: usize) -> f64 {
        interpolate_column(&self.grid, |n| self.values[n][i], x)
    }

    /// `min_n,i (v − g)`.
    pub fn min_obstacle_gap(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.obstacle)
            .flat_map(|(v, g)| v.iter().zip(g).map(|(a, b)| a - b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes `x,v_1..v_m,g_1..g_m,q_1..q_m`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let m = self.m();
        let mut header = vec!["x".to_string()];
        for prefix in ["v", "g", "q"] {
            header.extend((1..=m).map(|i| format!("{prefix}_{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for n in 0..self.grid.n_nodes() {
            let mut row = vec![fmt17(self.grid.x(n))];
            for table in [&self.values, &self.obstacle, &self.q_field] {
                row.extend(table[n].iter().map(|&v| fmt17(v)));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Full-precision float formatting shared by every CSV writer.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn interpolate_column(grid: &Grid, column: impl Fn(usize) -> f64, x: f64) -> f64 {
    let last = grid.n_nodes() - 1;
    let s = ((x - grid.x_min()) / grid.h()).clamp(0.0, last as f64);
    let k = (s.floor() as usize).min(last.saturating_sub(1));
    let w = s - k as f64;
    if last == 0 {
        return column(0);
    }
    column(k) * (1.0 - w) + column(k + 1) * w
}

/// Solve the robust stopping problem on `grid`.
pub fn solve(spec: &ProblemSpec, grid: &Grid, opts: &SolverOptions) -> Result<SolutionField, SolverError> {
    opts.validate()?;
    let slack = 1e-9 * grid.h();
    if grid.x_min() < spec.domain.0 - slack || grid.x_max() > spec.domain.1 + slack {
        return Err(SolverError::DomainMismatch(grid.x_min(), grid.x_max()));
    }
    check_tables(spec, grid)?;

    let data = NodeData::new(spec, grid);
    let m = data.m;
    let n_nodes = grid.n_nodes();
    let h = grid.h();
    if let Some(k) = data
        .points
        .iter()
        .position(|p| !(p.b.is_finite() && p.sigma.is_finite() && p.f.is_finite() && p.g.is_finite()))
    {
        return Err(SolverError::NonFiniteData {
            node: k / m,
            regime: k % m,
        });
    }

    let mut v: Vec<f64> = data.points.iter().map(|p| p.g.max(0.0)).collect();
    let last = (n_nodes - 1) * m;
    for i in 0..m {
        v[last + i] = data.obstacle(last + i);
    }
    let mut q = vec![0.0; n_nodes * m];
    let mut stencils = vec![Stencil::default(); n_nodes * m];

    let mut converged = None;
    let mut change = f64::INFINITY;
    let mut warnings = Vec::new();
    for outer in 1..=opts.max_outer {
        update_controls(spec, &data, &v, &mut q, n_nodes, h);
        assemble(spec, &data, &q, &mut stencils, n_nodes, h);
        let previous = v.clone();
        if psor(&data, &stencils, &mut v, n_nodes, opts)? {
            warnings.push(SolverWarning::RelaxationReduced { outer });
        }
        change = sup_diff(&v, &previous);
        if change <= opts.tol_outer {
            converged = Some(outer);
            break;
        }
    }
    let iterations = converged.ok_or(SolverError::MaxIterations {
        stage: Stage::Outer,
        iterations: opts.max_outer,
        change,
    })?;

    let max_res = discrete_residuals(&data, &stencils, &v, n_nodes)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max);

    if n_nodes >= 2 {
        let k = (n_nodes - 2) * m;
        for i in 0..m {
            let gap = v[k + i] - data.obstacle(k + i);
            if gap > 10.0 * opts.tol_outer {
                warnings.push(SolverWarning::BoundaryNotStopping { regime: i, gap });
            }
        }
    }

    let table = |flat: &[f64]| flat.chunks(m).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let obstacle: Vec<f64> = data.points.iter().map(|p| p.g).collect();
    Ok(SolutionField {
        grid: *grid,
        values: table(&v),
        obstacle: table(&obstacle),
        q_field: table(&q),
        iterations,
        max_complementarity_residual: max_res,
        warnings,
    })
}

fn check_tables(spec: &ProblemSpec, grid: &Grid) -> Result<(), SolverError> {
    use crate::model::{CoefficientModel, RunningReward, Table};
    let fits = |t: &Table| {
        t.n_nodes() == grid.n_nodes()
            && (t.x_min - grid.x_min()).abs() <= 1e-9 * grid.h()
            && (t.h - grid.h()).abs() * (grid.n_nodes() as f64) <= 1e-9 * grid.h()
    };
    let mut ok = true;
    if let CoefficientModel::Tabulated { b, sigma } = &spec.coeffs {
        ok &= fits(b) && fits(sigma);
    }
    if let RunningReward::Tabulated { table } = &spec.rewards.running {
        ok &= fits(table);
    }
    if ok {
        Ok(())
    } else {
        Err(SolverError::TableMismatch)
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn update_controls(spec: &ProblemSpec, data: &NodeData, v: &[f64], q: &mut [f64], n_nodes: usize, h: f64) {
    let m = data.m;
    for n in 0..n_nodes {
        for i in 0..m {
            let k = n * m + i;
            let dv = scheme::slope(v, m, n, i, n_nodes, h);
            q[k] = spec.control_for(data.points[k].sigma, dv);
        }
    }
}

fn assemble(spec: &ProblemSpec, data: &NodeData, q: &[f64], out: &mut [Stencil], n_nodes: usize, h: f64) {
    let m = data.m;
    for n in 0..n_nodes - 1 {
        for i in 0..m {
            let k = n * m + i;
            let exit = -data.rate(i, i);
            let p = &data.points[k];
            out[k] = if n == 0 {
                if data.degenerate(k) {
                    Stencil {
                        diag: spec.r + exit,
                        source: p.f,
                        ..Stencil::default()
                    }
                } else {
                    scheme::lower_boundary(spec, p, q[k], exit, h)
                }
            } else {
                scheme::interior(spec, p, q[k], exit, h)
            };
        }
    }
}

/// Projected SOR on the frozen linear obstacle problem; `x_max` stays at `g`.
///
/// Converged when the sweep changes no value by more than `tol_inner` and
/// every row's projected residual is below `tol_inner` or, failing that,
/// within rounding noise of the row's terms. Over-relaxation is not
/// guaranteed to converge on non-symmetric (convection-dominated) rows; if it
/// blows up or stops making progress the solve restarts from the entry
/// iterate with `omega = 1`, for which the M-matrix structure guarantees
/// convergence. Returns whether that happened.
fn psor(
    data: &NodeData,
    st: &[Stencil],
    v: &mut [f64],
    n_nodes: usize,
    opts: &SolverOptions,
) -> Result<bool, SolverError> {
    let entry = v.to_vec();
    match psor_pass(data, st, v, n_nodes, opts, opts.omega) {
        Ok(()) => Ok(false),
        Err(PassFailure::Diverged) => {
            v.copy_from_slice(&entry);
            match psor_pass(data, st, v, n_nodes, opts, 1.0) {
                Ok(()) => Ok(true),
                Err(PassFailure::Diverged) => unreachable!("Gauss–Seidel pass never reports divergence"),
                Err(PassFailure::Exhausted(e)) => Err(e),
            }
        }
        Err(PassFailure::Exhausted(e)) => Err(e),
    }
}

enum PassFailure {
    Diverged,
    Exhausted(SolverError),
}

fn psor_pass(
    data: &NodeData,
    st: &[Stencil],
    v: &mut [f64],
    n_nodes: usize,
    opts: &SolverOptions,
    omega: f64,
) -> Result<(), PassFailure> {
    const NOISE: f64 = 64.0 * f64::EPSILON;
    const STALL_SWEEPS: usize = 1000;
    let m = data.m;
    let mut change = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for _ in 0..opts.max_inner {
        change = 0.0;
        let mut settled = true;
        for n in 0..n_nodes - 1 {
            for i in 0..m {
                let k = n * m + i;
                let s = &st[k];
                let old = v[k];
                let up = s.upper * v[k + m];
                let lo = if n > 0 { s.lower * v[k - m] } else { 0.0 };
                let mut acc = s.source - up - lo;
                let mut scale = s.source.abs() + up.abs() + lo.abs() + (s.diag * old).abs();
                let base = n * m;
                for j in 0..m {
                    if j != i {
                        let t = data.rate(i, j) * v[base + j];
                        acc += t;
                        scale += t.abs();
                    }
                }
                let gs = acc / s.diag;
                let residual = (s.diag * (old - gs)).min(old - data.obstacle(k)).abs();
                settled &= residual <= opts.tol_inner.max(NOISE * scale);
                let new = (old + omega * (gs - old)).max(data.obstacle(k));
                change = f64::max(change, (new - old).abs());
                v[k] = new;
            }
        }
        if change <= opts.tol_inner && settled {
            return Ok(());
        }
        if change < best {
            best = change;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if omega > 1.0 && (change > 100.0 * best || !change.is_finite() || since_best >= STALL_SWEEPS) {
            return Err(PassFailure::Diverged);
        }
    }
    Err(PassFailure::Exhausted(SolverError::MaxIterations {
        stage: Stage::Inner,
        iterations: opts.max_inner,
        change,
    }))
}

/// `min{A v − source, v − g}` at every interior node for the given stencils.
fn discrete_residuals(data: &NodeData, st: &[Stencil], v: &[f64], n_nodes: usize) -> Vec<f64> {
    let m = data.m;
    let mut out = Vec::with_capacity(n_nodes.saturating_sub(2) * m);
    for n in 1..n_nodes.saturating_sub(1) {
        for i in 0..m {
            let k = n * m + i;
            let s = &st[k];
            let mut lhs = s.diag * v[k] + s.lower * v[k - m] + s.upper * v[k + m];
            for j in 0..m {
                if j != i {
                    lhs -= data.rate(i, j) * v[n * m + j];
                }
            }
            out.push((lhs - s.source).min(v[k] - data.obstacle(k)));
        }
    }
    out
}

/// `max |min{A v − source, v − g}|` of the discrete scheme assembled at the
/// field's stored controls, the same quantity a solve reports as
/// `max_complementarity_residual`. Used to check a stored field without
/// re-solving.
pub fn scheme_residual(spec: &ProblemSpec, sol: &SolutionField) -> Result<f64, SolverError> {
    let grid = &sol.grid;
    check_tables(spec, grid)?;
    let data = NodeData::new(spec, grid);
    let m = data.m;
    let n_nodes = grid.n_nodes();
    if sol.m() != m || sol.values.len() != n_nodes || sol.q_field.len() != n_nodes {
        return Err(SolverError::TableMismatch);
    }
    let v: Vec<f64> = sol.values.iter().flatten().copied().collect();
    let q: Vec<f64> = sol.q_field.iter().flatten().copied().collect();
    let mut stencils = vec![Stencil::default(); n_nodes * m];
    assemble(spec, &data, &q, &mut stencils, n_nodes, grid.h());
    Ok(discrete_residuals(&data, &stencils, &v, n_nodes)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max))
}

/// Pointwise complementarity residual of a solution field.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Max of `|min{H*v, v − g}|` over interior nodes.
    pub max_abs_complementarity: f64,
    /// `profile[n][i]`; zero at the two boundary nodes.
    pub profile: Vec<Vec<f64>>,
    /// Nodes where the monotone scheme had to upwind the drift.
    pub upwinded: Vec<Vec<bool>>,
}

impl ResidualReport {
    /// Max residual over interior nodes further than `band` nodes from every
    /// listed node index of the same regime.
    pub fn max_abs_away_from(&self, exclude: &[Option<usize>], band: usize) -> f64 {
        let n_nodes = self.profile.len();
        let mut worst = 0.0f64;
        for n in 1..n_nodes.saturating_sub(1) {
            for (i, r) in self.profile[n].iter().enumerate() {
                let near = exclude
                    .get(i)
                    .copied()
                    .flatten()
                    .is_some_and(|t| n.abs_diff(t) <= band);
                if !near {
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }
}

/// Recompute `min{H*v, v − g}` at every interior node from the values alone.
///
/// The quadratic ambiguity term is taken in its supremum form from central
/// differences; the drift is differenced the same way the solver's monotone
/// scheme does at that node.
pub fn residual_report(spec: &ProblemSpec, sol: &SolutionField) -> ResidualReport {
    let grid = &sol.grid;
    let n_nodes = grid.n_nodes();
    let m = sol.m();
    let h = grid.h();
    let mut profile = vec![vec![0.0; m]; n_nodes];
    let mut upwinded = vec![vec![false; m]; n_nodes];
    let mut worst = 0.0f64;
    for n in 1..n_nodes.saturating_sub(1) {
        let x = grid.x(n);
        let v_all = &sol.values[n];
        for i in 0..m {
            let (l, c, r) = (sol.values[n - 1][i], v_all[i], sol.values[n + 1][i]);
            let dv = (r - l) / (2.0 * h);
            let ddv = (r - 2.0 * c + l) / (h * h);
            let p = spec.point(x, i);
            let q = spec.control_for(p.sigma, dv);
            let drift = Drift::select(p.sigma * p.sigma, p.b + p.sigma * q, h);
            let hamiltonian = if drift == Drift::Central {
                crate::model::hamiltonian_residual(spec, i, x, v_all, dv, ddv)
            } else {
                upwinded[n][i] = true;
                let d_up = drift.derivative(l, c, r, h);
                crate::model::frozen_hamiltonian(spec, i, x, v_all, d_up, ddv, q)
            };
            let res = hamiltonian.min(c - sol.obstacle[n][i]);
            profile[n][i] = res;
            worst = worst.max(res.abs());
        }
    }
    ResidualReport {
        max_abs_complementarity: worst,
        profile,
        upwinded,
    }
}
