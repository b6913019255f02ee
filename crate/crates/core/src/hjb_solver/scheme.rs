//! Monotone finite-difference stencils for the frozen-control operator
//!
//! ```text
//! r v − (b+σq)·Dv − ½σ²·D²v − Qv − f − q²/(2θ)
//! ```
//!
//! The drift is differenced centrally wherever that keeps the off-diagonal
//! weights non-positive (`σ² ≥ |b+σq|·h`), and first-order upwind otherwise,
//! so every row is an M-matrix row and projected Gauss–Seidel converges.

use super::Grid;
use crate::model::{PointCoefficients, ProblemSpec};

/// One row of the discrete operator:
/// `diag·v_n + lower·v_{n−1} + upper·v_{n+1} − Σ_{j≠i} λ_ij v_j(n) = source`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Stencil {
    pub lower: f64,
    pub diag: f64,
    pub upper: f64,
    pub source: f64,
    pub upwind: bool,
}

/// How the drift term at a node is differenced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Drift {
    Central,
    Forward,
    Backward,
}

impl Drift {
    pub fn select(sigma2: f64, mu: f64, h: f64) -> Self {
        if sigma2 >= mu.abs() * h {
            Drift::Central
        } else if mu > 0.0 {
            Drift::Forward
        } else {
            Drift::Backward
        }
    }

    pub fn derivative(self, left: f64, mid: f64, right: f64, h: f64) -> f64 {
        match self {
            Drift::Central => (right - left) / (2.0 * h),
            Drift::Forward => (right - mid) / h,
            Drift::Backward => (mid - left) / h,
        }
    }
}

/// Pointwise coefficients at every node, row-major `[n * m + i]`.
pub(crate) struct NodeData {
    pub m: usize,
    pub points: Vec<PointCoefficients>,
    /// Row-major copy of the generator.
    pub rates: Vec<f64>,
}

impl NodeData {
    pub fn new(spec: &ProblemSpec, grid: &Grid) -> Self {
        let m = spec.m();
        let points = (0..grid.n_nodes())
            .flat_map(|n| {
                let x = grid.x(n);
                (0..m).map(move |i| spec.point(x, i))
            })
            .collect();
        let rates = (0..m)
            .flat_map(|i| (0..m).map(move |j| spec.chain.rate(i, j)))
            .collect();
        Self { m, points, rates }
    }

    #[inline]
    pub fn obstacle(&self, k: usize) -> f64 {
        self.points[k].g
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.m + j]
    }

    /// `σ = 0` and `b = 0`: the lower boundary needs no derivative information.
    pub fn degenerate(&self, k: usize) -> bool {
        let p = self.points[k];
        p.sigma == 0.0 && p.b == 0.0
    }
}

/// Stencil at an interior node for frozen control `q`.
pub(crate) fn interior(spec: &ProblemSpec, p: &PointCoefficients, q: f64, exit: f64, h: f64) -> Stencil {
    let s2 = p.sigma * p.sigma;
    let mu = p.b + p.sigma * q;
    let diff = 0.5 * s2 / (h * h);
    let drift = Drift::select(s2, mu, h);
    let (lo, up, dg) = match drift {
        Drift::Central => (mu / (2.0 * h), -mu / (2.0 * h), 0.0),
        Drift::Forward => (0.0, -mu / h, mu / h),
        Drift::Backward => (mu / h, 0.0, -mu / h),
    };
    Stencil {
        lower: -diff + lo,
        diag: spec.r + 2.0 * diff + dg + exit,
        upper: -diff + up,
        source: p.f + spec.penalty(q),
        upwind: drift != Drift::Central,
    }
}

/// Stencil at `x_min`.
///
/// A degenerate node (`σ = b = 0`) keeps only `r v − Qv − f`. Otherwise the
/// far-field condition `v″ = 0` is imposed and only inward drift is kept,
/// differenced forward.
pub(crate) fn lower_boundary(spec: &ProblemSpec, p: &PointCoefficients, q: f64, exit: f64, h: f64) -> Stencil {
    let mu = (p.b + p.sigma * q).max(0.0);
    Stencil {
        lower: 0.0,
        diag: spec.r + mu / h + exit,
        upper: -mu / h,
        source: p.f + spec.penalty(q),
        upwind: mu > 0.0,
    }
}

/// Derivative estimate feeding the control update: central in the interior,
/// one-sided at the ends.
pub(crate) fn slope(values: &[f64], m: usize, n: usize, i: usize, n_nodes: usize, h: f64) -> f64 {
    let v = |n: usize| values[n * m + i];
    if n_nodes < 2 {
        0.0
    } else if n == 0 {
        (v(1) - v(0)) / h
    } else if n == n_nodes - 1 {
        (v(n) - v(n - 1)) / h
    } else {
        (v(n + 1) - v(n - 1)) / (2.0 * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov_chain::Generator;

    #[test]
    fn rows_are_m_matrix_rows() {
        let spec = ProblemSpec::switching_gbm(
            Generator::two_state(1.0, 1.0).unwrap(),
            vec![2.125, 0.875],
            vec![1.0, 1.0],
            5.0,
            1.0,
            1.0,
            (0.0, 6.0),
        )
        .unwrap();
        let h = 0.01;
        for &x in &[0.01, 0.02, 0.5, 2.0, 5.99] {
            for &q in &[-3.0, 0.0, 2.0] {
                let p = spec.point(x, 0);
                let s = interior(&spec, &p, q, 1.0, h);
                assert!(s.lower <= 0.0 && s.upper <= 0.0, "x={x} q={q} {s:?}");
                assert!(s.diag >= -(s.lower + s.upper) + spec.r + 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn central_where_diffusion_dominates() {
        assert_eq!(Drift::select(1.0, 2.0, 0.01), Drift::Central);
        assert_eq!(Drift::select(1e-4, 0.05, 0.01), Drift::Forward);
        assert_eq!(Drift::select(1e-4, -0.05, 0.01), Drift::Backward);
        assert_eq!(Drift::select(0.0, 0.0, 0.01), Drift::Central);
    }
}
