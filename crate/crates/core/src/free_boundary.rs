//! Continuation/stopping regions, threshold levels and the smooth-fit check.

use std::io::{self, Write};

use thiserror::Error;

use crate::hjb_solver::{fmt17, Grid, SolutionField};

/// Default classification tolerance on `v − g`.
pub const DEFAULT_TOL_REGION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FreeBoundaryError {
    #[error("regime {0} has no threshold")]
    NoThreshold(usize),
    #[error("threshold of regime {0} is too close to the grid edge for one-sided differences")]
    EdgeThreshold(usize),
}

/// Per-regime continuation masks and threshold levels.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    pub grid: Grid,
    pub tol_region: f64,
    /// `masks[n][i]`: true where continuing is strictly better than stopping.
    pub masks: Vec<Vec<bool>>,
    /// `x_i` when regime `i` continues exactly on `[x_min, x_i)`.
    pub thresholds: Vec<Option<f64>>,
    /// Grid index of each threshold.
    pub threshold_nodes: Vec<Option<usize>>,
}

impl StoppingRule {
    /// Rule from explicit masks; thresholds are derived when the masks are intervals.
    pub fn from_masks(grid: Grid, tol_region: f64, masks: Vec<Vec<bool>>) -> Self {
        let m = masks.first().map_or(0, Vec::len);
        let threshold_nodes: Vec<Option<usize>> = (0..m)
            .map(|i| interval_end(masks.iter().map(|row| row[i])))
            .collect();
        let thresholds = threshold_nodes.iter().map(|t| t.map(|n| grid.x(n))).collect();
        Self {
            grid,
            tol_region,
            masks,
            thresholds,
            threshold_nodes,
        }
    }

    /// Threshold-type rule: continue in regime `i` iff `x < levels[i]`.
    pub fn from_thresholds(grid: Grid, levels: &[f64]) -> Self {
        let masks = grid
            .nodes()
            .map(|x| levels.iter().map(|&t| x < t - 1e-9 * grid.h()).collect())
            .collect();
        Self::from_masks(grid, DEFAULT_TOL_REGION, masks)
    }

    /// Every regime shifted by `delta`; regimes without a threshold keep their masks.
    pub fn shifted(&self, delta: f64) -> Self {
        let levels: Vec<f64> = self
            .thresholds
            .iter()
            .map(|t| t.map_or(f64::NAN, |x| x + delta))
            .collect();
        let masks = (0..self.grid.n_nodes())
            .map(|n| {
                let x = self.grid.x(n);
                levels
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        if t.is_nan() {
                            self.masks[n][i]
                        } else {
                            x < t - 1e-9 * self.grid.h()
                        }
                    })
                    .collect()
            })
            .collect();
        Self::from_masks(self.grid, self.tol_region, masks)
    }

    pub fn m(&self) -> usize {
        self.thresholds.len()
    }

    /// Whether `(x, i)` lies in the continuation region.
    ///
    /// Threshold regimes use `x < x_i`; other regimes need both neighbouring
    /// nodes to be continuation nodes.
    pub fn continues(&self, x: f64, i: usize) -> bool {
        if let Some(t) = self.thresholds[i] {
            return x < t - 1e-9 * self.grid.h();
        }
        let g = &self.grid;
        let s = (x - g.x_min()) / g.h();
        if s < 0.0 || s > (g.n_nodes() - 1) as f64 {
            return false;
        }
        let lo = s.floor() as usize;
        let hi = s.ceil() as usize;
        self.masks[lo][i] && self.masks[hi][i]
    }
}

/// Index of the first stopping node when the continuation set is a prefix
/// `[x_min, x_k)` (possibly empty), `None` otherwise.
fn interval_end(mask: impl Iterator<Item = bool>) -> Option<usize> {
    let mask: Vec<bool> = mask.collect();
    let end = mask.iter().position(|&c| !c)?;
    if mask[end..].iter().any(|&c| c) {
        None
    } else {
        Some(end)
    }
}

/// Classify nodes by `v − g > tol_region` and extract threshold levels.
pub fn classify_regions(sol: &SolutionField, tol_region: f64) -> StoppingRule {
    let masks = sol
        .values
        .iter()
        .zip(&sol.obstacle)
        .map(|(v, g)| v.iter().zip(g).map(|(a, b)| a - b > tol_region).collect())
        .collect();
    StoppingRule::from_masks(sol.grid, tol_region, masks)
}

/// `|V′₋ − V′₊|` at the threshold node of regime `i`, each side from a
/// second-order one-sided three-point difference.
pub fn smooth_fit_gap(sol: &SolutionField, rule: &StoppingRule, i: usize) -> Result<f64, FreeBoundaryError> {
    let k = rule.threshold_nodes[i].ok_or(FreeBoundaryError::NoThreshold(i))?;
    let n_nodes = sol.grid.n_nodes();
    if k < 2 || k + 2 >= n_nodes {
        return Err(FreeBoundaryError::EdgeThreshold(i));
    }
    let v = |n: usize| sol.values[n][i];
    let h = sol.grid.h();
    let left = (3.0 * v(k) - 4.0 * v(k - 1) + v(k - 2)) / (2.0 * h);
    let right = (-3.0 * v(k) + 4.0 * v(k + 1) - v(k + 2)) / (2.0 * h);
    Ok((left - right).abs())
}

/// Writes `regime,threshold,smooth_fit_gap` with `none` for missing entries.
pub fn write_threshold_csv<W: Write>(mut w: W, sol: &SolutionField, rule: &StoppingRule) -> io::Result<()> {
    writeln!(w, "regime,threshold,smooth_fit_gap")?;
    for i in 0..rule.m() {
        let threshold = rule.thresholds[i].map_or("none".to_string(), fmt17);
        let gap = smooth_fit_gap(sol, rule, i).map_or("none".to_string(), fmt17);
        writeln!(w, "{},{threshold},{gap}", i + 1)?;
    }
    Ok(())
}
