use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs x_min < x_max, got [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("grid step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("span {span} is not an integer multiple of h = {h}")]
    NonCommensurate { span: f64, h: f64 },
}

/// Uniform grid `x_min + n·h`, `n = 0..n_nodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    h: f64,
    n_nodes: usize,
}

impl Grid {
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn x(&self, n: usize) -> f64 {
        self.x_min + n as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |n| self.x(n))
    }

    /// Grid with step `h/2` on the same interval.
    pub fn refined(&self) -> Grid {
        Grid {
            h: self.h / 2.0,
            n_nodes: 2 * self.n_nodes - 1,
            ..*self
        }
    }

    /// Index of the node closest to `x`, clamped into the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.h).round();
        (s.max(0.0) as usize).min(self.n_nodes - 1)
    }

    /// Same node set, up to `tol` in every coordinate.
    pub fn matches(&self, other: &Grid, tol: f64) -> bool {
        self.n_nodes == other.n_nodes
            && (self.x_min - other.x_min).abs() <= tol
            && (self.h - other.h).abs() * self.n_nodes as f64 <= tol
    }
}

/// Uniform grid on `[x_min, x_max]`; the span must be a multiple of `h` within 1e−9.
pub fn build_grid(x_min: f64, x_max: f64, h: f64) -> Result<Grid, GridError> {
    if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
        return Err(GridError::EmptyInterval(x_min, x_max));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(GridError::NonPositiveStep(h));
    }
    let span = x_max - x_min;
    let cells = span / h;
    let rounded = cells.round();
    if (cells - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(GridError::NonCommensurate { span, h });
    }
    Ok(Grid {
        x_min,
        x_max,
        h,
        n_nodes: rounded as usize + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_grid_has_601_nodes() {
        assert_eq!(build_grid(0.0, 6.0, 0.01).unwrap().n_nodes(), 601);
    }

    #[test]
    fn three_node_grid() {
        let g = build_grid(0.0, 1.0, 0.5).unwrap();
        assert_eq!(g.nodes().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn non_commensurate_step() {
        assert!(matches!(
            build_grid(0.0, 1.0, 0.3),
            Err(GridError::NonCommensurate { .. })
        ));
    }

    #[test]
    fn refinement_doubles_cells() {
        let g = build_grid(0.0, 6.0, 0.01).unwrap().refined();
        assert_eq!(g.n_nodes(), 1201);
        assert_eq!(g.h(), 0.005);
        assert_eq!(g.nearest(1.0), 200);
    }
}
