//! Reading solution CSVs (`x,v_1..v_m,g_1..g_m,q_1..q_m`) back into a
//! [`SolutionField`] on the config's grid.

use std::path::Path;

use robuststop::prelude::*;

use crate::CliError;

/// Parse a solution file and check it against `grid` and `m` regimes.
///
/// The solver metadata (iterations, residual, warnings) is not stored in the
/// file: `iterations` is 0 and the residual NaN until recomputed.
pub fn read_solution(path: &Path, grid: &Grid, m: usize) -> Result<SolutionField, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_solution(file, grid, m).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_solution<R: std::io::Read>(reader: R, grid: &Grid, m: usize) -> Result<SolutionField, CliError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Input(e.to_string()))?.clone();
    let mut expected = vec!["x".to_string()];
    for prefix in ["v", "g", "q"] {
        expected.extend((1..=m).map(|i| format!("{prefix}_{i}")));
    }
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::GridMismatch(format!(
            "header `{}` does not match `{}` for {m} regimes",
            headers.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        )));
    }

    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut obstacle = Vec::with_capacity(grid.n_nodes());
    let mut q_field = Vec::with_capacity(grid.n_nodes());
    for (n, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(e.to_string()))?;
        let row: Vec<f64> = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Input(format!("row {}: {e}", n + 1)))?;
        if n >= grid.n_nodes() {
            return Err(CliError::GridMismatch(format!(
                "more than {} rows",
                grid.n_nodes()
            )));
        }
        let x = grid.x(n);
        if (row[0] - x).abs() > 1e-9 * grid.h().max(x.abs()) {
            return Err(CliError::GridMismatch(format!("row {} has x = {}, expected {x}", n + 1, row[0])));
        }
        values.push(row[1..=m].to_vec());
        obstacle.push(row[m + 1..=2 * m].to_vec());
        q_field.push(row[2 * m + 1..].to_vec());
    }
    if values.len() != grid.n_nodes() {
        return Err(CliError::GridMismatch(format!(
            "{} rows, expected {}",
            values.len(),
            grid.n_nodes()
        )));
    }
    Ok(SolutionField {
        grid: *grid,
        values,
        obstacle,
        q_field,
        iterations: 0,
        max_complementarity_residual: f64::NAN,
        warnings: Vec::new(),
    })
}
