//! The five subcommands. Each returns `Ok(())` or a [`CliError`] carrying
//! its exit code; human-readable summaries go to stdout.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use robuststop::free_boundary::write_threshold_csv;
use robuststop::hjb_solver::{fmt17, scheme_residual};
use robuststop::prelude::*;
use robuststop::verification::write_report_csv;

use crate::config::RunConfig;
use crate::solution_csv::read_solution;
use crate::CliError;

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// `sol.csv` → `sol_thresholds.csv`, next to the solution file.
pub fn thresholds_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "solution".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_thresholds.csv"))
}

fn write_solution(out: &Path, sol: &SolutionField) -> Result<StoppingRule, CliError> {
    let rule = classify_regions(sol, DEFAULT_TOL_REGION);
    write_file(out, |w| sol.write_csv(w))?;
    write_file(&thresholds_path(out), |w| write_threshold_csv(w, sol, &rule))?;
    Ok(rule)
}

fn describe_thresholds(rule: &StoppingRule) -> String {
    rule.thresholds
        .iter()
        .map(|t| t.map_or("none".to_string(), |x| format!("{x}")))
        .collect::<Vec<_>>()
        .join(", ")
}

fn report_warnings(sol: &SolutionField) {
    for w in &sol.warnings {
        eprintln!("warning: {w:?}");
    }
}

pub fn solve_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sol = solve(&cfg.problem, &cfg.grid, &cfg.solver)?;
    report_warnings(&sol);
    let rule = write_solution(out, &sol)?;
    println!(
        "converged in {} outer iterations, residual {:.3e}; thresholds: {}",
        sol.iterations,
        sol.max_complementarity_residual,
        describe_thresholds(&rule)
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Theta,
    Epsilon,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Theta => "theta",
            SweepParam::Epsilon => "epsilon",
        }
    }
}

/// One solve per value, run concurrently. Writes `<param>_<k>.csv` and
/// `<param>_<k>_thresholds.csv` for the k-th value (0-based, in the order
/// given) and `summary.csv` with `value,threshold_1,…,threshold_m`.
pub fn sweep_cmd(cfg: &RunConfig, param: SweepParam, values: &[f64], out_dir: &Path) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Input("--values must list at least one number".into()));
    }
    let specs = values
        .iter()
        .map(|&v| match param {
            SweepParam::Theta if v >= 0.0 && v.is_finite() => Ok(cfg.problem.with_theta(v)),
            SweepParam::Theta => Err(CliError::Input(format!("θ must be non-negative, got {v}"))),
            SweepParam::Epsilon => cfg.problem_at_epsilon(v),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sols = Execution::Parallel.try_map(specs.len(), |k| solve(&specs[k], &cfg.grid, &cfg.solver))?;

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut rows = Vec::with_capacity(sols.len());
    for (k, sol) in sols.iter().enumerate() {
        report_warnings(sol);
        let rule = write_solution(&out_dir.join(format!("{}_{k}.csv", param.name())), sol)?;
        rows.push(rule.thresholds);
    }
    let m = cfg.problem.m();
    write_file(&out_dir.join("summary.csv"), |w| {
        let header: Vec<String> = (1..=m).map(|i| format!("threshold_{i}")).collect();
        writeln!(w, "value,{}", header.join(","))?;
        for (v, thresholds) in values.iter().zip(&rows) {
            let cells: Vec<String> = thresholds.iter().map(|t| t.map_or("none".into(), fmt17)).collect();
            writeln!(w, "{},{}", fmt17(*v), cells.join(","))?;
        }
        Ok(())
    })?;
    println!("{} solves written to {}", sols.len(), out_dir.display());
    Ok(())
}

/// Error norms `epsilon,N_1,…,N_L` of the original problems against the limit problem.
pub fn aggregate_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let tts = cfg
        .two_time_scale
        .as_ref()
        .ok_or_else(|| CliError::config("two_time_scale", "section required for aggregate"))?;
    let study = epsilon_study(&cfg.problem, &tts.spec, &tts.epsilons, &cfg.grid, &cfg.solver, Execution::Parallel)?;
    let blocks = tts.spec.n_blocks();
    write_file(out, |w| {
        let header: Vec<String> = (1..=blocks).map(|k| format!("N_{k}")).collect();
        writeln!(w, "epsilon,{}", header.join(","))?;
        for (eps, norms) in study.epsilons.iter().zip(&study.norms) {
            let cells: Vec<String> = norms.per_block.iter().map(|&n| fmt17(n)).collect();
            writeln!(w, "{},{}", fmt17(*eps), cells.join(","))?;
        }
        Ok(())
    })?;
    for (eps, norms) in study.epsilons.iter().zip(&study.norms) {
        let cells: Vec<String> = norms.per_block.iter().map(|n| format!("{n:.4}")).collect();
        println!("ε = {eps}: {}", cells.join(", "));
    }
    Ok(())
}

/// Read a stored solution and make sure it belongs to this config's problem.
fn load_solution(cfg: &RunConfig, path: &Path) -> Result<SolutionField, CliError> {
    let sol = read_solution(path, &cfg.grid, cfg.problem.m())?;
    for (n, row) in sol.obstacle.iter().enumerate() {
        let x = cfg.grid.x(n);
        for (i, &g) in row.iter().enumerate() {
            let expected = cfg.problem.rewards.terminal.eval(x, i);
            if (g - expected).abs() > 1e-12 * expected.abs().max(1.0) {
                return Err(CliError::Input(format!(
                    "{}: obstacle column g_{} at x = {x} is {g}, the config gives {expected}",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    Ok(sol)
}

pub fn simulate_cmd(cfg: &RunConfig, solution: &Path, out: &Path) -> Result<(), CliError> {
    let sim = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::config("simulation", "section required for simulate"))?;
    let sol = load_solution(cfg, solution)?;
    let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
    let report = simulate_reward(&cfg.problem, &sol, &rule, sim).map_err(|e| CliError::Input(e.to_string()))?;
    write_file(out, |w| write_report_csv(w, sim, &report))?;
    println!(
        "J(x0 = {}, i0 = {}) ≈ {:.6} ± {:.6} over {} paths; v = {:.6}",
        sim.x0,
        sim.i0 + 1,
        report.estimate,
        report.std_error,
        report.n_paths,
        sol.interpolate(sim.x0, sim.i0)
    );
    if report.domain_escapes > 0 {
        eprintln!("warning: {} paths left the grid and were stopped on its edge", report.domain_escapes);
    }
    Ok(())
}

/// Succeeds iff `v ≥ g` everywhere and the discrete complementarity
/// residual at the stored controls is at most `10·tol_outer`.
pub fn check_cmd(cfg: &RunConfig, solution: &Path) -> Result<(), CliError> {
    let sol = load_solution(cfg, solution)?;
    let below: Vec<String> = sol
        .values
        .iter()
        .zip(&sol.obstacle)
        .enumerate()
        .flat_map(|(n, (v, g))| {
            v.iter()
                .zip(g)
                .enumerate()
                .filter(|(_, (v, g))| **v < **g - 1e-9)
                .map(move |(i, (v, g))| format!("node {n} (x = {}), regime {}: v = {v} < g = {g}", cfg.grid.x(n), i + 1))
        })
        .collect();
    if !below.is_empty() {
        for line in below.iter().take(10) {
            println!("{line}");
        }
        return Err(CliError::CheckFailed(format!("{} nodes have v below the obstacle", below.len())));
    }

    let residual = scheme_residual(&cfg.problem, &sol)?;
    let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
    println!("max complementarity residual: {residual:.3e}");
    let stdout = io::stdout();
    write_threshold_csv(stdout.lock(), &sol, &rule).map_err(|e| CliError::io("<stdout>", e))?;
    let limit = 10.0 * cfg.solver.tol_outer;
    if residual <= limit {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("residual {residual:e} exceeds 10·tol_outer = {limit:e}")))
    }
}
