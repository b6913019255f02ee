//! Threshold levels of the two-regime stock-selling problem for several
//! ambiguity factors.

use std::time::Instant;

use robuststop::prelude::*;

fn main() {
    let grid = build_grid(0.0, 6.0, 0.01).unwrap();
    let base = ProblemSpec::switching_gbm(
        Generator::two_state(1.0, 1.0).unwrap(),
        vec![2.125, 0.875],
        vec![1.0, 1.0],
        5.0,
        0.01,
        1.0,
        (0.0, 6.0),
    )
    .unwrap();
    println!("theta,x_1,x_2,v(1;1),v(1;2),outer,residual,seconds");
    for theta in [0.01, 0.1, 1.0] {
        let start = Instant::now();
        let sol = solve(&base.with_theta(theta), &grid, &SolverOptions::default()).unwrap();
        let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
        let n1 = grid.nearest(1.0);
        println!(
            "{theta},{:.2},{:.2},{:.6},{:.6},{},{:.2e},{:.2}",
            rule.thresholds[0].unwrap_or(f64::NAN),
            rule.thresholds[1].unwrap_or(f64::NAN),
            sol.values[n1][0],
            sol.values[n1][1],
            sol.iterations,
            sol.max_complementarity_residual,
            start.elapsed().as_secs_f64()
        );
    }
}
