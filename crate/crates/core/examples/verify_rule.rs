//! Monte Carlo reward of the computed stopping rule and of shifted rules,
//! next to the PDE value at the starting point.

use std::time::Instant;

use robuststop::prelude::*;

fn main() {
    let theta: f64 = std::env::args().nth(1).map_or(0.01, |a| a.parse().unwrap());
    let spec = ProblemSpec::switching_gbm(
        Generator::two_state(1.0, 1.0).unwrap(),
        vec![2.125, 0.875],
        vec![1.0, 1.0],
        5.0,
        theta,
        1.0,
        (0.0, 6.0),
    )
    .unwrap();
    let grid = build_grid(0.0, 6.0, 0.01).unwrap();
    let sol = solve(&spec, &grid, &SolverOptions::default()).unwrap();
    let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
    let cfg = SimConfig::new(&spec, 1.0, 0, 2024);
    println!("pde v(1,1) = {:.6}", sol.interpolate(1.0, 0));
    println!("shift,estimate,std_error,frac_stopped,mean_stop_time,escapes,seconds");
    for shift in [0.0, -0.2, -0.1, 0.1, 0.2] {
        let start = Instant::now();
        let r = simulate_reward(&spec, &sol, &rule.shifted(shift), &cfg).unwrap();
        println!(
            "{shift},{:.6},{:.6},{:.4},{:.4},{},{:.2}",
            r.estimate,
            r.std_error,
            r.fraction_stopped_before_t,
            r.mean_stop_time,
            r.domain_escapes,
            start.elapsed().as_secs_f64()
        );
    }
}
