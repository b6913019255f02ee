//! Error norms between the four-state two-time-scale problem and its
//! two-state limit for a few values of ε. Optional argument: x_max (default 6).

use robuststop::exec::Execution;
use robuststop::prelude::*;
use robuststop::two_time_scale::{epsilon_study, within_block_spread};

fn main() {
    let x_max: f64 = std::env::args().nth(1).map_or(6.0, |a| a.parse().unwrap());
    let fast = Generator::two_state(2.0, 2.0).unwrap();
    let slow = Generator::from_rows(&[
        vec![-1.0, 0.0, 1.0, 0.0],
        vec![0.0, -1.0, 0.0, 1.0],
        vec![1.0, 0.0, -1.0, 0.0],
        vec![0.0, 1.0, 0.0, -1.0],
    ])
    .unwrap();
    let tts = TwoTimeScaleSpec::new(vec![fast.clone(), fast], slow, 1.0).unwrap();
    let template = ProblemSpec::switching_gbm(
        assemble_generator(&tts).unwrap(),
        vec![2.5, 1.75, 1.25, 0.5],
        vec![1.0; 4],
        5.0,
        0.01,
        1.0,
        (0.0, x_max),
    )
    .unwrap();
    let grid = build_grid(0.0, x_max, 0.01).unwrap();
    let eps = [1.0, 0.1, 0.01];
    let study = epsilon_study(&template, &tts, &eps, &grid, &SolverOptions::default(), Execution::Parallel).unwrap();
    println!("epsilon,N_1,N_2,spread_1,spread_2");
    for ((e, norms), sol) in eps.iter().zip(&study.norms).zip(&study.solutions) {
        let spread = within_block_spread(sol, &tts);
        println!(
            "{e},{:.4},{:.4},{:.2e},{:.2e}",
            norms.per_block[0], norms.per_block[1], spread[0], spread[1]
        );
    }
}
