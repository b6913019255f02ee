//! Two-time-scale problems against their aggregated limit.

use nalgebra::DMatrix;
use proptest::prelude::*;
use robuststop::exec::Execution;
use robuststop::prelude::*;
use robuststop::two_time_scale::{epsilon_study, within_block_spread, EpsilonStudy};

fn four_state_study() -> (EpsilonStudy, TwoTimeScaleSpec) {
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
        (0.0, 6.0),
    )
    .unwrap();
    let grid = build_grid(0.0, 6.0, 0.01).unwrap();
    let study = epsilon_study(
        &template,
        &tts,
        &[1.0, 0.1, 0.01],
        &grid,
        &SolverOptions::default(),
        Execution::Parallel,
    )
    .unwrap();
    (study, tts)
}

#[test]
fn norms_and_within_block_spread_shrink_with_epsilon() {
    let (study, tts) = four_state_study();
    for k in 0..2 {
        let n: Vec<f64> = study.norms.iter().map(|e| e.per_block[k]).collect();
        assert!(n[0] > n[1] && n[1] > n[2], "block {k}: {n:?}");
        assert!(n[2] < 0.1 * n[0], "block {k}: {n:?}");
        let spread: Vec<f64> = study.solutions.iter().map(|s| within_block_spread(s, &tts)[k]).collect();
        assert!(spread[0] > spread[1] && spread[1] > spread[2], "block {k}: {spread:?}");
    }
}

#[test]
fn limit_of_four_state_setup_is_the_basic_two_state_problem() {
    let (study, _) = four_state_study();
    let basic = ProblemSpec::switching_gbm(
        Generator::two_state(1.0, 1.0).unwrap(),
        vec![2.125, 0.875],
        vec![1.0, 1.0],
        5.0,
        0.01,
        1.0,
        (0.0, 6.0),
    )
    .unwrap();
    let limit = &study.limit.spec;
    assert!((limit.chain.rates() - basic.chain.rates()).amax() <= 1e-12);
    let (CoefficientModel::GbmLinear { b, sigma }, CoefficientModel::GbmLinear { b: b0, sigma: s0 }) =
        (&limit.coeffs, &basic.coeffs)
    else {
        panic!("kinds differ")
    };
    for i in 0..2 {
        assert!((b[i] - b0[i]).abs() <= 1e-12 && (sigma[i] - s0[i]).abs() <= 1e-12);
    }
    assert_eq!(limit.rewards, basic.rewards);
    assert_eq!((limit.r, limit.theta, limit.domain), (basic.r, basic.theta, basic.domain));
}

#[test]
fn parallel_and_sequential_studies_agree_bitwise() {
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
        (0.0, 6.0),
    )
    .unwrap();
    let grid = build_grid(0.0, 6.0, 0.05).unwrap();
    let run = |exec| {
        epsilon_study(&template, &tts, &[0.01, 1.0, 0.1], &grid, &SolverOptions::default(), exec).unwrap()
    };
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    assert_eq!(a.norms, b.norms);
    assert_eq!(a.solutions, b.solutions);
    // rows follow the requested order
    assert!(a.norms[0].per_block[0] < a.norms[1].per_block[0]);
}

fn stationary_by_power(q: &DMatrix<f64>) -> Vec<f64> {
    // uniformized chain P = I + Q/Λ, iterated to its fixed point
    let lambda = (0..q.nrows()).map(|i| -q[(i, i)]).fold(0.0, f64::max) * 1.5;
    let p = DMatrix::identity(q.nrows(), q.nrows()) + q / lambda;
    let mut nu = DMatrix::from_element(1, q.nrows(), 1.0 / q.nrows() as f64);
    for _ in 0..200_000 {
        nu = &nu * &p;
    }
    nu.iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn three_block_limit_problem_uses_aggregated_chain_and_averages(
        fast in prop::collection::vec(0.2f64..3.0, 2 + 2 + 6),
        slow in prop::collection::vec(0.0f64..2.0, 7 * 6),
        b in prop::collection::vec(-0.5f64..2.0, 7),
        sigma in prop::collection::vec(0.1f64..1.5, 7),
    ) {
        let gen = |off: &[f64], m: usize| {
            let mut rows = vec![vec![0.0; m]; m];
            let mut k = 0;
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, e) in row.iter_mut().enumerate() {
                    if i != j {
                        *e = off[k];
                        k += 1;
                    }
                }
                row[i] = -row.iter().sum::<f64>();
            }
            Generator::from_rows(&rows).unwrap()
        };
        let blocks = vec![gen(&fast[0..2], 2), gen(&fast[2..4], 2), gen(&fast[4..10], 3)];
        let tts = TwoTimeScaleSpec::new(blocks.clone(), gen(&slow, 7), 0.05).unwrap();
        let spec = ProblemSpec::switching_gbm(
            assemble_generator(&tts).unwrap(), b.clone(), sigma.clone(), 4.0, 0.3, 1.0, (0.0, 5.0),
        ).unwrap();
        let limit = build_limit_problem(&spec, &tts).unwrap();

        let sizes = [2usize, 2, 3];
        let mut left = DMatrix::<f64>::zeros(3, 7);
        let mut right = DMatrix::<f64>::zeros(7, 3);
        let mut off = 0;
        let CoefficientModel::GbmLinear { b: b_bar, sigma: s_bar } = &limit.spec.coeffs else { panic!() };
        for (k, (blk, &size)) in blocks.iter().zip(&sizes).enumerate() {
            let nu = stationary_by_power(blk.rates());
            let mut b_avg = 0.0;
            let mut s2_avg = 0.0;
            for r in 0..size {
                left[(k, off + r)] = nu[r];
                right[(off + r, k)] = 1.0;
                b_avg += nu[r] * b[off + r];
                s2_avg += nu[r] * sigma[off + r] * sigma[off + r];
            }
            prop_assert!((b_bar[k] - b_avg).abs() <= 1e-10);
            prop_assert!((s_bar[k] * s_bar[k] - s2_avg).abs() <= 1e-10);
            off += size;
        }
        let oracle = left * tts.slow().rates() * right;
        prop_assert!((limit.spec.chain.rates() - oracle).amax() <= 1e-10);
        prop_assert_eq!(limit.block_map, vec![0, 0, 1, 1, 2, 2, 2]);
    }
}
