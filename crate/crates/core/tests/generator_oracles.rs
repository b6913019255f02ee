//! Stationary distributions and limit generators against brute-force oracles.

use nalgebra::DMatrix;
use proptest::prelude::*;
use robuststop::markov_chain::{
    assemble_generator, limit_generator, stationary_distribution, stationary_residual, Generator, TwoTimeScaleSpec,
};

/// `exp(A)` by scaling and squaring a truncated Taylor series.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let scaled = a / 2f64.powi(s);
    let n = a.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn generator_from(off: &[f64], m: usize) -> Generator {
    let mut rows = vec![vec![0.0; m]; m];
    let mut k = 0;
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            if i != j {
                *entry = off[k];
                k += 1;
            }
        }
        row[i] = -row.iter().sum::<f64>();
    }
    Generator::from_rows(&rows).unwrap()
}

/// `ν` as the first row of `exp(QT)` for large `T`.
fn stationary_by_expm(g: &Generator) -> Vec<f64> {
    let q = g.rates();
    let t = 1e4 / q.amax();
    let p = expm(&(q * t));
    p.row(0).iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_matches_long_run_transition_row(off in prop::collection::vec(0.05f64..5.0, 6)) {
        let g = generator_from(&off, 3);
        let nu = stationary_distribution(&g).unwrap();
        let oracle = stationary_by_expm(&g);
        for (a, b) in nu.weights().iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-8, "{:?} vs {:?}", nu.weights(), oracle);
        }
        prop_assert!(stationary_residual(&g, nu.weights()) <= 1e-10);
    }

    #[test]
    fn limit_generator_matches_triple_product(
        fast in prop::collection::vec(0.1f64..4.0, 2 + 6 + 2),
        slow in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..3.0], 7 * 6),
        eps in 0.01f64..1.0,
    ) {
        // blocks of sizes 2, 3, 2
        let sizes = [2usize, 3, 2];
        let blocks = vec![
            generator_from(&fast[0..2], 2),
            generator_from(&fast[2..8], 3),
            generator_from(&fast[8..10], 2),
        ];
        let slow = generator_from(&slow, 7);
        let tts = TwoTimeScaleSpec::new(blocks.clone(), slow.clone(), eps).unwrap();
        let got = limit_generator(&tts).unwrap();

        // diag(ν¹, ν², ν³) · Q̂ · diag(1, 1, 1) with ν from exp(QT)
        let mut left = DMatrix::<f64>::zeros(3, 7);
        let mut right = DMatrix::<f64>::zeros(7, 3);
        let mut off = 0;
        for (k, (b, &size)) in blocks.iter().zip(&sizes).enumerate() {
            let nu = stationary_by_expm(b);
            for r in 0..size {
                left[(k, off + r)] = nu[r];
                right[(off + r, k)] = 1.0;
            }
            off += size;
        }
        let oracle = left * slow.rates() * right;
        prop_assert!((got.rates() - &oracle).amax() <= 1e-10, "{} vs {}", got.rates(), oracle);

        let assembled = assemble_generator(&tts).unwrap();
        for i in 0..7 {
            prop_assert!(assembled.rates().row(i).sum().abs() <= 1e-12);
        }
        for i in 0..3 {
            prop_assert!(got.rates().row(i).sum().abs() <= 1e-10);
        }
    }
}

#[test]
fn expm_oracle_reproduces_two_state_transition() {
    // P_11(t) = ν₁ + ν₂ e^{−(λ₁+λ₂)t}
    let g = Generator::two_state(1.0, 3.0).unwrap();
    let p = expm(&(g.rates() * 0.4));
    let expected = 0.75 + 0.25 * (-4.0f64 * 0.4).exp();
    assert!((p[(0, 0)] - expected).abs() <= 1e-13);
}
