//! Solver against analytic solutions of the unambiguous (θ = 0) stock-selling problem.

use robuststop::prelude::*;

const R: f64 = 5.0;
const K: f64 = 1.0;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    assert!(f_lo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All sign changes of `f` on a uniform scan of `[lo, hi]`, refined by bisection.
fn roots(f: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let dx = (hi - lo) / steps as f64;
    (0..steps)
        .filter_map(|k| {
            let (a, b) = (lo + k as f64 * dx, lo + (k + 1) as f64 * dx);
            (f(a) * f(b) < 0.0).then(|| bisect(f, a, b))
        })
        .collect()
}

/// Perpetual call `(x* − K)(x/x*)^β` for one GBM regime.
struct PerpetualCall {
    beta: f64,
    x_star: f64,
}

impl PerpetualCall {
    fn new(b: f64, sigma: f64) -> Self {
        // ½σ²β² + (b − ½σ²)β − r = 0, positive root
        let (a2, a1) = (0.5 * sigma * sigma, b - 0.5 * sigma * sigma);
        let beta = (-a1 + (a1 * a1 + 4.0 * a2 * R).sqrt()) / (2.0 * a2);
        Self {
            beta,
            x_star: K * beta / (beta - 1.0),
        }
    }

    fn value(&self, x: f64) -> f64 {
        if x < self.x_star {
            (self.x_star - K) * (x / self.x_star).powf(self.beta)
        } else {
            x - K
        }
    }
}

fn one_regime(h: f64) -> SolutionField {
    let spec = ProblemSpec::new(
        Generator::zero(1).unwrap(),
        CoefficientModel::GbmLinear {
            b: vec![2.125],
            sigma: vec![1.0],
        },
        RewardModel {
            running: RunningReward::Zero,
            terminal: Obstacle::Call { strike: K },
        },
        R,
        0.0,
        1e3,
        (0.0, 6.0),
    )
    .unwrap();
    solve(&spec, &build_grid(0.0, 6.0, h).unwrap(), &SolverOptions::default()).unwrap()
}

fn sup_error(sol: &SolutionField, exact: &PerpetualCall) -> f64 {
    sol.grid
        .nodes()
        .enumerate()
        .map(|(n, x)| (sol.values[n][0] - exact.value(x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn perpetual_call_root_satisfies_its_quadratic() {
    let c = PerpetualCall::new(2.125, 1.0);
    assert!((0.5 * c.beta * (c.beta - 1.0) + 2.125 * c.beta - R).abs() < 1e-12);
    // smooth fit of the closed form itself
    let d = 1e-6;
    let slope = (c.value(c.x_star) - c.value(c.x_star - d)) / d;
    assert!((slope - 1.0).abs() < 1e-5);
}

#[test]
fn single_regime_matches_perpetual_call() {
    let exact = PerpetualCall::new(2.125, 1.0);
    let coarse = sup_error(&one_regime(0.02), &exact);
    let fine = sup_error(&one_regime(0.01), &exact);
    assert!(fine <= 5.0 * 0.01, "sup error {fine}");
    let ratio = fine / coarse;
    assert!((0.25..=0.75).contains(&ratio), "errors {coarse} -> {fine}, ratio {ratio}");
}

#[test]
fn single_regime_threshold_brackets_x_star() {
    let exact = PerpetualCall::new(2.125, 1.0);
    let sol = one_regime(0.01);
    let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
    let x = rule.thresholds[0].unwrap();
    assert!((x - exact.x_star).abs() <= 2.0 * 0.01, "{x} vs {}", exact.x_star);
}

/// Two GBM regimes with symmetric switching rate `lambda` and θ = 0.
///
/// Below `x₂` both regimes continue and the value is a combination of
/// `x^γ (1, k_γ)` over the two positive roots of `p₁(γ)p₂(γ) = λ²`. Between
/// `x₂` and `x₁` regime 2 has stopped and regime 1 solves a linear ODE with
/// source `λ(x − K)`. The constants follow from value matching and smooth
/// fit at `x₂` (both regimes) and `x₁` (regime 1).
struct TwoRegimeOracle {
    x1: f64,
    x2: f64,
    /// `(γ, c_γ, k_γ)` for the two positive roots.
    lower: [(f64, f64, f64); 2],
    /// `(δ, e_δ)` for the middle region.
    middle: [(f64, f64); 2],
    affine: (f64, f64),
}

impl TwoRegimeOracle {
    fn new(b: [f64; 2], lambda: f64) -> Self {
        let p = |i: usize, g: f64| R + lambda - b[i] * g - 0.5 * g * (g - 1.0);
        let char_fn = |g: f64| p(0, g) * p(1, g) - lambda * lambda;
        let gammas = roots(char_fn, 1e-6, 30.0, 30_000);
        assert_eq!(gammas.len(), 2, "positive roots {gammas:?}");
        let ks = [p(0, gammas[0]) / lambda, p(0, gammas[1]) / lambda];

        // middle region: (r+λ)v − b₁x v′ − ½x²v″ = λ(x − K)
        let a = lambda / (R + lambda - b[0]);
        let c0 = -lambda * K / (R + lambda);
        let (q2, q1) = (0.5, b[0] - 0.5);
        let disc = (q1 * q1 + 4.0 * q2 * (R + lambda)).sqrt();
        let deltas = [(-q1 + disc) / (2.0 * q2), (-q1 - disc) / (2.0 * q2)];

        let build = |x2: f64| -> ([(f64, f64, f64); 2], [(f64, f64); 2]) {
            // regime 2: Σ c k x2^γ = x2 − K and Σ c k γ x2^{γ−1} = 1
            let m = |j: usize| ks[j] * x2.powf(gammas[j]);
            let md = |j: usize| ks[j] * gammas[j] * x2.powf(gammas[j] - 1.0);
            let det = m(0) * md(1) - m(1) * md(0);
            let c = [
                ((x2 - K) * md(1) - m(1)) / det,
                (m(0) - (x2 - K) * md(0)) / det,
            ];
            let lower = [(gammas[0], c[0], ks[0]), (gammas[1], c[1], ks[1])];
            // regime 1 continues through x2 with matching value and slope
            let v1: f64 = (0..2).map(|j| c[j] * x2.powf(gammas[j])).sum();
            let dv1: f64 = (0..2).map(|j| c[j] * gammas[j] * x2.powf(gammas[j] - 1.0)).sum();
            let (rhs, drhs) = (v1 - a * x2 - c0, dv1 - a);
            let n = |j: usize| x2.powf(deltas[j]);
            let nd = |j: usize| deltas[j] * x2.powf(deltas[j] - 1.0);
            let det = n(0) * nd(1) - n(1) * nd(0);
            let e = [(rhs * nd(1) - n(1) * drhs) / det, (n(0) * drhs - rhs * nd(0)) / det];
            (lower, [(deltas[0], e[0]), (deltas[1], e[1])])
        };
        let middle_v = |mid: &[(f64, f64); 2], x: f64| a * x + c0 + mid.iter().map(|(d, e)| e * x.powf(*d)).sum::<f64>();
        let middle_dv = |mid: &[(f64, f64); 2], x: f64| a + mid.iter().map(|(d, e)| e * d * x.powf(d - 1.0)).sum::<f64>();

        // For a trial x2, x1 is where regime 1's slope first reaches 1; the
        // mismatch there in value must vanish.
        let x1_for = |x2: f64| -> Option<f64> {
            let (_, mid) = build(x2);
            let f = |x: f64| middle_dv(&mid, x) - 1.0;
            roots(f, x2 + 1e-9, 6.0, 6000).first().copied()
        };
        let mismatch = |x2: f64| -> f64 {
            let (_, mid) = build(x2);
            match x1_for(x2) {
                Some(x1) => middle_v(&mid, x1) - (x1 - K),
                None => f64::NAN,
            }
        };
        let scan: Vec<f64> = (0..=60).map(|k| 1.2 + 0.01 * k as f64).collect();
        let bracket = scan
            .windows(2)
            .find(|w| {
                let (a, b) = (mismatch(w[0]), mismatch(w[1]));
                a.is_finite() && b.is_finite() && a * b <= 0.0
            })
            .expect("bracket for x2");
        let x2 = bisect(mismatch, bracket[0], bracket[1]);
        let x1 = x1_for(x2).unwrap();
        let (lower, middle) = build(x2);
        Self {
            x1,
            x2,
            lower,
            middle,
            affine: (a, c0),
        }
    }

    fn value(&self, x: f64, i: usize) -> f64 {
        if x < self.x2 {
            self.lower
                .iter()
                .map(|(g, c, k)| c * x.powf(*g) * if i == 0 { 1.0 } else { *k })
                .sum()
        } else if i == 0 && x < self.x1 {
            self.affine.0 * x + self.affine.1 + self.middle.iter().map(|(d, e)| e * x.powf(*d)).sum::<f64>()
        } else {
            x - K
        }
    }
}

fn two_regime(theta: f64, h: f64) -> SolutionField {
    let spec = ProblemSpec::switching_gbm(
        Generator::two_state(1.0, 1.0).unwrap(),
        vec![2.125, 0.875],
        vec![1.0, 1.0],
        R,
        theta,
        K,
        (0.0, 6.0),
    )
    .unwrap();
    solve(&spec, &build_grid(0.0, 6.0, h).unwrap(), &SolverOptions::default()).unwrap()
}

#[test]
fn two_regime_oracle_is_self_consistent() {
    let o = TwoRegimeOracle::new([2.125, 0.875], 1.0);
    assert!(o.x1 > o.x2);
    // value matching at both boundaries
    for (x, i) in [(o.x2, 1usize), (o.x1, 0)] {
        assert!((o.value(x - 1e-12, i) - (x - K)).abs() < 1e-8, "regime {i} at {x}");
    }
    // regime 1 is continuous through x2
    let d = 1e-7;
    assert!((o.value(o.x2 - d, 0) - o.value(o.x2 + d, 0)).abs() < 1e-6);
}

#[test]
fn two_regime_solver_matches_semi_analytic_solution() {
    let o = TwoRegimeOracle::new([2.125, 0.875], 1.0);
    let h = 0.01;
    let sol = two_regime(0.0, h);
    let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
    assert!((rule.thresholds[0].unwrap() - o.x1).abs() <= 2.0 * h, "{:?} vs {}", rule.thresholds, o.x1);
    assert!((rule.thresholds[1].unwrap() - o.x2).abs() <= 2.0 * h, "{:?} vs {}", rule.thresholds, o.x2);
    let err = sol
        .grid
        .nodes()
        .enumerate()
        .flat_map(|(n, x)| (0..2).map(move |i| (n, x, i)))
        .map(|(n, x, i)| (sol.values[n][i] - o.value(x, i)).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-3, "sup error {err}");
}

#[test]
fn small_ambiguity_stays_close_to_unambiguous_solution() {
    let o = TwoRegimeOracle::new([2.125, 0.875], 1.0);
    let sol = two_regime(0.01, 0.01);
    let n1 = sol.grid.nearest(1.0);
    // q* = −θσv′ is O(θ) and so is the change in value
    for i in 0..2 {
        let gap = o.value(1.0, i) - sol.values[n1][i];
        assert!(gap > 0.0 && gap < 0.01 * 0.5, "regime {i}: gap {gap}");
    }
}
