//! Generator-matrix algebra for continuous-time Markov chains.
//!
//! A [`Generator`] is an `m × m` rate matrix `Q = (λ_ij)` with non-negative
//! off-diagonal rates and zero row sums. On top of it this module provides
//! stationary distributions, the two-time-scale assembly
//! `Qᵋ = Q̃/ε + Q̂`, and the aggregated generator of the limit chain
//! `Q̄ = diag{ν¹,…,νᴸ} Q̂ diag{1_{m₁},…,1_{m_L}}`.

use nalgebra::DMatrix;
use thiserror::Error;

/// Absolute tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on stationary-distribution residuals `‖νQ‖∞`.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("generator must have at least one state")]
    Empty,
    #[error("generator must be square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("non-finite rate at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative off-diagonal rate {value} at ({row}, {col})")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum:e}, expected 0")]
    RowSumNonzero { row: usize, sum: f64 },
    #[error("chain is reducible: states do not form a single communicating class")]
    ReducibleChain,
    #[error("stationary distribution residual {residual:e} exceeds tolerance")]
    IllConditioned { residual: f64 },
    #[error("two-time-scale spec: {0}")]
    InvalidTwoTimeScale(String),
}

/// Validated rate matrix of a continuous-time Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    rates: DMatrix<f64>,
}

impl Generator {
    /// Number of states.
    pub fn m(&self) -> usize {
        self.rates.nrows()
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Total exit rate `−λ_ii` of state `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rates[(i, i)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.m())
            .map(|i| self.rates.row(i).iter().copied().collect())
            .collect()
    }

    /// The zero generator on `m` states (no transitions).
    pub fn zero(m: usize) -> Result<Self, GeneratorError> {
        validate_generator(DMatrix::zeros(m, m))
    }

    /// Two-state chain `[[−λ₁, λ₁], [λ₂, −λ₂]]`.
    pub fn two_state(lambda1: f64, lambda2: f64) -> Result<Self, GeneratorError> {
        validate_generator(DMatrix::from_row_slice(
            2,
            2,
            &[-lambda1, lambda1, lambda2, -lambda2],
        ))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GeneratorError> {
        let m = rows.len();
        if m == 0 {
            return Err(GeneratorError::Empty);
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(GeneratorError::NotSquare {
                    row,
                    len: r.len(),
                    expected: m,
                });
            }
        }
        validate_generator(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    /// Structural irreducibility: the digraph of positive off-diagonal rates
    /// is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let m = self.m();
        if m <= 1 {
            return true;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; m];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for w in 0..m {
                    let rate = if forward { self.rates[(u, w)] } else { self.rates[(w, u)] };
                    if w != u && rate > 0.0 && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Coupling term `Σ_{j≠i} λ_ij (v_j − v_i)` of the chain's infinitesimal operator.
    pub fn apply_row(&self, i: usize, v: &[f64]) -> f64 {
        let vi = v[i];
        (0..self.m())
            .filter(|&j| j != i)
            .map(|j| self.rates[(i, j)] * (v[j] - vi))
            .sum()
    }
}

/// Build a [`Generator`] from a square matrix, checking the sign and row-sum invariants.
pub fn validate_generator(rates: DMatrix<f64>) -> Result<Generator, GeneratorError> {
    let m = rates.nrows();
    if m == 0 {
        return Err(GeneratorError::Empty);
    }
    if rates.ncols() != m {
        return Err(GeneratorError::NotSquare {
            row: 0,
            len: rates.ncols(),
            expected: m,
        });
    }
    for i in 0..m {
        for j in 0..m {
            let value = rates[(i, j)];
            if !value.is_finite() {
                return Err(GeneratorError::NonFinite { row: i, col: j });
            }
            if i != j && value < 0.0 {
                return Err(GeneratorError::NegativeOffDiagonal { row: i, col: j, value });
            }
        }
        let sum: f64 = rates.row(i).iter().sum();
        if sum.abs() > ROW_SUM_TOL {
            return Err(GeneratorError::RowSumNonzero { row: i, sum });
        }
    }
    Ok(Generator { rates })
}

/// Sets each diagonal entry to minus the sum of its row's off-diagonal rates.
fn close_rows(rates: &mut DMatrix<f64>) {
    for i in 0..rates.nrows() {
        let off: f64 = (0..rates.ncols())
            .filter(|&j| j != i)
            .map(|j| rates[(i, j)])
            .sum();
        rates[(i, i)] = -off;
    }
}

/// Probability vector (non-negative, sums to one).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Stationary distribution `ν` with `νQ = 0`, `Σν = 1`.
///
/// Solves `Qᵀν = 0` with the last equation replaced by the normalisation
/// `1ᵀν = 1`, using LU with partial pivoting.
pub fn stationary_distribution(g: &Generator) -> Result<ProbVector, GeneratorError> {
    let m = g.m();
    if m == 1 {
        return Ok(ProbVector(vec![1.0]));
    }
    if !g.is_irreducible() {
        return Err(GeneratorError::ReducibleChain);
    }
    let mut a = g.rates.transpose();
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(m);
    rhs[m - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or(GeneratorError::IllConditioned { residual: f64::INFINITY })?;

    // Irreducible chains have a strictly positive ν; clip round-off only.
    let mut nu: Vec<f64> = sol.iter().map(|&p| p.max(0.0)).collect();
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|p| *p /= total);

    let residual = stationary_residual(g, &nu);
    let scale = g.rates.amax().max(1.0);
    if residual > RESIDUAL_TOL * scale {
        return Err(GeneratorError::IllConditioned { residual });
    }
    Ok(ProbVector(nu))
}

/// `‖νQ‖∞`.
pub fn stationary_residual(g: &Generator, nu: &[f64]) -> f64 {
    let m = g.m();
    (0..m)
        .map(|j| (0..m).map(|i| nu[i] * g.rates[(i, j)]).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Two-time-scale chain `Qᵋ = Q̃/ε + Q̂` with block-diagonal fast part
/// `Q̃ = diag{Q̃¹,…,Q̃ᴸ}`.
///
/// Block order defines the state labels: block `k` owns the contiguous
/// states `offset(k) .. offset(k) + m_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeScaleSpec {
    fast_blocks: Vec<Generator>,
    slow: Generator,
    epsilon: f64,
}

impl TwoTimeScaleSpec {
    pub fn new(
        fast_blocks: Vec<Generator>,
        slow: Generator,
        epsilon: f64,
    ) -> Result<Self, GeneratorError> {
        if fast_blocks.is_empty() {
            return Err(GeneratorError::InvalidTwoTimeScale("no fast blocks".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(GeneratorError::InvalidTwoTimeScale(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if let Some(k) = fast_blocks.iter().position(|b| !b.is_irreducible()) {
            return Err(GeneratorError::InvalidTwoTimeScale(format!(
                "fast block {k} is reducible"
            )));
        }
        let total: usize = fast_blocks.iter().map(Generator::m).sum();
        if total != slow.m() {
            return Err(GeneratorError::InvalidTwoTimeScale(format!(
                "fast blocks cover {total} states but slow generator has {}",
                slow.m()
            )));
        }
        Ok(Self {
            fast_blocks,
            slow,
            epsilon,
        })
    }

    pub fn fast_blocks(&self) -> &[Generator] {
        &self.fast_blocks
    }

    pub fn slow(&self) -> &Generator {
        &self.slow
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same blocks with a different scale parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, GeneratorError> {
        Self::new(self.fast_blocks.clone(), self.slow.clone(), epsilon)
    }

    /// Number of blocks `L`.
    pub fn n_blocks(&self) -> usize {
        self.fast_blocks.len()
    }

    /// Total number of states `m = m₁ + ⋯ + m_L`.
    pub fn n_states(&self) -> usize {
        self.slow.m()
    }

    /// First state index of block `k`.
    pub fn offset(&self, k: usize) -> usize {
        self.fast_blocks[..k].iter().map(Generator::m).sum()
    }

    /// Block index of every state.
    pub fn block_map(&self) -> Vec<usize> {
        self.fast_blocks
            .iter()
            .enumerate()
            .flat_map(|(k, b)| std::iter::repeat_n(k, b.m()))
            .collect()
    }

    /// Stationary distributions `νᵏ` of every fast block.
    pub fn block_stationary(&self) -> Result<Vec<ProbVector>, GeneratorError> {
        self.fast_blocks.iter().map(stationary_distribution).collect()
    }
}

/// `Qᵋ = Q̃/ε + Q̂`.
pub fn assemble_generator(tts: &TwoTimeScaleSpec) -> Result<Generator, GeneratorError> {
    let mut rates = tts.slow.rates.clone();
    let inv_eps = 1.0 / tts.epsilon;
    for (k, block) in tts.fast_blocks.iter().enumerate() {
        let off = tts.offset(k);
        for r in 0..block.m() {
            for c in 0..block.m() {
                if r != c {
                    rates[(off + r, off + c)] += block.rate(r, c) * inv_eps;
                }
            }
        }
    }
    close_rows(&mut rates);
    validate_generator(rates)
}

/// Generator of the aggregated limit chain on the `L` blocks.
pub fn limit_generator(tts: &TwoTimeScaleSpec) -> Result<Generator, GeneratorError> {
    let nus = tts.block_stationary()?;
    let l = tts.n_blocks();
    let block_of = tts.block_map();
    let mut rates = DMatrix::zeros(l, l);
    for k in 0..l {
        let off = tts.offset(k);
        for (r, &weight) in nus[k].weights().iter().enumerate() {
            let s = off + r;
            for (col, &p) in block_of.iter().enumerate() {
                rates[(k, p)] += weight * tts.slow.rate(s, col);
            }
        }
    }
    close_rows(&mut rates);
    validate_generator(rates)
}
