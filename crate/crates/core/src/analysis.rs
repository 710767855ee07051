//! Closed-form performance metrics from the normal-phase and critical-phase
//! Markov chains.
//!
//! In both chains state `k` is the number of simultaneous transmissions in a
//! slot (normal users only, for the critical chain). Matrices are kept in
//! natural state order; transient blocks are carved out by index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::protocol::{Action, ProtocolParams};

/// Row-stochastic transition matrix over transmission-count states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    matrix: Matrix,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Matrix index of transmission-count state `k` (natural order).
    pub fn index_of(&self, state: usize) -> usize {
        assert!(state < self.dim(), "state {state} out of range");
        state
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix[(self.index_of(from), self.index_of(to))]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        self.matrix.row(self.index_of(state))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.matrix
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    /// Mean success-run length, `1/θ`.
    pub t_s: f64,
    /// Mean contention-period length.
    pub t_c: f64,
    pub c_norm: f64,
    pub d_crit: f64,
    pub f_norm: f64,
}

/// Conditional delays `d(l, a)` and weights `v(l, a)` over the outcome of the
/// last normal-phase slot: `l` other transmitters, own action `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDecomposition {
    /// `d_table[l] = [d(l, T), d(l, W)]`.
    pub d_table: Vec<[f64; 2]>,
    /// `v_table[l] = [v(l, T), v(l, W)]`.
    pub v_table: Vec<[f64; 2]>,
    /// `m_vector[k - 1]` is the expected number of slots until the critical
    /// user's first success starting from state `k`, `k = 1..N-1`.
    pub m_vector: Vec<f64>,
}

fn slot(a: Action) -> usize {
    match a {
        Action::Transmit => 0,
        Action::Wait => 1,
    }
}

impl DelayDecomposition {
    pub fn d(&self, l: usize, a: Action) -> f64 {
        self.d_table[l][slot(a)]
    }

    pub fn v(&self, l: usize, a: Action) -> f64 {
        self.v_table[l][slot(a)]
    }

    /// `m_k` for `k >= 1`.
    pub fn m(&self, k: usize) -> f64 {
        self.m_vector[k - 1]
    }

    pub fn weighted_delay(&self) -> f64 {
        self.d_table
            .iter()
            .zip(&self.v_table)
            .map(|(d, v)| d[0] * v[0] + d[1] * v[1])
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.v_table.iter().map(|v| v[0] + v[1]).sum()
    }
}

/// Whole Binomial(n, p) pmf by the ratio recurrence, run from the side with
/// the larger starting mass.
pub(crate) fn binomial_row(n: usize, p: f64) -> Vec<f64> {
    if p > 0.5 {
        let mut row = binomial_row(n, 1.0 - p);
        row.reverse();
        return row;
    }
    let mut row = vec![0.0; n + 1];
    row[0] = (1.0 - p).powi(n as i32);
    if p == 0.0 {
        return row;
    }
    let odds = p / (1.0 - p);
    for j in 0..n {
        row[j + 1] = row[j] * (n - j) as f64 / (j + 1) as f64 * odds;
    }
    row
}

fn require_contention(params: &ProtocolParams) -> Result<()> {
    if params.n_users() < 2 {
        return Err(Error::BadParams(format!(
            "analysis needs at least 2 users, got {}",
            params.n_users()
        )));
    }
    Ok(())
}

/// Normal-phase chain over states `0..=N`.
pub fn build_normal_matrix(params: &ProtocolParams) -> Result<TransitionMatrix> {
    require_contention(params)?;
    let n = params.n_users();
    let mut m = Matrix::zeros(n + 1);
    for (k, pk) in binomial_row(n, params.q()).into_iter().enumerate() {
        m[(0, k)] = pk;
    }
    m[(1, 0)] = params.theta();
    m[(1, 1)] = 1.0 - params.theta();
    for k in 2..=n {
        for (to, pk) in binomial_row(k, params.r()).into_iter().enumerate() {
            m[(k, to)] = pk;
        }
    }
    Ok(TransitionMatrix { matrix: m })
}

/// Critical-phase chain over states `0..N` (normal transmitters only); state 0
/// is the critical user's first success and is absorbing.
pub fn build_critical_matrix(params: &ProtocolParams) -> Result<TransitionMatrix> {
    require_contention(params)?;
    let n = params.n_users();
    let mut m = Matrix::zeros(n);
    for k in 0..n {
        for (to, pk) in binomial_row(k, params.r()).into_iter().enumerate() {
            m[(k, to)] = pk;
        }
    }
    Ok(TransitionMatrix { matrix: m })
}

/// Mean contention-period length `T_c`: expected number of slots to first
/// reach state 1 starting from an idle slot.
pub fn contention_time(params: &ProtocolParams) -> Result<f64> {
    let p = build_normal_matrix(params)?;
    let transient: Vec<usize> = (0..p.dim())
        .filter(|&k| k != 1)
        .map(|k| p.index_of(k))
        .collect();
    let q = p.as_matrix().select(&transient);
    let x = linalg::expected_absorption_times(&q)?;
    Ok(x[0])
}

pub fn channel_utilization(params: &ProtocolParams) -> Result<f64> {
    let t_c = contention_time(params)?;
    Ok(utilization_from(params.theta(), t_c))
}

fn utilization_from(theta: f64, t_c: f64) -> f64 {
    1.0 / (theta * t_c + 1.0)
}

/// Stationary distribution `w` with `w P = w` and `Σ w = 1`, obtained by
/// replacing one balance equation with the normalization constraint.
pub fn stationary_distribution(m: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = m.dim();
    let mut a = m.as_matrix().transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    linalg::solve(a, rhs)
}

/// Expected time to the critical user's first success from each transient
/// state of the critical chain.
fn critical_absorption_times(params: &ProtocolParams) -> Result<Vec<f64>> {
    let p = build_critical_matrix(params)?;
    let transient: Vec<usize> = (1..p.dim()).map(|k| p.index_of(k)).collect();
    linalg::expected_absorption_times(&p.as_matrix().select(&transient))
}

pub fn delay_decomposition(params: &ProtocolParams, w_norm: &[f64]) -> Result<DelayDecomposition> {
    require_contention(params)?;
    let n = params.n_users();
    if w_norm.len() != n + 1 {
        return Err(Error::BadParams(format!(
            "stationary vector has length {}, expected {}",
            w_norm.len(),
            n + 1
        )));
    }
    let m = critical_absorption_times(params)?;
    let theta = params.theta();
    let nf = n as f64;

    let mut d_table = vec![[0.0; 2]; n];
    let others = binomial_row(n - 1, params.q());
    let idle_start: f64 = (1..n).map(|k| others[k] * m[k - 1]).sum();
    d_table[0] = [0.0, idle_start];
    if n >= 2 {
        d_table[1] = [m[0] - 1.0, (1.0 - theta) * m[0]];
    }
    for (l, row) in d_table.iter_mut().enumerate().skip(2) {
        let d = m[l - 1] - 1.0;
        *row = [d, d];
    }

    let v_table = (0..n)
        .map(|l| {
            [
                (l + 1) as f64 / nf * w_norm[l + 1],
                (n - l) as f64 / nf * w_norm[l],
            ]
        })
        .collect();

    Ok(DelayDecomposition {
        d_table,
        v_table,
        m_vector: m,
    })
}

/// Mean number of collisions suffered by a critical user before its first
/// success.
pub fn critical_delay(params: &ProtocolParams) -> Result<f64> {
    let w = stationary_distribution(&build_normal_matrix(params)?)?;
    Ok(delay_decomposition(params, &w)?.weighted_delay())
}

/// Critical delay when normal users wait after a `(success, failure)` pattern,
/// which cuts `d(1, W)` down to `1 - θ`.
pub fn enhanced_critical_delay(params: &ProtocolParams) -> Result<f64> {
    let w = stationary_distribution(&build_normal_matrix(params)?)?;
    let mut dec = delay_decomposition(params, &w)?;
    dec.d_table[1][slot(Action::Wait)] = 1.0 - params.theta();
    Ok(dec.weighted_delay())
}

/// All metrics for one parameter point.
pub fn evaluate(params: &ProtocolParams) -> Result<PerformanceMetrics> {
    let t_c = contention_time(params)?;
    let d_crit = critical_delay(params)?;
    let theta = params.theta();
    let t_s = 1.0 / theta;
    Ok(PerformanceMetrics {
        t_s,
        t_c,
        c_norm: utilization_from(theta, t_c),
        d_crit,
        f_norm: 1.0 / t_s,
    })
}
