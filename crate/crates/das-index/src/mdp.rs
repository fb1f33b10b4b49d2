//! Generic finite-MDP machinery: compiled transition/cost tables and the
//! iterative solvers that everything else is built on.
//!
//! States and actions are plain indices here; the domain layers compile
//! client models into this form and map results back.

use crate::linalg;
use crate::solver::SolveError;

/// Damping factor of the aperiodicity transform used by relative value
/// iteration: `P ~> (1-TAU) I + TAU P`. The transform keeps the gain and the
/// greedy policy and scales the bias by `1/TAU`; without it, value iteration
/// oscillates on periodic chains (e.g. deterministic fill/drain cycles).
const APERIODICITY_TAU: f64 = 0.5;

/// A finite MDP with per-(state, action) expected costs and sparse
/// successor distributions (each summing to exactly 1).
#[derive(Debug, Clone)]
pub(crate) struct FiniteMdp {
    pub cost: Vec<Vec<f64>>,
    pub trans: Vec<Vec<Vec<(usize, f64)>>>,
}

impl FiniteMdp {
    pub fn n_states(&self) -> usize {
        self.cost.len()
    }

    pub fn n_actions(&self) -> usize {
        self.cost[0].len()
    }

    fn expected(&self, state: usize, action: usize, values: &[f64]) -> f64 {
        self.trans[state][action]
            .iter()
            .map(|&(next, p)| p * values[next])
            .sum()
    }

    /// One-step lookahead values `Q(s, a) = c(s, a) + factor * E[V(s')]`.
    pub fn q_values(&self, state: usize, factor: f64, values: &[f64]) -> Vec<f64> {
        (0..self.n_actions())
            .map(|a| self.cost[state][a] + factor * self.expected(state, a, values))
            .collect()
    }

    /// Index of the first action within `tie_eps` of the minimum.
    ///
    /// Action order is part of the contract: the domain layers enumerate
    /// actions lowest-power-first, then lowest-quality-first, so ties resolve
    /// to the cheapest threshold-consistent representative.
    pub fn greedy_action(&self, state: usize, factor: f64, values: &[f64], tie_eps: f64) -> usize {
        let q = self.q_values(state, factor, values);
        pick_min_index(&q, tie_eps)
    }
}

pub(crate) fn pick_min_index(q: &[f64], tie_eps: f64) -> usize {
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    q.iter().position(|&v| v <= min + tie_eps).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub(crate) struct IterationOutcome {
    pub values: Vec<f64>,
    /// Average-cost gain; `None` for discounted solves.
    pub gain: Option<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

/// Discounted value iteration with the standard stopping rule
/// `||V_{k+1} - V_k|| <= tol (1-beta) / (2 beta)`, which bounds the value
/// error by `tol / 2`.
pub(crate) fn value_iteration(
    mdp: &FiniteMdp,
    beta: f64,
    tol: f64,
    max_iter: usize,
    tie_eps: f64,
) -> Result<IterationOutcome, SolveError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(SolveError::BadDiscount(beta));
    }
    if !(tol > 0.0) {
        return Err(SolveError::BadTolerance(tol));
    }
    let threshold = tol * (1.0 - beta) / (2.0 * beta);
    let n = mdp.n_states();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    for iter in 1..=max_iter {
        let mut residual = 0.0f64;
        for s in 0..n {
            let q = mdp.q_values(s, beta, &values);
            let best = q.iter().copied().fold(f64::INFINITY, f64::min);
            residual = residual.max((best - values[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut values, &mut next);
        if residual <= threshold {
            let policy = (0..n).map(|s| mdp.greedy_action(s, beta, &values, tie_eps)).collect();
            return Ok(IterationOutcome {
                values,
                gain: None,
                policy,
                iterations: iter,
                residual,
            });
        }
    }
    Err(SolveError::NoConvergence { iterations: max_iter })
}

/// Relative value iteration for the average-cost problem.
///
/// Runs on the aperiodicity-transformed chain, subtracts the reference state
/// 0 each sweep, and stops when the span of the Bellman update drops below
/// `tol`, which brackets the gain to within `tol`. Returns the gain and the
/// bias rescaled back to the original chain, normalized to `bias[0] = 0`.
pub(crate) fn relative_value_iteration(
    mdp: &FiniteMdp,
    tol: f64,
    max_iter: usize,
    tie_eps: f64,
) -> Result<IterationOutcome, SolveError> {
    if !(tol > 0.0) {
        return Err(SolveError::BadTolerance(tol));
    }
    let tau = APERIODICITY_TAU;
    let n = mdp.n_states();
    let mut values = vec![0.0; n];
    let mut update = vec![0.0; n];
    for iter in 1..=max_iter {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..n {
            let q = mdp.q_values(s, tau, &values);
            let best = q.iter().copied().fold(f64::INFINITY, f64::min) + (1.0 - tau) * values[s];
            let diff = best - values[s];
            lo = lo.min(diff);
            hi = hi.max(diff);
            update[s] = best;
        }
        let anchor = update[0];
        for s in 0..n {
            values[s] = update[s] - anchor;
        }
        if hi - lo <= tol {
            let gain = 0.5 * (hi + lo);
            // Original-chain bias: the transformed fixed point is h / tau.
            let bias: Vec<f64> = values.iter().map(|v| v * tau).collect();
            let policy = (0..n).map(|s| mdp.greedy_action(s, 1.0, &bias, tie_eps)).collect();
            return Ok(IterationOutcome {
                values: bias,
                gain: Some(gain),
                policy,
                iterations: iter,
                residual: hi - lo,
            });
        }
    }
    Err(SolveError::NoConvergence { iterations: max_iter })
}

/// Exact discounted value of a fixed policy via the linear system
/// `(I - beta P_pi) V = c_pi`.
pub(crate) fn policy_value_discounted(
    mdp: &FiniteMdp,
    policy: &[usize],
    beta: f64,
) -> Result<Vec<f64>, SolveError> {
    let n = mdp.n_states();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] = 1.0;
        for &(next, p) in &mdp.trans[s][policy[s]] {
            a[s][next] -= beta * p;
        }
        b[s] = mdp.cost[s][policy[s]];
    }
    linalg::solve(&a, &b).ok_or(SolveError::SingularChain {
        detail: "discounted policy evaluation system is singular".into(),
    })
}

/// States reachable from `start` under `policy` (including `start`).
pub(crate) fn reachable_states(mdp: &FiniteMdp, policy: &[usize], start: usize) -> Vec<usize> {
    let n = mdp.n_states();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        for &(next, p) in &mdp.trans[s][policy[s]] {
            if p > 0.0 && !seen[next] {
                seen[next] = true;
                stack.push(next);
            }
        }
    }
    (0..n).filter(|&s| seen[s]).collect()
}

/// Stationary distribution of the policy-induced chain restricted to the
/// closed set reachable from `start`; zero elsewhere.
///
/// For these buffer chains the reachable closed set always contains exactly
/// one recurrent class (down-moves are unit steps, so two disjoint closed
/// intervals cannot both be entered from above), which makes the restricted
/// solve well-posed even for periodic or absorbing policies.
pub(crate) fn stationary_from(
    mdp: &FiniteMdp,
    policy: &[usize],
    start: usize,
) -> Result<Vec<f64>, SolveError> {
    let reach = reachable_states(mdp, policy, start);
    let k = reach.len();
    let mut index = vec![usize::MAX; mdp.n_states()];
    for (i, &s) in reach.iter().enumerate() {
        index[s] = i;
    }
    // (P^T - I) pi = 0 with the last balance equation replaced by sum = 1.
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (i, &s) in reach.iter().enumerate() {
        a[i][i] -= 1.0;
        for &(next, p) in &mdp.trans[s][policy[s]] {
            a[index[next]][i] += p;
        }
    }
    for col in a[k - 1].iter_mut() {
        *col = 1.0;
    }
    b[k - 1] = 1.0;
    let x = linalg::solve(&a, &b).ok_or(SolveError::SingularChain {
        detail: format!(
            "stationary solve singular on {k} reachable states; the policy may induce a degenerate chain"
        ),
    })?;
    let mut dist = vec![0.0; mdp.n_states()];
    let mut total = 0.0;
    for (i, &s) in reach.iter().enumerate() {
        if x[i] < -1e-9 {
            return Err(SolveError::SingularChain {
                detail: format!("stationary solve produced negative mass {} at state {s}", x[i]),
            });
        }
        dist[s] = x[i].max(0.0);
        total += dist[s];
    }
    for v in dist.iter_mut() {
        *v /= total;
    }
    Ok(dist)
}
