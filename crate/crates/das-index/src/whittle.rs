//! Client prioritization under hard channel constraints: indexability
//! checks, per-state activation indices, and top-M schedulers.
//!
//! Each client is reduced to a binary choice per slot (idle or one fixed
//! transmit action) and charged a price per transmission. The passive set
//! `S(price)` collects the states where idling is optimal; when it grows
//! monotonically with the price, the problem is indexable and each state
//! gets the index `W(l) = inf { price : l in S(price) }`. The scheduler
//! then activates the M clients with the largest indices at their current
//! states. A separable-value variant covers the case where activated
//! clients also pick a (quality, power) action.

use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::mdp::{self, FiniteMdp};
use crate::model::{Action, ClientModel, ModelError};
use crate::solver::{self, JointSolveResult, SolveError, MAX_SWEEPS, TIE_EPS};

#[derive(Debug, Error)]
pub enum WhittleError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Solve(#[from] SolveError),

    #[error("transmit action must have positive delivery probability")]
    UselessTransmit,

    #[error("state {state} is still active at the price cap {price_cap}; raise the cap")]
    PriceCapTooSmall { state: u32, price_cap: f64 },

    #[error("price grid must be sorted ascending and nonnegative")]
    BadGrid,

    #[error("threshold {threshold} outside the accepting region 1..={limit}")]
    BadThreshold { threshold: u32, limit: u32 },

    #[error("indifference system is singular at threshold {threshold}")]
    SingularSystem { threshold: u32 },

    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// A client restricted to idle versus one fixed transmit action.
#[derive(Debug, Clone)]
pub struct BinaryClientModel {
    model: ClientModel,
    transmit: Action,
}

impl BinaryClientModel {
    pub fn new(model: ClientModel, transmit: Action) -> Result<Self, WhittleError> {
        model.validate_action(transmit)?;
        if model.success_prob(transmit) <= 0.0 {
            return Err(WhittleError::UselessTransmit);
        }
        Ok(Self { model, transmit })
    }

    pub fn model(&self) -> &ClientModel {
        &self.model
    }

    pub fn transmit_action(&self) -> Action {
        self.transmit
    }

    pub fn idle_action(&self) -> Action {
        Action::new(self.transmit.quality, 0)
    }

    /// Price cap above which every state is passive: no single slot can save
    /// more than the full outage, period, and disutility stakes.
    pub fn default_price_cap(&self) -> f64 {
        let model = &self.model;
        let max_disutility = model
            .quality_disutilities()
            .iter()
            .copied()
            .fold(0.0f64, f64::max);
        model.buffer_capacity() as f64
            * (1.0 + model.outage_period_weight() + max_disutility)
    }

    /// The two-action priced chain: action 0 idles, action 1 transmits and
    /// pays `price` per use.
    fn compile(&self, price: f64) -> FiniteMdp {
        let model = &self.model;
        let levels = model.num_levels();
        let p = model.success_prob(self.transmit);
        let mut cost = vec![vec![0.0; 2]; levels];
        let mut trans = vec![vec![Vec::new(); 2]; levels];
        for l in 0..levels {
            let level = l as u32;
            let up = model.successor_success_unchecked(level) as usize;
            let down = level.saturating_sub(1) as usize;
            cost[l][0] = model.step_cost_with_prob(level, self.idle_action(), 0.0, 0.0);
            cost[l][1] =
                model.step_cost_with_prob(level, self.transmit, 0.0, p) + price;
            trans[l][0] = vec![(down, 1.0)];
            trans[l][1] = if up == down {
                vec![(down, 1.0)]
            } else {
                vec![(up, p), (down, 1.0 - p)]
            };
        }
        FiniteMdp { cost, trans }
    }
}

/// States where idling is optimal at one price (ties resolve to idle, so the
/// set is maximal).
#[derive(Debug, Clone, Serialize)]
pub struct PassiveSet {
    pub price: f64,
    passive: Vec<bool>,
}

impl PassiveSet {
    pub fn contains(&self, level: u32) -> bool {
        self.passive[level as usize]
    }

    pub fn states(&self) -> Vec<u32> {
        (0..self.passive.len() as u32).filter(|&l| self.passive[l as usize]).collect()
    }

    pub fn is_subset_of(&self, other: &PassiveSet) -> bool {
        self.passive
            .iter()
            .zip(other.passive.iter())
            .all(|(a, b)| !a || *b)
    }

    /// Test fixture constructor.
    pub fn from_states(price: f64, levels: usize, states: &[u32]) -> Self {
        let mut passive = vec![false; levels];
        for &s in states {
            passive[s as usize] = true;
        }
        Self { price, passive }
    }
}

/// Solves the priced average-cost problem and reports where idle is optimal.
pub fn passive_set(bin: &BinaryClientModel, price: f64) -> Result<PassiveSet, WhittleError> {
    if !(price.is_finite() && price >= 0.0) {
        return Err(WhittleError::Model(ModelError::NegativePrice(price)));
    }
    let mdp = bin.compile(price);
    let out = mdp::relative_value_iteration(&mdp, solver::DEFAULT_TOL, MAX_SWEEPS, TIE_EPS)?;
    // Action order [idle, transmit] plus first-minimizer tie-breaking means
    // the greedy policy already prefers idle on ties.
    let passive = out.policy.iter().map(|&a| a == 0).collect();
    Ok(PassiveSet { price, passive })
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexabilityReport {
    pub passed: bool,
    /// `(lower price, higher price, state)` with a state passive at the lower
    /// price but active at the higher one.
    pub violation: Option<(f64, f64, u32)>,
}

/// Nestedness check for an already-computed chain of passive sets, assumed
/// ordered by ascending price.
pub fn verify_nested(sets: &[PassiveSet]) -> IndexabilityReport {
    for pair in sets.windows(2) {
        if !pair[0].is_subset_of(&pair[1]) {
            let state = pair[0]
                .states()
                .into_iter()
                .find(|&s| !pair[1].contains(s))
                .expect("subset check failed, so a witness exists");
            return IndexabilityReport {
                passed: false,
                violation: Some((pair[0].price, pair[1].price, state)),
            };
        }
    }
    IndexabilityReport { passed: true, violation: None }
}

/// Verifies that passive sets are nested along an ascending price grid.
pub fn check_indexability(
    bin: &BinaryClientModel,
    price_grid: &[f64],
) -> Result<IndexabilityReport, WhittleError> {
    if price_grid.windows(2).any(|w| w[1] < w[0]) || price_grid.iter().any(|&p| p < 0.0) {
        return Err(WhittleError::BadGrid);
    }
    let sets = price_grid
        .iter()
        .map(|&p| passive_set(bin, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(verify_nested(&sets))
}

/// Smallest price at which `level` turns passive, found by bisection to
/// width `tol`. Relies on indexability: membership in the passive set is
/// monotone in the price.
pub fn whittle_index(
    bin: &BinaryClientModel,
    level: u32,
    price_cap: f64,
    tol: f64,
) -> Result<f64, WhittleError> {
    if !(tol > 0.0) {
        return Err(WhittleError::BadTolerance(tol));
    }
    bin.model.validate_level(level)?;
    if passive_set(bin, 0.0)?.contains(level) {
        return Ok(0.0);
    }
    if !passive_set(bin, price_cap)?.contains(level) {
        return Err(WhittleError::PriceCapTooSmall { state: level, price_cap });
    }
    let mut active_at = 0.0f64;
    let mut passive_at = price_cap;
    while passive_at - active_at > tol {
        let mid = 0.5 * (active_at + passive_at);
        if passive_set(bin, mid)?.contains(level) {
            passive_at = mid;
        } else {
            active_at = mid;
        }
    }
    Ok(0.5 * (active_at + passive_at))
}

/// Activation indices for every state of one client.
#[derive(Debug, Clone, Serialize)]
pub struct IndexTable {
    pub indices: Vec<f64>,
}

impl IndexTable {
    pub fn at(&self, level: u32) -> f64 {
        self.indices[level as usize]
    }
}

/// Whittle index for every buffer level.
pub fn index_table(
    bin: &BinaryClientModel,
    price_cap: f64,
    tol: f64,
) -> Result<IndexTable, WhittleError> {
    let indices = (0..bin.model.num_levels() as u32)
        .map(|l| whittle_index(bin, l, price_cap, tol))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IndexTable { indices })
}

/// CSV export `client,state,index`, one table per client.
pub fn index_tables_csv(tables: &[IndexTable]) -> String {
    let mut out = String::from("client,state,index\n");
    for (client, table) in tables.iter().enumerate() {
        for (state, w) in table.indices.iter().enumerate() {
            out.push_str(&format!("{client},{state},{w}\n"));
        }
    }
    out
}

/// Solution of the indifference system at one candidate threshold.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSolve {
    pub threshold: u32,
    /// Price making both actions optimal at the threshold state.
    pub price: f64,
    pub gain: f64,
    /// Relative values with `bias[0] = 0`.
    pub bias: Vec<f64>,
}

impl ThresholdSolve {
    /// Whether (price, gain, bias) solve the priced Bellman equation with the
    /// threshold policy greedy everywhere and indifferent at the threshold.
    /// Only then does the indifference price equal the state's index.
    pub fn is_consistent(&self, bin: &BinaryClientModel, tol: f64) -> bool {
        if !(self.price.is_finite() && self.price >= 0.0) {
            return false;
        }
        let mdp = bin.compile(self.price);
        for l in 0..bin.model().num_levels() {
            let q = mdp.q_values(l, 1.0, &self.bias);
            let bellman = q[0].min(q[1]);
            if (self.gain + self.bias[l] - bellman).abs() > tol {
                return false;
            }
            let level = l as u32;
            if level < self.threshold && q[1] > q[0] + tol {
                return false;
            }
            if level > self.threshold && q[0] > q[1] + tol {
                return false;
            }
            if level == self.threshold && (q[0] - q[1]).abs() > tol {
                return false;
            }
        }
        true
    }
}

/// Solves the linear indifference system for a threshold-`k` policy: passive
/// above `k`, active below, both actions optimal at `k`, with `bias[0] = 0`.
/// Unknowns are the gain, the indifference price, and the biases.
pub fn whittle_linear_solve(
    bin: &BinaryClientModel,
    threshold: u32,
) -> Result<ThresholdSolve, WhittleError> {
    let model = bin.model();
    let limit = model.accept_limit();
    if threshold < 1 || threshold > limit {
        return Err(WhittleError::BadThreshold { threshold, limit });
    }
    let levels = model.num_levels();
    let n = levels + 1; // gain, price, bias(1..=B)
    let p = model.success_prob(bin.transmit);
    let col_gain = 0usize;
    let col_price = 1usize;
    let col_bias = |level: usize| -> Option<usize> { (level > 0).then(|| 1 + level) };

    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    let mut row = 0usize;
    let push_row = |coeffs: &mut Vec<Vec<f64>>,
                        rhs: &mut Vec<f64>,
                        level: u32,
                        active: bool,
                        row: usize| {
        let l = level as usize;
        coeffs[row][col_gain] = 1.0;
        if let Some(c) = col_bias(l) {
            coeffs[row][c] += 1.0;
        }
        let up = model.successor_success_unchecked(level) as usize;
        let down = level.saturating_sub(1) as usize;
        if active {
            coeffs[row][col_price] = -1.0;
            if let Some(c) = col_bias(up) {
                coeffs[row][c] -= p;
            }
            if let Some(c) = col_bias(down) {
                coeffs[row][c] -= 1.0 - p;
            }
            rhs[row] = model.step_cost_with_prob(level, bin.transmit, 0.0, p);
        } else {
            if let Some(c) = col_bias(down) {
                coeffs[row][c] -= 1.0;
            }
            rhs[row] = model.step_cost_with_prob(level, bin.idle_action(), 0.0, 0.0);
        }
    };
    for level in 0..levels as u32 {
        push_row(&mut a, &mut b, level, level <= threshold, row);
        row += 1;
        if level == threshold {
            push_row(&mut a, &mut b, level, false, row);
            row += 1;
        }
    }
    debug_assert_eq!(row, n);
    let x = linalg::solve(&a, &b).ok_or(WhittleError::SingularSystem { threshold })?;
    let mut bias = vec![0.0; levels];
    for l in 1..levels {
        bias[l] = x[1 + l];
    }
    Ok(ThresholdSolve { threshold, price: x[col_price], gain: x[col_gain], bias })
}

/// Clients to activate this slot: at most `m`, largest index first, ties to
/// the lowest client id, and zero-index clients never scheduled (idling a
/// channel beats activating a client that gains nothing from it).
pub fn top_m_schedule(tables: &[IndexTable], levels: &[u32], m: usize) -> Vec<usize> {
    assert_eq!(tables.len(), levels.len());
    let mut ranked: Vec<(usize, f64)> = tables
        .iter()
        .zip(levels.iter())
        .enumerate()
        .map(|(client, (table, &l))| (client, table.at(l)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.into_iter().take(m).map(|(client, _)| client).collect()
}

/// One-step-lookahead activation: for each client, the improvement of its
/// best transmitting action over idling, measured through the supplied
/// per-client value function. Picks the top `m` positive improvements and
/// returns the chosen action per activated client.
pub fn separable_value_index(
    models: &[ClientModel],
    values: &[Vec<f64>],
    levels: &[u32],
    m: usize,
) -> Vec<Option<Action>> {
    assert_eq!(models.len(), values.len());
    assert_eq!(models.len(), levels.len());
    let mut best: Vec<Option<(f64, Action)>> = vec![None; models.len()];
    for (client, model) in models.iter().enumerate() {
        let level = levels[client];
        let v = &values[client];
        let up = model.successor_success_unchecked(level) as usize;
        let down = level.saturating_sub(1) as usize;
        let idle = Action::new(0, 0);
        let q_idle = model.step_cost_with_prob(level, idle, 0.0, 0.0) + v[down];
        for a in model.actions() {
            if a.is_idle() {
                continue;
            }
            let p = model.success_prob(a);
            let q = model.step_cost_with_prob(level, a, 0.0, p) + p * v[up] + (1.0 - p) * v[down];
            let advantage = q_idle - q;
            if best[client].map_or(true, |(w, _)| advantage > w) {
                best[client] = Some((advantage, a));
            }
        }
    }
    let mut ranked: Vec<(usize, f64, Action)> = best
        .iter()
        .enumerate()
        .filter_map(|(client, slot)| {
            slot.and_then(|(w, a)| (w > 0.0).then_some((client, w, a)))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut out = vec![None; models.len()];
    for (client, _, action) in ranked.into_iter().take(m) {
        out[client] = Some(action);
    }
    out
}

/// Exact joint solve under the hard constraint of at most `m` transmitters
/// per slot, over the given per-client action lists. The oracle the index
/// policies are measured against.
pub fn joint_channel_constrained_solve(
    models: &[ClientModel],
    action_lists: Vec<Vec<Action>>,
    m: usize,
    tol: f64,
) -> Result<JointSolveResult, WhittleError> {
    let space = solver::ProductSpace::with_action_lists(models, action_lists)?;
    let (mdp, kept) = solver::compile_product(models, 0.0, &space, |acts| {
        acts.iter().filter(|a| !a.is_idle()).count() <= m
    });
    let out = mdp::relative_value_iteration(&mdp, tol, MAX_SWEEPS, TIE_EPS)?;
    let policy = out
        .policy
        .iter()
        .map(|&j| space.actions_of(kept[j]))
        .collect();
    Ok(JointSolveResult {
        values: out.values,
        gain: out.gain,
        policy,
        iterations: out.iterations,
        residual: out.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::DEFAULT_TOL;

    fn binary(b: u32, t: u32, p: f64, disutility: f64, outage_weight: f64) -> BinaryClientModel {
        let model = ClientModel::new(
            b,
            t,
            vec![disutility],
            vec![0.0, 1.0],
            vec![vec![0.0, p]],
            outage_weight,
        )
        .unwrap();
        BinaryClientModel::new(model, Action::new(0, 1)).unwrap()
    }

    /// Exhaustive check of the priced binary problem: enumerate all 2^(B+1)
    /// idle/transmit policies and evaluate each exactly.
    fn brute_force_passive(bin: &BinaryClientModel, price: f64) -> (f64, Vec<bool>) {
        let mdp = bin.compile(price);
        let n = mdp.n_states();
        let mut best_gain = f64::INFINITY;
        let mut best = vec![false; n];
        for mask in 0u32..(1 << n) {
            let policy: Vec<usize> = (0..n).map(|s| ((mask >> s) & 1) as usize).collect();
            let dist = crate::mdp::stationary_from(&mdp, &policy, n - 1).unwrap();
            let gain: f64 = dist
                .iter()
                .enumerate()
                .map(|(s, &w)| w * mdp.cost[s][policy[s]])
                .sum();
            if gain < best_gain - 1e-12 {
                best_gain = gain;
                best = policy.iter().map(|&a| a == 0).collect();
            }
        }
        (best_gain, best)
    }

    #[test]
    fn free_transmission_is_passive_only_in_overflow() {
        // Quality disutility 0 and price 0: transmitting costs nothing, so
        // only the overflow states (where it cannot change the next state)
        // idle, by tie-breaking.
        let model = ClientModel::new(
            5,
            2,
            vec![0.0],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.8]],
            1.0,
        )
        .unwrap();
        let bin = BinaryClientModel::new(model, Action::new(0, 1)).unwrap();
        let set = passive_set(&bin, 0.0).unwrap();
        let accept = bin.model().accept_limit();
        for l in set.states() {
            assert!(l > accept, "state {l} passive below the accepting limit");
        }
        // Exhaustive cross-check of the solver's gain at a positive price.
        let (brute, _) = brute_force_passive(&bin, 0.05);
        let rvi = mdp::relative_value_iteration(
            &bin.compile(0.05),
            DEFAULT_TOL,
            MAX_SWEEPS,
            TIE_EPS,
        )
        .unwrap();
        assert!((brute - rvi.gain.unwrap()).abs() < 1e-7);
    }

    #[test]
    fn huge_price_makes_everything_passive() {
        let bin = binary(6, 2, 0.7, 0.3, 2.0);
        let cap = bin.default_price_cap();
        let set = passive_set(&bin, cap + 1.0).unwrap();
        assert_eq!(set.states().len(), bin.model().num_levels());
    }

    #[test]
    fn overflow_states_passive_at_any_positive_price() {
        let bin = binary(6, 2, 0.7, 0.3, 2.0);
        for &price in &[1e-6, 0.1, 1.0] {
            let set = passive_set(&bin, price).unwrap();
            for l in (bin.model().accept_limit() + 1)..=bin.model().buffer_capacity() {
                assert!(set.contains(l), "overflow state {l} active at price {price}");
            }
        }
    }

    #[test]
    fn nestedness_detects_fixture_violation() {
        let a = PassiveSet::from_states(0.1, 5, &[3, 4]);
        let b = PassiveSet::from_states(0.2, 5, &[4]);
        let report = verify_nested(&[a, b]);
        assert!(!report.passed);
        assert_eq!(report.violation, Some((0.1, 0.2, 3)));
        // Single-point grids pass trivially.
        let c = PassiveSet::from_states(0.1, 5, &[3]);
        assert!(verify_nested(&[c]).passed);
    }

    #[test]
    fn indexability_on_grid() {
        let bin = binary(6, 3, 0.65, 0.25, 1.5);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let report = check_indexability(&bin, &grid).unwrap();
        assert!(report.passed, "violation: {:?}", report.violation);
        assert!(check_indexability(&bin, &[0.3, 0.1]).is_err());
    }

    #[test]
    fn index_is_zero_in_overflow_and_monotone_below() {
        let bin = binary(8, 3, 0.7, 0.3, 2.0);
        let cap = bin.default_price_cap();
        let table = index_table(&bin, cap, 1e-6).unwrap();
        assert_eq!(table.at(bin.model().buffer_capacity()), 0.0);
        let limit = bin.model().accept_limit();
        for l in 1..limit {
            assert!(
                table.at(l) >= table.at(l + 1) - 1e-5,
                "index rose from level {l}: {} -> {}",
                table.at(l),
                table.at(l + 1)
            );
        }
        assert!(table.at(1) >= table.at(limit));
    }

    #[test]
    fn index_flips_action_across_the_boundary() {
        let bin = binary(6, 2, 0.7, 0.3, 2.0);
        let cap = bin.default_price_cap();
        let tol = 1e-6;
        let level = 2;
        let w = whittle_index(&bin, level, cap, tol).unwrap();
        assert!(w > 0.0);
        assert!(passive_set(&bin, w + tol).unwrap().contains(level));
        assert!(!passive_set(&bin, (w - tol).max(0.0)).unwrap().contains(level));
    }

    #[test]
    fn price_cap_too_small_is_reported() {
        let bin = binary(6, 2, 0.7, 0.3, 2.0);
        assert!(matches!(
            whittle_index(&bin, 1, 1e-9, 1e-6),
            Err(WhittleError::PriceCapTooSmall { .. })
        ));
    }

    #[test]
    fn linear_solve_agrees_with_bisection() {
        // Without a period penalty the QoE cost is affine in the outage
        // fraction, every idle/transmit split ties at the critical price,
        // and each threshold's indifference system is solvable with
        // price = p (T - disutility).
        let bin = binary(6, 2, 0.7, 0.3, 0.0);
        let cap = bin.default_price_cap();
        let tol = 1e-6;
        let expect = 0.7 * (2.0 - 0.3);
        let mut compared = 0;
        for threshold in 1..=bin.model().accept_limit() {
            let solve = match whittle_linear_solve(&bin, threshold) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if !solve.is_consistent(&bin, 1e-8) {
                continue;
            }
            let w = whittle_index(&bin, threshold, cap, tol).unwrap();
            assert!(
                (w - solve.price).abs() <= 10.0 * tol,
                "threshold {threshold}: bisection {w} vs linear {}",
                solve.price
            );
            assert!((solve.price - expect).abs() < 1e-6);
            compared += 1;
        }
        assert!(compared >= 2, "only {compared} consistent thresholds found");
    }

    #[test]
    fn linear_solve_rejects_bad_threshold() {
        let bin = binary(6, 2, 0.7, 0.3, 2.0);
        assert!(whittle_linear_solve(&bin, 0).is_err());
        assert!(whittle_linear_solve(&bin, bin.model().accept_limit() + 1).is_err());
    }

    #[test]
    fn top_m_sorting_and_skipping() {
        let tables = vec![
            IndexTable { indices: vec![3.0] },
            IndexTable { indices: vec![1.0] },
            IndexTable { indices: vec![2.5] },
        ];
        let picked = top_m_schedule(&tables, &[0, 0, 0], 2);
        assert_eq!(picked, vec![0, 2]);
        // All-zero indices: nobody is activated.
        let zeros = vec![IndexTable { indices: vec![0.0] }; 3];
        assert!(top_m_schedule(&zeros, &[0, 0, 0], 2).is_empty());
        // N = M: everyone with a positive index is activated.
        let picked = top_m_schedule(&tables, &[0, 0, 0], 3);
        assert_eq!(picked.len(), 3);
    }

    #[test]
    fn separable_index_reduces_to_greedy_for_one_client() {
        let model = ClientModel::new(
            5,
            2,
            vec![0.2, 0.45],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.5], vec![0.0, 0.8]],
            1.5,
        )
        .unwrap();
        let solve = solver::average_cost_solve(&model, 0.0, DEFAULT_TOL).unwrap();
        for level in 0..=model.buffer_capacity() {
            let chosen =
                separable_value_index(&[model.clone()], &[solve.values.clone()], &[level], 1);
            let greedy = solve.policy.action(level);
            match chosen[0] {
                Some(a) => assert_eq!(a, greedy, "level {level}"),
                None => assert!(greedy.is_idle(), "level {level}"),
            }
        }
    }

    #[test]
    fn separable_index_breaks_ties_by_client_id() {
        let model = ClientModel::new(
            4,
            2,
            vec![0.2],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.7]],
            1.0,
        )
        .unwrap();
        let solve = solver::average_cost_solve(&model, 0.0, DEFAULT_TOL).unwrap();
        let values = vec![solve.values.clone(), solve.values.clone()];
        let chosen = separable_value_index(
            &[model.clone(), model.clone()],
            &values,
            &[1, 1],
            1,
        );
        assert!(chosen[0].is_some());
        assert!(chosen[1].is_none());
    }
}
