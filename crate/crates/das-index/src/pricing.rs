//! Power pricing: exact policy evaluation, the dual function over the power
//! price, and projected subgradient ascent.
//!
//! With a price on transmit energy the multi-client problem splits into one
//! priced problem per client, so the dual function is a sum of single-client
//! optima minus `price * budget`. The access point only has to iterate on the
//! price: each client reports the average power of its own optimal policy,
//! and the price moves by the (concave) dual's supergradient
//! `sum_n E_n(price) - budget`, projected to stay nonnegative.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mdp;
use crate::model::ClientModel;
use crate::solver::{self, compile_iid, PolicyTable, SolveError};

#[derive(Debug, Error)]
pub enum PricingError {
    #[error(transparent)]
    Solve(#[from] SolveError),

    #[error("power budget must be positive and finite, got {0}")]
    BadBudget(f64),

    #[error("price must be finite and >= 0, got {0}")]
    BadPrice(f64),

    #[error("policy covers {got} states, model has {expected}")]
    PolicyShape { expected: usize, got: usize },
}

/// Exact steady-state statistics of a policy on the i.i.d. channel.
///
/// All averages are expectations under the stationary distribution of the
/// recurrent class reached from the full buffer (a streaming session starts
/// after initial buffering, and for these chains that class is unique).
#[derive(Debug, Clone, Serialize)]
pub struct PolicyStats {
    pub stationary: Vec<f64>,
    /// Average QoE cost per slot: outage + quality disutility + weighted
    /// outage-period starts. Excludes the priced power term.
    pub qoe_cost: f64,
    pub avg_power: f64,
    pub outage_fraction: f64,
    /// New outage periods per slot.
    pub outage_period_rate: f64,
    pub avg_quality_disutility: f64,
}

impl PolicyStats {
    /// Cost seen by the priced single-client problem.
    pub fn priced_cost(&self, price: f64) -> f64 {
        self.qoe_cost + price * self.avg_power
    }
}

/// Evaluates `policy` exactly: stationary distribution by linear solve, then
/// expectations against it.
pub fn evaluate_policy(
    model: &ClientModel,
    policy: &PolicyTable,
) -> Result<PolicyStats, PricingError> {
    let levels = model.num_levels();
    if policy.num_levels() != levels || policy.num_channels() != 1 {
        return Err(PricingError::PolicyShape {
            expected: levels,
            got: policy.num_levels() * policy.num_channels(),
        });
    }
    let actions = solver::ordered_actions(model);
    let index_of = |a: crate::model::Action| -> usize {
        actions.iter().position(|&x| x == a).expect("action within model bounds")
    };
    let mdp = compile_iid(model, 0.0);
    let assignment: Vec<usize> =
        (0..levels).map(|l| index_of(policy.action(l as u32))).collect();
    let start = levels - 1;
    let dist = mdp::stationary_from(&mdp, &assignment, start)?;

    let mut avg_power = 0.0;
    let mut avg_disutility = 0.0;
    let mut period_rate = 0.0;
    for (l, &w) in dist.iter().enumerate() {
        let a = policy.action(l as u32);
        let p = model.success_prob(a);
        avg_power += w * model.power(a);
        avg_disutility += w * p * model.disutility(a);
        if l == 1 {
            period_rate += w * (1.0 - p);
        }
    }
    let outage_fraction = dist[0];
    let qoe_cost =
        outage_fraction + avg_disutility + model.outage_period_weight() * period_rate;
    Ok(PolicyStats {
        stationary: dist,
        qoe_cost,
        avg_power,
        outage_fraction,
        outage_period_rate: period_rate,
        avg_quality_disutility: avg_disutility,
    })
}

/// The dual function at one price, with the per-client pieces.
#[derive(Debug, Clone)]
pub struct DualValue {
    /// `D(price) = sum_n V_n(price) - price * budget`.
    pub total: f64,
    /// Optimal priced cost `V_n(price)` per client.
    pub per_client_value: Vec<f64>,
    /// Average power of each client's optimal policy at this price.
    pub per_client_power: Vec<f64>,
    /// QoE-only average cost of each client's optimal policy.
    pub per_client_qoe: Vec<f64>,
    pub policies: Vec<PolicyTable>,
}

fn check_budget(budget: f64) -> Result<(), PricingError> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(PricingError::BadBudget(budget));
    }
    Ok(())
}

fn check_price(price: f64) -> Result<(), PricingError> {
    if !(price.is_finite() && price >= 0.0) {
        return Err(PricingError::BadPrice(price));
    }
    Ok(())
}

/// Solves each client independently at `price` and assembles
/// `D(price) = sum_n V_n(price) - price * budget`.
pub fn dual_value(
    models: &[ClientModel],
    price: f64,
    budget: f64,
    tol: f64,
) -> Result<DualValue, PricingError> {
    check_price(price)?;
    check_budget(budget)?;
    let solves: Vec<Result<(f64, PolicyTable, PolicyStats), PricingError>> = models
        .par_iter()
        .map(|model| {
            let r = solver::average_cost_solve(model, price, tol)?;
            let stats = evaluate_policy(model, &r.policy)?;
            Ok((r.gain.expect("average solve returns a gain"), r.policy, stats))
        })
        .collect();
    let mut per_client_value = Vec::with_capacity(models.len());
    let mut per_client_power = Vec::with_capacity(models.len());
    let mut per_client_qoe = Vec::with_capacity(models.len());
    let mut policies = Vec::with_capacity(models.len());
    for r in solves {
        let (gain, policy, stats) = r?;
        per_client_value.push(gain);
        per_client_power.push(stats.avg_power);
        per_client_qoe.push(stats.qoe_cost);
        policies.push(policy);
    }
    let total = per_client_value.iter().sum::<f64>() - price * budget;
    Ok(DualValue { total, per_client_value, per_client_power, per_client_qoe, policies })
}

/// Supergradient of the concave dual at `price`:
/// `sum_n E_n(pi_n*(price)) - budget`.
///
/// Positive when the clients' optimal policies overspend the budget (the
/// price must rise), negative when there is slack. Satisfies the concavity
/// bracket `(D(p+h)-D(p))/h <= g <= (D(p)-D(p-h))/h`.
pub fn subgradient(
    models: &[ClientModel],
    price: f64,
    budget: f64,
    tol: f64,
) -> Result<f64, PricingError> {
    let dual = dual_value(models, price, budget, tol)?;
    Ok(dual.per_client_power.iter().sum::<f64>() - budget)
}

/// Diminishing step sizes `a / (k + b)` for the price ascent.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PriceSchedule {
    pub a: f64,
    pub b: f64,
}

impl Default for PriceSchedule {
    fn default() -> Self {
        Self { a: 1.0, b: 10.0 }
    }
}

impl PriceSchedule {
    pub fn step(&self, iterate: usize) -> f64 {
        self.a / (iterate as f64 + self.b)
    }
}

/// One row of the ascent history.
#[derive(Debug, Clone, Serialize)]
pub struct PriceIterationRow {
    pub iterate: usize,
    pub price: f64,
    pub dual: f64,
    pub subgradient: f64,
    pub total_power: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct PriceIterationOutcome {
    pub best_price: f64,
    pub best_dual: f64,
    /// Per-client optimal policies at the best price.
    pub policies: Vec<PolicyTable>,
    pub per_client_power: Vec<f64>,
    pub per_client_qoe: Vec<f64>,
    /// `sum_n E_n - budget` at the best price (negative means slack).
    pub constraint_violation: f64,
    /// `best_price * constraint_violation`; near zero at an optimal pair.
    pub complementary_slackness: f64,
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<PriceIterationRow>,
}

impl PriceIterationOutcome {
    /// CSV rows `iterate,price,dual,subgradient,total_power,feasible`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iterate,price,dual,subgradient,total_power,feasible\n");
        for row in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.iterate, row.price, row.dual, row.subgradient, row.total_power, row.feasible
            ));
        }
        out
    }
}

/// Number of non-improving iterations after which the ascent is declared
/// stagnant (one half of the convergence test; the other is feasibility).
const STAGNATION_WINDOW: usize = 50;

/// Projected subgradient ascent on the concave dual.
///
/// Starts at price 0, steps by `schedule`, and keeps the best iterate seen.
/// Declares convergence once the best dual value has not improved by more
/// than `tol` for [`STAGNATION_WINDOW`] iterations and the best iterate's
/// constraint violation is below `1e-3 * budget`; otherwise returns the best
/// iterate flagged as non-converged.
pub fn price_iteration(
    models: &[ClientModel],
    budget: f64,
    schedule: PriceSchedule,
    max_iters: usize,
    tol: f64,
    solve_tol: f64,
) -> Result<PriceIterationOutcome, PricingError> {
    check_budget(budget)?;
    let feas_tol = 1e-3 * budget;
    let mut price = 0.0f64;
    let mut best: Option<(f64, f64, DualValue)> = None; // (price, dual, pieces)
    let mut since_improvement = 0usize;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0usize;
    for k in 1..=max_iters {
        iterations = k;
        let dual = dual_value(models, price, budget, solve_tol)?;
        let total_power: f64 = dual.per_client_power.iter().sum();
        let g = total_power - budget;
        history.push(PriceIterationRow {
            iterate: k,
            price,
            dual: dual.total,
            subgradient: g,
            total_power,
            feasible: g <= feas_tol,
        });
        let improved = match &best {
            None => true,
            Some((_, best_dual, _)) => dual.total > best_dual + tol,
        };
        if improved {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if best.as_ref().map_or(true, |(_, d, _)| dual.total > *d) {
            best = Some((price, dual.total, dual));
        }
        let best_feasible = best
            .as_ref()
            .map(|(_, _, d)| d.per_client_power.iter().sum::<f64>() - budget <= feas_tol)
            .unwrap_or(false);
        if since_improvement >= STAGNATION_WINDOW && best_feasible {
            converged = true;
            break;
        }
        price = (price + schedule.step(k) * g).max(0.0);
    }
    let (best_price, best_dual, pieces) = best.expect("at least one iteration ran");
    let violation = pieces.per_client_power.iter().sum::<f64>() - budget;
    Ok(PriceIterationOutcome {
        best_price,
        best_dual,
        policies: pieces.policies,
        per_client_power: pieces.per_client_power,
        per_client_qoe: pieces.per_client_qoe,
        constraint_violation: violation,
        complementary_slackness: best_price * violation,
        converged,
        iterations,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Action;
    use crate::solver::DEFAULT_TOL;

    fn client(disutility: f64, p: f64) -> ClientModel {
        ClientModel::new(
            4,
            2,
            vec![disutility],
            vec![0.0, 1.0],
            vec![vec![0.0, p]],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn never_transmit_drains_into_outage() {
        let m = client(0.2, 0.6);
        let idle = PolicyTable::constant(m.num_levels(), Action::new(0, 0));
        let stats = evaluate_policy(&m, &idle).unwrap();
        assert!((stats.stationary[0] - 1.0).abs() < 1e-12);
        assert!((stats.qoe_cost - 1.0).abs() < 1e-12);
        assert_eq!(stats.avg_power, 0.0);
        assert!((stats.stationary.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn certain_delivery_cycles_between_top_levels() {
        // B=4, T=2, always transmit with P=1: cycle 4 -> 3 -> 4.
        let m = client(0.2, 1.0);
        let tx = PolicyTable::constant(m.num_levels(), Action::new(0, 1));
        let stats = evaluate_policy(&m, &tx).unwrap();
        assert!((stats.stationary[3] - 0.5).abs() < 1e-12);
        assert!((stats.stationary[4] - 0.5).abs() < 1e-12);
        assert_eq!(stats.outage_fraction, 0.0);
        assert!((stats.avg_power - 1.0).abs() < 1e-12);
        // Disutility accrues on every successful transmission, including the
        // overflow slot at level 4 where the packet is dropped.
        assert!((stats.avg_quality_disutility - 0.2).abs() < 1e-12);
    }

    #[test]
    fn dual_value_of_identical_pair_is_symmetric() {
        let m = client(0.2, 0.7);
        let models = vec![m.clone(), m];
        let price = 0.4;
        let budget = 1.0;
        let d = dual_value(&models, price, budget, DEFAULT_TOL).unwrap();
        assert!((d.per_client_value[0] - d.per_client_value[1]).abs() < 1e-9);
        let expect = 2.0 * d.per_client_value[0] - price * budget;
        assert!((d.total - expect).abs() < 1e-12);
    }

    #[test]
    fn subgradient_signs_at_extremes() {
        let m = client(0.2, 0.7);
        let models = vec![m.clone(), m];
        // A price above any achievable one-slot saving shuts transmission off:
        // pure slack, so the supergradient is -budget.
        let budget = 1.5;
        let g = subgradient(&models, 50.0, budget, DEFAULT_TOL).unwrap();
        assert!((g + budget).abs() < 1e-9);
        // Free power with a tiny budget: usage above budget, supergradient > 0.
        let g = subgradient(&models, 0.0, 1e-6, DEFAULT_TOL).unwrap();
        assert!(g > 0.0);
    }

    #[test]
    fn subgradient_lies_in_finite_difference_bracket() {
        let m1 = client(0.2, 0.7);
        let m2 = client(0.35, 0.5);
        let models = vec![m1, m2];
        let budget = 1.0;
        let h = 1e-4;
        for &price in &[0.05, 0.3, 0.9] {
            let g = subgradient(&models, price, budget, DEFAULT_TOL).unwrap();
            let d0 = dual_value(&models, price, budget, DEFAULT_TOL).unwrap().total;
            let dp = dual_value(&models, price + h, budget, DEFAULT_TOL).unwrap().total;
            let dm = dual_value(&models, price - h, budget, DEFAULT_TOL).unwrap().total;
            assert!((dp - d0) / h <= g + 1e-6, "price {price}");
            assert!(g <= (d0 - dm) / h + 1e-6, "price {price}");
        }
    }

    #[test]
    fn slack_budget_converges_to_zero_price() {
        let m = client(0.2, 0.7);
        let models = vec![m.clone(), m];
        // Unconstrained usage is at most 2; a budget of 3 never binds.
        let out = price_iteration(
            &models,
            3.0,
            PriceSchedule::default(),
            500,
            1e-9,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.best_price, 0.0);
        assert!(out.constraint_violation < 0.0);
        assert_eq!(out.complementary_slackness, 0.0);
    }

    #[test]
    fn tiny_budget_pushes_price_up() {
        let m = client(0.1, 0.9);
        let models = vec![m.clone(), m];
        let budget = 1e-3;
        let out = price_iteration(
            &models,
            budget,
            PriceSchedule::default(),
            2000,
            1e-9,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(out.best_price > 1.0, "price {}", out.best_price);
        // At the best iterate the clients idle: no power used at all.
        assert!(out.per_client_power.iter().sum::<f64>() <= budget);
    }

    #[test]
    fn total_power_nonincreasing_in_price() {
        let models = vec![client(0.2, 0.7), client(0.35, 0.5)];
        let mut last = f64::INFINITY;
        for &price in &[0.0, 0.2, 0.5, 1.0, 2.0, 5.0] {
            let d = dual_value(&models, price, 1.0, DEFAULT_TOL).unwrap();
            let total: f64 = d.per_client_power.iter().sum();
            assert!(total <= last + 1e-9, "usage rose at price {price}");
            last = total;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = client(0.2, 0.7);
        assert!(dual_value(&[m.clone()], -0.1, 1.0, DEFAULT_TOL).is_err());
        assert!(dual_value(&[m.clone()], 0.1, 0.0, DEFAULT_TOL).is_err());
        let wrong = PolicyTable::constant(3, Action::new(0, 0));
        assert!(evaluate_policy(&m, &wrong).is_err());
    }
}
