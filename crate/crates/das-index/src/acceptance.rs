//! Oracle-backed verification suite.
//!
//! Ten independent checks, each pinning a structural property of the
//! solvers, the pricing loop, the index machinery, the learners, or the
//! simulator against brute force, closed forms, cross-method agreement, or
//! statistical bounds. `run_all` is what the `verify` CLI command executes;
//! the `acceptance` integration test asserts every check one by one.
//!
//! Monte Carlo draws depend on the base seed; exact-solver results do not.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::learning::{self, QVariant, Schedules};
use crate::model::{Action, ChannelModel, ClientModel};
use crate::pricing::{self, PriceSchedule};
use crate::sim::{self, ConstraintMode, FixedPolicies, Scenario, ScenarioClient};
use crate::solver::{self, SolveMode};
use crate::whittle::{self, BinaryClientModel};

/// Base seed used by the integration suite and the CLI default.
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} {:32} {}  [{}]",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// Runs every criterion in order.
pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    vec![
        threshold_structure(seed),
        d_monotonicity(seed),
        oracle_equivalence(seed),
        dual_decomposition(seed),
        primal_dual_consistency(seed),
        indexability(seed),
        simulator_vs_analysis(seed),
        q_learning_convergence(seed),
        two_timescale_price_learning(seed),
        fading_reduction(seed),
    ]
}

fn stream(seed: u64, criterion: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + criterion);
    rng
}

// ── Model sampling ───────────────────────────────────────────────────────

/// `n` strictly increasing values spanning `(lo, hi]` with relative gaps of
/// at least `min_gap`.
fn increasing(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, min_gap: f64) -> Vec<f64> {
    let gaps: Vec<f64> = (0..n).map(|_| min_gap + rng.gen::<f64>()).collect();
    let total: f64 = gaps.iter().sum();
    let scale = (hi - lo) / total;
    let mut acc = lo;
    gaps.into_iter()
        .map(|g| {
            acc += g * scale;
            acc
        })
        .collect()
}

/// Strictly monotone success table `p[q][m] = lo + (hi-lo)(a_m + b_q - a_m b_q)`
/// on the transmit columns, zero on the idle column.
fn sample_success(rng: &mut ChaCha8Rng, qualities: usize, powers: usize) -> Vec<Vec<f64>> {
    let lo = rng.gen_range(0.03..0.12);
    let hi = rng.gen_range(0.75..0.97);
    let a = increasing(rng, powers - 1, 0.1, 0.9, 0.05);
    let b = increasing(rng, qualities, 0.0, 0.7, 0.05);
    (0..qualities)
        .map(|q| {
            let mut row = vec![0.0];
            for m in 0..powers - 1 {
                let mix = a[m] + b[q] - a[m] * b[q];
                row.push(lo + (hi - lo) * mix);
            }
            row
        })
        .collect()
}

pub(crate) fn sample_model(
    rng: &mut ChaCha8Rng,
    buffer_range: (u32, u32),
    qualities_max: usize,
    powers_max: usize,
) -> ClientModel {
    let b = rng.gen_range(buffer_range.0..=buffer_range.1);
    let t = rng.gen_range(1..=b);
    let qualities = rng.gen_range(1..=qualities_max);
    let powers = rng.gen_range(2..=powers_max.max(2));
    let disutility_hi = rng.gen_range(0.3..1.0);
    let disutilities = increasing(rng, qualities, 0.05, disutility_hi, 0.05);
    let power_hi = rng.gen_range(0.8..2.0);
    let mut power_levels = vec![0.0];
    power_levels.extend(increasing(rng, powers - 1, 0.3, power_hi, 0.1));
    let success = sample_success(rng, qualities, powers);
    let outage_weight = rng.gen_range(0.0..3.0);
    ClientModel::new(b, t, disutilities, power_levels, success, outage_weight)
        .expect("sampled model is valid by construction")
}

fn sample_tiny_model(rng: &mut ChaCha8Rng) -> ClientModel {
    // B <= 3 and |A| <= 4 keeps enumeration at <= 4^4 policies per client.
    let b = rng.gen_range(2..=3);
    let t = rng.gen_range(1..=b);
    let qualities = rng.gen_range(1..=2);
    let disutilities = increasing(rng, qualities, 0.05, 0.6, 0.05);
    let power_levels = vec![0.0, rng.gen_range(0.5..1.5)];
    let success = sample_success(rng, qualities, 2);
    let outage_weight = rng.gen_range(0.0..2.0);
    ClientModel::new(b, t, disutilities, power_levels, success, outage_weight)
        .expect("sampled tiny model is valid")
}

// ── 1 & 2: threshold structure and stage-gap monotonicity ────────────────

const STRUCTURE_MODELS: usize = 200;
const STRUCTURE_STAGES: usize = 50;
const DISCOUNTS: [f64; 2] = [0.9, 0.99];
const PRICES: [f64; 3] = [0.0, 0.5, 2.0];

fn structure_sample(seed: u64) -> Vec<ClientModel> {
    let mut rng = stream(seed, 1);
    (0..STRUCTURE_MODELS).map(|_| sample_model(&mut rng, (4, 20), 3, 3)).collect()
}

/// Greedy policies from discounted solves satisfy the threshold property on
/// every sampled model, discount, and price.
pub fn threshold_structure(seed: u64) -> CriterionOutcome {
    let models = structure_sample(seed);
    let failures: Vec<String> = models
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, model)| {
            let mut bad = Vec::new();
            for beta in DISCOUNTS {
                for price in PRICES {
                    let solve = solver::discounted_value_iteration(
                        model,
                        price,
                        beta,
                        solver::DEFAULT_TOL,
                    )
                    .expect("solve succeeds");
                    let report = solver::verify_threshold(&solve.policy, model);
                    if !report.passed {
                        bad.push(format!(
                            "model {i} beta {beta} price {price}: {:?}",
                            report.violations.first()
                        ));
                    }
                }
            }
            bad
        })
        .collect();
    let total = STRUCTURE_MODELS * DISCOUNTS.len() * PRICES.len();
    CriterionOutcome {
        id: 1,
        name: "threshold structure",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{total}/{total} greedy policies threshold-consistent")
        } else {
            format!("{} violations; first: {}", failures.len(), failures[0])
        },
    }
}

/// Every stage gap function of every sampled model is nonincreasing.
pub fn d_monotonicity(seed: u64) -> CriterionOutcome {
    let models = structure_sample(seed);
    let failures: Vec<String> = models
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, model)| {
            let mut bad = Vec::new();
            for beta in DISCOUNTS {
                for price in PRICES {
                    let (_, gaps) =
                        solver::backward_induction(model, price, beta, STRUCTURE_STAGES)
                            .expect("induction succeeds");
                    for gap in &gaps {
                        let report = solver::verify_d_monotone(gap);
                        if !report.passed {
                            bad.push(format!(
                                "model {i} beta {beta} price {price} stage {}: level {:?}",
                                gap.stage, report.first_violation
                            ));
                        }
                    }
                }
            }
            bad
        })
        .collect();
    let total = STRUCTURE_MODELS * DISCOUNTS.len() * PRICES.len() * STRUCTURE_STAGES;
    CriterionOutcome {
        id: 2,
        name: "stage gap monotonicity",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{total}/{total} stage gaps nonincreasing")
        } else {
            format!("{} violations; first: {}", failures.len(), failures[0])
        },
    }
}

// ── 3: solver vs policy enumeration ──────────────────────────────────────

/// Discounted and average-cost optima match exhaustive policy enumeration
/// within 1e-6 on tiny instances.
pub fn oracle_equivalence(seed: u64) -> CriterionOutcome {
    let mut rng = stream(seed, 3);
    let cases: Vec<(ClientModel, f64, f64)> = (0..50)
        .map(|_| {
            let m = sample_tiny_model(&mut rng);
            let price = rng.gen_range(0.0..1.5);
            let beta = if rng.gen::<bool>() { 0.9 } else { 0.99 };
            (m, price, beta)
        })
        .collect();
    let worst = cases
        .par_iter()
        .map(|(model, price, beta)| {
            let vi = solver::discounted_value_iteration(model, *price, *beta, 1e-9)
                .expect("solve");
            let oracle_d = solver::enumerate_policies_oracle(
                model,
                *price,
                SolveMode::Discounted(*beta),
            )
            .expect("oracle");
            let d_err = vi
                .values
                .iter()
                .zip(oracle_d.values.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let rvi = solver::average_cost_solve(model, *price, 1e-10).expect("solve");
            let oracle_a =
                solver::enumerate_policies_oracle(model, *price, SolveMode::AverageCost)
                    .expect("oracle");
            let a_err = (rvi.gain.unwrap() - oracle_a.gain.unwrap()).abs();
            d_err.max(a_err)
        })
        .reduce(|| 0.0, f64::max);
    CriterionOutcome {
        id: 3,
        name: "oracle equivalence",
        passed: worst <= 1e-6,
        detail: format!("worst |solver - enumeration| = {worst:.2e} (allowed 1e-6)"),
    }
}

// ── 4: dual decomposition ────────────────────────────────────────────────

/// Sum of single-client optima equals the joint product-chain optimum at
/// each price (the decomposition the pricing scheme relies on).
pub fn dual_decomposition(seed: u64) -> CriterionOutcome {
    let mut rng = stream(seed, 4);
    let pairs: Vec<(ClientModel, ClientModel)> = (0..20)
        .map(|_| (sample_tiny_model(&mut rng), sample_tiny_model(&mut rng)))
        .collect();
    let prices = [0.0, 0.3, 0.8, 1.5, 3.0];
    let worst = pairs
        .par_iter()
        .map(|(a, b)| {
            let models = vec![a.clone(), b.clone()];
            let mut worst = 0.0f64;
            for price in prices {
                let budget = 1.0; // cancels in the comparison
                let dual = pricing::dual_value(&models, price, budget, 1e-10).expect("dual");
                let joint =
                    solver::product_mdp_solve(&models, price, SolveMode::AverageCost, 1e-10)
                        .expect("joint solve");
                let sum: f64 = dual.per_client_value.iter().sum();
                worst = worst.max((sum - joint.gain.unwrap()).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    CriterionOutcome {
        id: 4,
        name: "dual decomposition",
        passed: worst <= 1e-6,
        detail: format!("worst |sum V_n - joint gain| = {worst:.2e} over 100 solves"),
    }
}

// ── 5: primal-dual consistency ───────────────────────────────────────────

/// Exact (QoE cost, power) of every deterministic policy of a tiny client:
/// the independent primal oracle for the constrained comparison.
fn enumerate_policy_stats(model: &ClientModel) -> Vec<(f64, f64)> {
    let actions = model.actions();
    let n = model.num_levels();
    let mut out = Vec::new();
    let mut assignment = vec![0usize; n];
    loop {
        let policy =
            solver::PolicyTable::new_iid(assignment.iter().map(|&i| actions[i]).collect());
        let stats = pricing::evaluate_policy(model, &policy).expect("stats");
        out.push((stats.qoe_cost, stats.avg_power));
        let mut pos = 0;
        loop {
            if pos == n {
                return out;
            }
            assignment[pos] += 1;
            if assignment[pos] < actions.len() {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Price ascent reaches the constrained brute-force optimum with tiny
/// duality gap and complementary slackness on two-client instances.
pub fn primal_dual_consistency(seed: u64) -> CriterionOutcome {
    let mut rng = stream(seed, 5);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_cs = 0.0f64;
    let mut built = 0;
    while built < 10 {
        let a = sample_tiny_model(&mut rng);
        let b = sample_tiny_model(&mut rng);
        let models = vec![a, b];
        let usage = |p: f64| -> f64 {
            pricing::dual_value(&models, p, 1.0, 1e-10)
                .expect("dual")
                .per_client_power
                .iter()
                .sum()
        };
        // Half the instances put the budget on a flat piece of the dual
        // (the exact usage of the optimal policies at a non-kink price), the
        // rest use a slack budget. In both cases the deterministic primal
        // optimum coincides with the dual optimum.
        let budget = if built % 2 == 0 {
            let mut found = None;
            for _ in 0..50 {
                let probe = rng.gen_range(0.1..1.2);
                let u = usage(probe);
                if u > 0.02
                    && (usage(probe - 1e-4) - u).abs() < 1e-9
                    && (usage(probe + 1e-4) - u).abs() < 1e-9
                {
                    found = Some(u);
                    break;
                }
            }
            match found {
                Some(u) => u,
                None => continue, // resample the pair
            }
        } else {
            1.25 * usage(0.0) + 0.1
        };
        let out = pricing::price_iteration(
            &models,
            budget,
            PriceSchedule::default(),
            500,
            1e-9,
            1e-10,
        )
        .expect("ascent");
        let stats_a = enumerate_policy_stats(&models[0]);
        let stats_b = enumerate_policy_stats(&models[1]);
        let mut primal = f64::INFINITY;
        for (ca, ea) in &stats_a {
            for (cb, eb) in &stats_b {
                if ea + eb <= budget + 1e-12 {
                    primal = primal.min(ca + cb);
                }
            }
        }
        worst_gap = worst_gap.max(primal - out.best_dual);
        worst_cs = worst_cs.max(out.complementary_slackness.abs());
        built += 1;
    }
    let passed = worst_gap <= 1e-3 && worst_cs <= 1e-2;
    CriterionOutcome {
        id: 5,
        name: "primal-dual consistency",
        passed,
        detail: format!(
            "worst primal-dual gap = {worst_gap:.2e} (allowed 1e-3), worst |CS| = {worst_cs:.2e} (allowed 1e-2)"
        ),
    }
}

// ── 6: indexability and index cross-methods ──────────────────────────────

/// Passive sets nest along a 50-point price grid for 100 binary models, and
/// bisection indices agree with the linear indifference solve on every
/// threshold whose system is solvable and Bellman-consistent.
pub fn indexability(seed: u64) -> CriterionOutcome {
    let mut rng = stream(seed, 6);
    let bins: Vec<BinaryClientModel> = (0..100)
        .map(|i| {
            let b = rng.gen_range(3..=8);
            let t = rng.gen_range(1..=b);
            let p = rng.gen_range(0.3..0.9);
            let disutility = rng.gen_range(0.05..0.6);
            // Without a period weight, state-level indifference prices exist
            // and the linear solve is exercised; the weighted half stresses
            // nestedness in the bang-bang regime.
            let outage_weight = if i % 2 == 0 { 0.0 } else { rng.gen_range(0.1..3.0) };
            let model = ClientModel::new(
                b,
                t,
                vec![disutility],
                vec![0.0, 1.0],
                vec![vec![0.0, p]],
                outage_weight,
            )
            .expect("valid binary model");
            BinaryClientModel::new(model, Action::new(0, 1)).expect("valid transmit")
        })
        .collect();
    let tol = 1e-6;
    let results: Vec<Result<(usize, f64), String>> = bins
        .par_iter()
        .enumerate()
        .map(|(i, bin)| {
            let cap = bin.default_price_cap();
            let grid: Vec<f64> = (0..50).map(|k| cap * k as f64 / 49.0).collect();
            let report = whittle::check_indexability(bin, &grid).map_err(|e| e.to_string())?;
            if !report.passed {
                return Err(format!("model {i} nestedness violation {:?}", report.violation));
            }
            let mut compared = 0usize;
            let mut worst = 0.0f64;
            for k in 1..=bin.model().accept_limit() {
                let solve = match whittle::whittle_linear_solve(bin, k) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                if !solve.is_consistent(bin, 1e-8) {
                    continue;
                }
                let w = whittle::whittle_index(bin, k, cap, tol).map_err(|e| e.to_string())?;
                let err = (w - solve.price).abs();
                if err > 10.0 * tol {
                    return Err(format!(
                        "model {i} threshold {k}: bisection {w} vs linear {}",
                        solve.price
                    ));
                }
                worst = worst.max(err);
                compared += 1;
            }
            Ok((compared, worst))
        })
        .collect();
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    for r in &results {
        match r {
            Ok((c, w)) => {
                compared += c;
                worst = worst.max(*w);
            }
            Err(e) => {
                return CriterionOutcome {
                    id: 6,
                    name: "indexability + index agreement",
                    passed: false,
                    detail: e.clone(),
                }
            }
        }
    }
    CriterionOutcome {
        id: 6,
        name: "indexability + index agreement",
        passed: compared > 0,
        detail: format!(
            "100/100 nested; {compared} consistent thresholds agreed, worst gap {worst:.2e} (allowed 1e-5)"
        ),
    }
}

// ── 7: simulator vs exact analysis ───────────────────────────────────────

/// Million-slot simulated QoE cost and power sit within 3 batch-means SEs
/// of the exact stationary values, and delivery frequencies pass a global
/// chi-squared test at the 0.999 level.
pub fn simulator_vs_analysis(seed: u64) -> CriterionOutcome {
    let mut rng = stream(seed, 7);
    let mut cases = Vec::new();
    for i in 0..20 {
        let model = sample_model(&mut rng, (4, 10), 2, 2);
        let policy = if i % 4 == 3 {
            // A random policy, kept live by transmitting at level 1.
            let actions = model.actions();
            let mut table = solver::PolicyTable::new_iid(
                (0..model.num_levels())
                    .map(|_| actions[rng.gen_range(0..actions.len())])
                    .collect(),
            );
            let transmit = actions.iter().copied().find(|a| !a.is_idle()).unwrap();
            table.set_action(1, 0, transmit);
            table
        } else {
            let price = rng.gen_range(0.0..1.0);
            solver::average_cost_solve(&model, price, 1e-10).expect("solve").policy
        };
        cases.push((model, policy, rng.gen::<u64>()));
    }
    let failures: Vec<String> = cases
        .par_iter()
        .enumerate()
        .filter_map(|(i, (model, policy, case_seed))| {
            let exact = pricing::evaluate_policy(model, policy).expect("stats");
            let scenario = Scenario {
                clients: vec![ScenarioClient::iid(model.clone())],
                constraint: ConstraintMode::AveragePower { budget: 1.0 },
                horizon: 1_000_000,
                seed: *case_seed,
                record_slots: false,
            };
            let mut sched = FixedPolicies { policies: vec![policy.clone()] };
            let trace = sim::run(&scenario, &mut sched).expect("run");
            let a = &trace.per_client[0];
            // Burn-in: drop the first batch (1% of slots) so the full-buffer
            // start does not bias the stationary comparison.
            let (cost_mean, cost_se) = sim::batch_mean_se(&a.batch_cost[1..], a.batch_size);
            let (power_mean, power_se) = sim::batch_mean_se(&a.batch_power[1..], a.batch_size);
            let chi = sim::delivery_chi_square(a, &scenario.clients[0], 1000, 0.999);
            let tested_attempts: u64 = a.outcomes.values().map(|c| c.attempts).sum();
            // The 1e-9 floor covers zero-variance cases (e.g. constant-power
            // policies) where the SE collapses below float accumulation noise.
            let cost_ok = (cost_mean - exact.qoe_cost).abs() <= (3.0 * cost_se).max(1e-9);
            let power_ok = (power_mean - exact.avg_power).abs() <= (3.0 * power_se).max(1e-9);
            let chi_ok = chi.passed && tested_attempts >= 100_000;
            if cost_ok && power_ok && chi_ok {
                None
            } else {
                Some(format!(
                    "case {i}: cost {cost_mean:.5} vs {:.5} (3se {:.1e}), power {power_mean:.5} vs {:.5} (3se {:.1e}), chi2 {:.1}/{:.1}",
                    exact.qoe_cost,
                    3.0 * cost_se,
                    exact.avg_power,
                    3.0 * power_se,
                    chi.statistic,
                    chi.critical
                ))
            }
        })
        .collect();
    CriterionOutcome {
        id: 7,
        name: "simulator vs analysis",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "20/20 pairs within 3 SE; chi-squared at 0.999 passed".into()
        } else {
            format!("{} failures; first: {}", failures.len(), failures[0])
        },
    }
}

// ── 8: Q-learning convergence ────────────────────────────────────────────

/// The fixed B=4, |A|=4 learning instance.
fn learning_instance() -> ClientModel {
    ClientModel::new(
        4,
        2,
        vec![0.2, 0.4],
        vec![0.0, 1.0],
        vec![vec![0.0, 0.5], vec![0.0, 0.8]],
        2.0,
    )
    .expect("valid instance")
}

fn exact_q_table(model: &ClientModel, price: f64, beta: f64) -> Vec<Vec<f64>> {
    let vi = solver::discounted_value_iteration(model, price, beta, 1e-10).expect("solve");
    let actions = model.actions();
    (0..model.num_levels())
        .map(|l| {
            actions
                .iter()
                .map(|&a| {
                    let mut q = model.step_cost(l as u32, a, price).expect("cost");
                    for (next, p) in
                        model.transition_distribution(l as u32, a, None).expect("dist")
                    {
                        q += beta * p * vi.values[next as usize];
                    }
                    q
                })
                .collect()
        })
        .collect()
}

/// Relative Q-learning recovers the exact gain within 5% on >= 9/10 seeds
/// at default schedules and 1e6 steps; discounted Q-learning recovers Q*
/// within 5% of its span on >= 9/10 seeds (longer run, gentler rate).
pub fn q_learning_convergence(seed: u64) -> CriterionOutcome {
    let model = learning_instance();
    let price = 1.0;
    let exact_gain = solver::average_cost_solve(&model, price, 1e-10)
        .expect("solve")
        .gain
        .unwrap();
    let defaults = Schedules::default();
    let seeds: Vec<u64> = (0..10).map(|i| seed.wrapping_mul(31).wrapping_add(i)).collect();
    let rel_ok = seeds
        .par_iter()
        .filter(|&&s| {
            let out = learning::single_client_q_run(
                &model,
                price,
                QVariant::Relative,
                &defaults,
                1_000_000,
                s,
                None,
            )
            .expect("run");
            (out.averaged_gain_estimate - exact_gain).abs() / exact_gain <= 0.05
        })
        .count();

    let beta = 0.99;
    let qstar = exact_q_table(&model, price, beta);
    let (lo, hi) = qstar
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &q| (lo.min(q), hi.max(q)));
    let span = hi - lo;
    // Literal defaults cannot close the 1/(1-beta)-scale startup error in
    // 1e6 steps; the discounted clause runs longer with a gentler rate.
    let disc_sched = Schedules { epsilon: 0.5, lr_scale: 300.0, ..Schedules::default() };
    let disc_ok = seeds
        .par_iter()
        .filter(|&&s| {
            let out = learning::single_client_q_run(
                &model,
                price,
                QVariant::Discounted { discount: beta },
                &disc_sched,
                3_000_000,
                s.wrapping_add(7777),
                None,
            )
            .expect("run");
            let err = out
                .averaged_q
                .iter()
                .flatten()
                .zip(qstar.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            err <= 0.05 * span
        })
        .count();
    let passed = rel_ok >= 9 && disc_ok >= 9;
    CriterionOutcome {
        id: 8,
        name: "Q-learning convergence",
        passed,
        detail: format!(
            "relative gain within 5%: {rel_ok}/10 (need 9); discounted Q within 5% of span: {disc_ok}/10 (need 9)"
        ),
    }
}

// ── 9: two-timescale price learning ──────────────────────────────────────

/// The coupled learner finds the kink price within 20% and runs power
/// within 10% of the budget on >= 8/10 seeds.
pub fn two_timescale_price_learning(seed: u64) -> CriterionOutcome {
    let models = vec![learning_instance()];
    // Budget strictly between the usage levels on either side of the dual's
    // kink: the unique maximizer is the kink price, and the learner's power
    // has to time-average to the budget there.
    let budget = 0.4;
    let exact =
        pricing::price_iteration(&models, budget, PriceSchedule::default(), 3000, 1e-10, 1e-10)
            .expect("ascent");
    let target = exact.best_price;
    let defaults = Schedules::default();
    let horizon = 1_000_000u64;
    let seeds: Vec<u64> = (0..10).map(|i| seed.wrapping_mul(97).wrapping_add(i)).collect();
    let ok = seeds
        .par_iter()
        .filter(|&&s| {
            let out = learning::two_timescale_run(
                &models,
                budget,
                QVariant::Relative,
                &defaults,
                horizon,
                s,
            )
            .expect("run");
            let tail: Vec<f64> = out
                .price_trace
                .iter()
                .filter(|(t, _)| *t >= horizon / 2)
                .map(|(_, p)| *p)
                .collect();
            let learned = tail.iter().sum::<f64>() / tail.len() as f64;
            let price_ok = (learned - target).abs() / target <= 0.2;
            let power_ok = (out.late_mean_power - budget).abs() / budget <= 0.1;
            price_ok && power_ok
        })
        .count();
    CriterionOutcome {
        id: 9,
        name: "two-timescale price learning",
        passed: ok >= 8,
        detail: format!(
            "{ok}/10 seeds within 20% of price {target:.4} and 10% of budget {budget} (need 8)"
        ),
    }
}

// ── 10: fading reduction ─────────────────────────────────────────────────

/// Single-state fading runs are byte-identical to i.i.d. runs, and the
/// exact two-state-channel gain matches a million-slot simulation.
pub fn fading_reduction(seed: u64) -> CriterionOutcome {
    let mut rng = stream(seed, 10);
    let model = sample_model(&mut rng, (5, 8), 2, 2);
    let price = 0.3;
    let policy = solver::average_cost_solve(&model, price, 1e-10).expect("solve").policy;

    // (a) degenerate channel, same seed: identical traces byte for byte.
    let base = Scenario {
        clients: vec![ScenarioClient::iid(model.clone())],
        constraint: ConstraintMode::AveragePower { budget: 1.0 },
        horizon: 200_000,
        seed: rng.gen(),
        record_slots: true,
    };
    let mut sched = FixedPolicies { policies: vec![policy.clone()] };
    let iid = sim::run(&base, &mut sched).expect("run");
    let mut degenerate = base.clone();
    degenerate.clients[0].channel = Some(ChannelModel::degenerate(&model));
    let mut sched = FixedPolicies { policies: vec![policy] };
    let faded = sim::run_fading(&degenerate, &mut sched).expect("run");
    let identical = serde_json::to_vec(&iid).unwrap() == serde_json::to_vec(&faded).unwrap();

    // (b) two-state bursty channel: exact gain vs simulated average cost.
    let good = model.success_table().to_vec();
    let bad: Vec<Vec<f64>> =
        good.iter().map(|row| row.iter().map(|p| 0.35 * p).collect()).collect();
    let channel =
        ChannelModel::new(&model, vec![vec![0.92, 0.08], vec![0.25, 0.75]], vec![good, bad])
            .expect("valid channel");
    let solve = solver::average_cost_solve_fading(&model, &channel, 0.0, 1e-10).expect("solve");
    let gain = solve.gain.unwrap();
    let scenario = Scenario {
        clients: vec![ScenarioClient::fading(model, channel, 0)],
        constraint: ConstraintMode::AveragePower { budget: 1.0 },
        horizon: 1_000_000,
        seed: rng.gen(),
        record_slots: false,
    };
    let mut sched = FixedPolicies { policies: vec![solve.policy] };
    let trace = sim::run_fading(&scenario, &mut sched).expect("run");
    let a = &trace.per_client[0];
    let (mean, se) = sim::batch_mean_se(&a.batch_cost[1..], a.batch_size);
    let within = (mean - gain).abs() <= 3.0 * se;
    CriterionOutcome {
        id: 10,
        name: "fading reduction",
        passed: identical && within,
        detail: format!(
            "degenerate-channel trace identical: {identical}; two-state gain {gain:.5} vs sim {mean:.5} (3se {:.1e})",
            3.0 * se
        ),
    }
}
