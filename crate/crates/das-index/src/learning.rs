//! Tabular Q-learning for clients that do not know their own models.
//!
//! Three layers, all driven by realized one-slot costs:
//!
//! - per-client Q-tables with count-based learning rates, in a discounted
//!   variant (direct transcription of the update with a discount on the
//!   bootstrap) and a relative variant for the average-cost objective
//!   (subtracting a reference entry, whose value estimates the gain);
//! - Boltzmann scheduling over (client, action) pairs for the hard-channel
//!   setting, sampling proportionally to `exp(-tau Q)` so lower expected
//!   cost means higher probability (a literal `exp(+tau Q)` convention is
//!   available for comparison only);
//! - a two-timescale loop that couples fast Q-updates with a slow price
//!   ascent driven by observed power usage, so the price sees
//!   quasi-converged policies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, ClientModel, ModelError};
use crate::sim::{ClientProcess, ScenarioClient};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("invalid schedule: {0}")]
    BadSchedule(String),

    #[error("horizon must be >= 1")]
    BadHorizon,

    #[error("table shape does not match the model ({levels} levels x {actions} actions)")]
    TableShape { levels: usize, actions: usize },
}

/// Objective the learner targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QVariant {
    /// `Q(l,u) <- (1-b) Q + b (c + gamma min_u' Q(l',u'))`.
    Discounted { discount: f64 },
    /// `Q(l,u) <- (1-b) Q + b (c + min_u' Q(l',u') - Q(ref))`; the reference
    /// entry converges to the average cost per slot.
    Relative,
}

/// Boltzmann sign convention. Q-values track costs, so the coherent choice
/// weights actions by `exp(-tau Q)`; the literal `exp(+tau Q)` variant
/// explores toward high cost and exists only for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoltzmannConvention {
    SoftMin,
    LiteralSoftMax,
}

/// Learning-rate, price-step, temperature, and exploration schedules.
///
/// Defaults: per-entry learning rate `(1 + n/lr_scale)^-0.7`, price step
/// `1/(1+t)^0.85`, temperature `tau_scale * ln(1+t)`, epsilon-greedy floor
/// 0.1. The price exponent must exceed the learning-rate exponent so the
/// price moves on the slower timescale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Schedules {
    pub lr_exponent: f64,
    /// Visit-count scale of the learning rate; 1.0 gives `(1+n)^-exp`.
    pub lr_scale: f64,
    pub price_exponent: f64,
    pub price_scale: f64,
    pub tau_scale: f64,
    pub epsilon: f64,
}

impl Default for Schedules {
    fn default() -> Self {
        Self {
            lr_exponent: 0.7,
            lr_scale: 1.0,
            price_exponent: 0.85,
            price_scale: 1.0,
            tau_scale: 1.0,
            epsilon: 0.1,
        }
    }
}

impl Schedules {
    pub fn learning_rate(&self, visits: u64) -> f64 {
        (1.0 + visits as f64 / self.lr_scale).powf(-self.lr_exponent)
    }

    pub fn price_step(&self, t: u64) -> f64 {
        self.price_scale * (1.0 + t as f64).powf(-self.price_exponent)
    }

    pub fn temperature(&self, t: u64) -> f64 {
        self.tau_scale * (1.0 + t as f64).ln()
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.lr_exponent > 0.5 && self.lr_exponent <= 1.0) {
            return Err(LearnError::BadSchedule(format!(
                "learning-rate exponent {} outside (0.5, 1]",
                self.lr_exponent
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(LearnError::BadSchedule(format!("epsilon {} outside [0,1]", self.epsilon)));
        }
        if !(self.lr_scale > 0.0 && self.price_scale > 0.0 && self.tau_scale >= 0.0) {
            return Err(LearnError::BadSchedule("scales must be positive".into()));
        }
        Ok(())
    }

    /// Two-timescale requirement: the price step must vanish faster than the
    /// learning rate.
    pub fn validate_two_timescale(&self) -> Result<(), LearnError> {
        self.validate()?;
        if self.price_exponent <= self.lr_exponent {
            return Err(LearnError::BadSchedule(format!(
                "price exponent {} must exceed learning-rate exponent {} for two-timescale runs",
                self.price_exponent, self.lr_exponent
            )));
        }
        Ok(())
    }
}

/// One client's Q-factors with visit counts; serializable as a resumable
/// checkpoint. Action indices follow the model's power-major order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QTable {
    pub levels: usize,
    pub actions: usize,
    pub q: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    /// Total updates applied.
    pub t: u64,
}

/// Reference entry for the relative update: level 0, first action.
const REF_LEVEL: usize = 0;
const REF_ACTION: usize = 0;

/// Greedy tie window, matching the exact solvers.
const TIE_EPS: f64 = 1e-9;

impl QTable {
    pub fn new(model: &ClientModel) -> Self {
        let levels = model.num_levels();
        let actions = model.num_qualities() * model.num_power_levels();
        Self {
            levels,
            actions,
            q: vec![vec![0.0; actions]; levels],
            counts: vec![vec![0; actions]; levels],
            t: 0,
        }
    }

    pub fn matches(&self, model: &ClientModel) -> bool {
        self.levels == model.num_levels()
            && self.actions == model.num_qualities() * model.num_power_levels()
    }

    pub fn min_q(&self, level: u32) -> f64 {
        self.q[level as usize].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First action within the tie window of the row minimum (lowest power,
    /// then lowest quality index, by the action ordering).
    pub fn greedy(&self, level: u32) -> usize {
        crate::mdp::pick_min_index(&self.q[level as usize], TIE_EPS)
    }

    /// Estimate of the average cost per slot under the relative variant.
    pub fn gain_estimate(&self) -> f64 {
        self.q[REF_LEVEL][REF_ACTION]
    }

    /// The scheduled update: learning rate from the entry's visit count
    /// (first visit uses rate 1, a full overwrite).
    pub fn update(
        &mut self,
        level: u32,
        action: usize,
        cost: f64,
        next_level: u32,
        variant: QVariant,
        schedules: &Schedules,
    ) {
        let rate = schedules.learning_rate(self.counts[level as usize][action]);
        self.update_with_rate(level, action, cost, next_level, variant, rate);
    }

    /// One Q-factor update at an explicit learning rate; touches exactly the
    /// `(level, action)` entry.
    pub fn update_with_rate(
        &mut self,
        level: u32,
        action: usize,
        cost: f64,
        next_level: u32,
        variant: QVariant,
        rate: f64,
    ) {
        let target = match variant {
            QVariant::Discounted { discount } => cost + discount * self.min_q(next_level),
            QVariant::Relative => cost + self.min_q(next_level) - self.q[REF_LEVEL][REF_ACTION],
        };
        let cell = &mut self.q[level as usize][action];
        *cell = (1.0 - rate) * *cell + rate * target;
        self.counts[level as usize][action] += 1;
        self.t += 1;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Boltzmann probabilities over one Q-row. `tau = 0` is uniform; growing
/// `tau` concentrates on the minimum (or maximum, under the literal
/// convention). Stabilized by subtracting the row's reference extreme, and
/// invariant to shifting the whole row by a constant.
pub fn boltzmann_probs(q_row: &[f64], tau: f64, convention: BoltzmannConvention) -> Vec<f64> {
    let signed: Vec<f64> = match convention {
        BoltzmannConvention::SoftMin => q_row.iter().map(|&q| -q).collect(),
        BoltzmannConvention::LiteralSoftMax => q_row.to_vec(),
    };
    let peak = signed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = signed.iter().map(|&s| (tau * (s - peak)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Samples an action for `level` from the Boltzmann distribution.
pub fn softmax_action(
    table: &QTable,
    level: u32,
    tau: f64,
    convention: BoltzmannConvention,
    rng: &mut ChaCha8Rng,
) -> usize {
    let probs = boltzmann_probs(&table.q[level as usize], tau, convention);
    sample_index(&probs, rng)
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let draw = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Realized one-slot cost fed to the learners: outage indicator, priced
/// energy, disutility on delivery, and the period weight when a level-1
/// transmission fails (the slot that commits the chain to a fresh outage).
fn realized_cost(
    model: &ClientModel,
    level: u32,
    action: Action,
    delivered: bool,
    price: f64,
) -> f64 {
    let outage = if level == 0 { 1.0 } else { 0.0 };
    let disutility = if delivered { model.disutility(action) } else { 0.0 };
    let period = if level == 1 && !delivered { model.outage_period_weight() } else { 0.0 };
    outage + price * model.power(action) + disutility + period
}

// ── Single-client learning ───────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct QRunOutcome {
    pub table: QTable,
    /// Entrywise average of the Q-table over the second half of the run;
    /// iterate averaging knocks down the stochastic-approximation noise.
    pub averaged_q: Vec<Vec<f64>>,
    /// Mean realized cost (QoE + priced power) per slot over the run.
    pub mean_cost: f64,
    /// Relative variant: the reference entry (gain estimate) at the end.
    pub gain_estimate: f64,
    /// Reference entry averaged over the second half of the run.
    pub averaged_gain_estimate: f64,
    pub steps: u64,
}

/// Epsilon-greedy Q-learning on one client at a fixed power price.
pub fn single_client_q_run(
    model: &ClientModel,
    price: f64,
    variant: QVariant,
    schedules: &Schedules,
    horizon: u64,
    seed: u64,
    resume: Option<QTable>,
) -> Result<QRunOutcome, LearnError> {
    schedules.validate()?;
    if horizon < 1 {
        return Err(LearnError::BadHorizon);
    }
    let mut table = match resume {
        Some(t) if !t.matches(model) => {
            return Err(LearnError::TableShape {
                levels: model.num_levels(),
                actions: model.num_qualities() * model.num_power_levels(),
            })
        }
        Some(t) => t,
        None => QTable::new(model),
    };
    let actions = model.actions();
    let mut process = ClientProcess::new(&ScenarioClient::iid(model.clone()), seed, 0);
    let mut explore = ChaCha8Rng::seed_from_u64(seed);
    explore.set_stream(u64::MAX);
    let mut cost_sum = 0.0;
    let mut avg_q = vec![vec![0.0; table.actions]; table.levels];
    let mut avg_gain = 0.0;
    let half = horizon / 2;
    let tail = (horizon - half) as f64;
    for t in 0..horizon {
        let level = process.level;
        let ai = if explore.gen::<f64>() < schedules.epsilon {
            explore.gen_range(0..actions.len())
        } else {
            table.greedy(level)
        };
        let action = actions[ai];
        let out = process.step(action);
        let cost = realized_cost(model, level, action, out.delivered, price);
        cost_sum += cost;
        table.update(level, ai, cost, process.level, variant, schedules);
        if t >= half {
            for (acc_row, row) in avg_q.iter_mut().zip(table.q.iter()) {
                for (acc, &v) in acc_row.iter_mut().zip(row.iter()) {
                    *acc += v / tail;
                }
            }
            avg_gain += table.gain_estimate() / tail;
        }
    }
    Ok(QRunOutcome {
        gain_estimate: table.gain_estimate(),
        averaged_gain_estimate: avg_gain,
        averaged_q: avg_q,
        mean_cost: cost_sum / horizon as f64,
        steps: horizon,
        table,
    })
}

// ── Boltzmann index scheduling (hard channel constraint) ────────────────

#[derive(Debug, Clone)]
pub struct QIndexOutcome {
    pub tables: Vec<QTable>,
    /// Mean realized QoE cost per slot, summed over clients.
    pub mean_cost: f64,
    /// Mean over the second half of the run, past most of the exploration.
    pub late_mean_cost: f64,
    pub steps: u64,
}

/// Boltzmann index scheduling with on-the-fly Q-updates for served clients.
///
/// Per slot, samples (client, action) pairs from the joint Boltzmann
/// distribution over every client's Q-row without replacement until `m`
/// clients are assigned; unassigned clients idle and do not learn that slot.
pub fn q_index_run(
    models: &[ClientModel],
    m: usize,
    variant: QVariant,
    schedules: &Schedules,
    convention: BoltzmannConvention,
    horizon: u64,
    seed: u64,
) -> Result<QIndexOutcome, LearnError> {
    schedules.validate()?;
    if horizon < 1 {
        return Err(LearnError::BadHorizon);
    }
    let n = models.len();
    let mut tables: Vec<QTable> = models.iter().map(QTable::new).collect();
    let action_lists: Vec<Vec<Action>> = models.iter().map(|m| m.actions()).collect();
    let mut processes: Vec<ClientProcess> = models
        .iter()
        .enumerate()
        .map(|(i, model)| ClientProcess::new(&ScenarioClient::iid(model.clone()), seed, i))
        .collect();
    let mut sched_rng = ChaCha8Rng::seed_from_u64(seed);
    sched_rng.set_stream(0);

    let mut cost_sum = 0.0;
    let mut late_cost_sum = 0.0;
    let half = horizon / 2;
    for t in 0..horizon {
        let tau = schedules.temperature(t);
        // Joint Boltzmann weights over all remaining (client, action) pairs.
        let mut assigned: Vec<Option<usize>> = vec![None; n];
        let mut remaining: Vec<usize> = (0..n).collect();
        for _ in 0..m.min(n) {
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            let mut values: Vec<f64> = Vec::new();
            for &client in &remaining {
                let level = processes[client].level as usize;
                for (ai, _) in action_lists[client].iter().enumerate() {
                    pairs.push((client, ai));
                    values.push(tables[client].q[level][ai]);
                }
            }
            let probs = boltzmann_probs(&values, tau, convention);
            let pick = sample_index(&probs, &mut sched_rng);
            let (client, ai) = pairs[pick];
            assigned[client] = Some(ai);
            remaining.retain(|&c| c != client);
            if remaining.is_empty() {
                break;
            }
        }
        let mut slot_cost = 0.0;
        for client in 0..n {
            let model = &models[client];
            let level = processes[client].level;
            match assigned[client] {
                Some(ai) => {
                    let action = action_lists[client][ai];
                    let out = processes[client].step(action);
                    let cost = realized_cost(model, level, action, out.delivered, 0.0);
                    slot_cost += cost;
                    tables[client].update(
                        level,
                        ai,
                        cost,
                        processes[client].level,
                        variant,
                        schedules,
                    );
                }
                None => {
                    let idle = Action::new(0, 0);
                    let out = processes[client].step(idle);
                    slot_cost += realized_cost(model, level, idle, out.delivered, 0.0);
                }
            }
        }
        cost_sum += slot_cost;
        if t >= half {
            late_cost_sum += slot_cost;
        }
    }
    Ok(QIndexOutcome {
        tables,
        mean_cost: cost_sum / horizon as f64,
        late_mean_cost: late_cost_sum / (horizon - half) as f64,
        steps: horizon,
    })
}

// ── Two-timescale price learning ─────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct TwoTimescaleOutcome {
    pub tables: Vec<QTable>,
    pub final_price: f64,
    /// `(slot, price)` samples along the run.
    pub price_trace: Vec<(u64, f64)>,
    pub mean_power: f64,
    /// Power over the second half of the run (past the initial transient).
    pub late_mean_power: f64,
    pub mean_cost: f64,
    pub steps: u64,
}

/// Couples per-slot epsilon-greedy Q-learning (fast) with a projected price
/// ascent driven by the observed total power (slow): the price rises when
/// the clients overspend the budget and falls otherwise.
pub fn two_timescale_run(
    models: &[ClientModel],
    budget: f64,
    variant: QVariant,
    schedules: &Schedules,
    horizon: u64,
    seed: u64,
) -> Result<TwoTimescaleOutcome, LearnError> {
    schedules.validate_two_timescale()?;
    if horizon < 1 {
        return Err(LearnError::BadHorizon);
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(LearnError::BadSchedule(format!("budget {budget} must be positive")));
    }
    let n = models.len();
    let mut tables: Vec<QTable> = models.iter().map(QTable::new).collect();
    let action_lists: Vec<Vec<Action>> = models.iter().map(|m| m.actions()).collect();
    let mut processes: Vec<ClientProcess> = models
        .iter()
        .enumerate()
        .map(|(i, model)| ClientProcess::new(&ScenarioClient::iid(model.clone()), seed, i))
        .collect();
    let mut explore = ChaCha8Rng::seed_from_u64(seed);
    explore.set_stream(u64::MAX);

    let mut price = 0.0f64;
    let sample_every = (horizon / 1000).max(1);
    let mut price_trace = Vec::new();
    let mut power_sum = 0.0;
    let mut late_power_sum = 0.0;
    let mut cost_sum = 0.0;
    let half = horizon / 2;
    for t in 0..horizon {
        let mut slot_power = 0.0;
        for client in 0..n {
            let model = &models[client];
            let level = processes[client].level;
            let ai = if explore.gen::<f64>() < schedules.epsilon {
                explore.gen_range(0..action_lists[client].len())
            } else {
                tables[client].greedy(level)
            };
            let action = action_lists[client][ai];
            let out = processes[client].step(action);
            let cost = realized_cost(model, level, action, out.delivered, price);
            slot_power += model.power(action);
            cost_sum += cost;
            tables[client].update(level, ai, cost, processes[client].level, variant, schedules);
        }
        power_sum += slot_power;
        if t >= half {
            late_power_sum += slot_power;
        }
        price = (price + schedules.price_step(t) * (slot_power - budget)).max(0.0);
        if t % sample_every == 0 {
            price_trace.push((t, price));
        }
    }
    Ok(TwoTimescaleOutcome {
        tables,
        final_price: price,
        price_trace,
        mean_power: power_sum / horizon as f64,
        late_mean_power: late_power_sum / (horizon - half) as f64,
        mean_cost: cost_sum / horizon as f64,
        steps: horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ClientModel {
        ClientModel::new(
            4,
            2,
            vec![0.2, 0.4],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.5], vec![0.0, 0.8]],
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn full_rate_overwrites_and_zero_rate_is_inert() {
        let m = model();
        let mut table = QTable::new(&m);
        table.update_with_rate(2, 1, 2.0, 3, QVariant::Discounted { discount: 0.99 }, 1.0);
        assert_eq!(table.q[2][1], 2.0); // next-state min is 0
        let before = table.q.clone();
        table.update_with_rate(2, 1, 5.0, 3, QVariant::Discounted { discount: 0.99 }, 0.0);
        assert_eq!(table.q, before);
    }

    #[test]
    fn first_scheduled_update_is_a_full_overwrite() {
        // Visit count 0 gives rate (1+0)^-0.7 = 1.
        let m = model();
        let mut table = QTable::new(&m);
        table.update(1, 0, 3.5, 0, QVariant::Discounted { discount: 0.99 }, &Schedules::default());
        assert_eq!(table.q[1][0], 3.5);
        assert_eq!(table.counts[1][0], 1);
    }

    #[test]
    fn update_touches_exactly_one_entry() {
        let m = model();
        let mut table = QTable::new(&m);
        table.update(3, 2, 1.0, 2, QVariant::Relative, &Schedules::default());
        let mut touched = 0;
        for l in 0..table.levels {
            for a in 0..table.actions {
                if table.q[l][a] != 0.0 || table.counts[l][a] != 0 {
                    assert_eq!((l, a), (3, 2));
                    touched += 1;
                }
            }
        }
        assert_eq!(touched, 1);
    }

    #[test]
    fn boltzmann_probs_properties() {
        let q = vec![1.0, 3.0, 1.0, 0.5];
        // tau = 0: uniform.
        let probs = boltzmann_probs(&q, 0.0, BoltzmannConvention::SoftMin);
        for p in &probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
        // Sums to one and prefers the minimum.
        let probs = boltzmann_probs(&q, 2.0, BoltzmannConvention::SoftMin);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probs[3] > probs[1]);
        // Shift invariance.
        let shifted: Vec<f64> = q.iter().map(|x| x + 7.0).collect();
        let probs2 = boltzmann_probs(&shifted, 2.0, BoltzmannConvention::SoftMin);
        for (a, b) in probs.iter().zip(probs2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Large tau concentrates on the unique minimizer.
        let probs = boltzmann_probs(&q, 500.0, BoltzmannConvention::SoftMin);
        assert!(probs[3] > 1.0 - 1e-9);
        // Equal entries split evenly at any tau.
        let probs = boltzmann_probs(&[2.0, 2.0], 7.3, BoltzmannConvention::SoftMin);
        assert!((probs[0] - 0.5).abs() < 1e-12);
        // The literal convention prefers the maximum instead.
        let probs = boltzmann_probs(&q, 2.0, BoltzmannConvention::LiteralSoftMax);
        assert!(probs[1] > probs[3]);
    }

    #[test]
    fn schedule_validation() {
        let mut s = Schedules::default();
        assert!(s.validate_two_timescale().is_ok());
        s.price_exponent = 0.6; // not o(learning rate)
        assert!(s.validate_two_timescale().is_err());
        assert!(s.validate().is_ok());
        s.epsilon = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn runs_are_seed_deterministic() {
        let m = model();
        let s = Schedules::default();
        let a = single_client_q_run(&m, 0.5, QVariant::Relative, &s, 20_000, 11, None).unwrap();
        let b = single_client_q_run(&m, 0.5, QVariant::Relative, &s, 20_000, 11, None).unwrap();
        assert_eq!(serde_json::to_string(&a.table).unwrap(), serde_json::to_string(&b.table).unwrap());
        assert_eq!(a.mean_cost, b.mean_cost);
        let c = single_client_q_run(&m, 0.5, QVariant::Relative, &s, 20_000, 12, None).unwrap();
        assert_ne!(serde_json::to_string(&a.table).unwrap(), serde_json::to_string(&c.table).unwrap());
    }

    #[test]
    fn checkpoints_roundtrip_and_resume() {
        let m = model();
        let s = Schedules::default();
        let a = single_client_q_run(&m, 0.5, QVariant::Relative, &s, 5_000, 3, None).unwrap();
        let json = a.table.to_json();
        let restored = QTable::from_json(&json).unwrap();
        assert_eq!(restored.t, a.table.t);
        let resumed =
            single_client_q_run(&m, 0.5, QVariant::Relative, &s, 1_000, 4, Some(restored))
                .unwrap();
        assert_eq!(resumed.table.t, a.table.t + 1_000);
        // Wrong-shaped table is rejected.
        let other = ClientModel::new(6, 2, vec![0.2], vec![0.0, 1.0], vec![vec![0.0, 0.5]], 1.0)
            .unwrap();
        assert!(single_client_q_run(&other, 0.5, QVariant::Relative, &s, 10, 1, Some(a.table))
            .is_err());
    }

    #[test]
    fn visit_counts_keep_growing_under_exploration() {
        let m = model();
        let s = Schedules::default();
        let short = single_client_q_run(&m, 0.5, QVariant::Relative, &s, 30_000, 5, None).unwrap();
        let min_visits = short
            .table
            .counts
            .iter()
            .flat_map(|row| row.iter())
            .copied()
            .min()
            .unwrap();
        assert!(min_visits > 0, "some entry never visited");
    }

    #[test]
    fn unbounded_budget_keeps_price_at_zero() {
        let m = model();
        let s = Schedules::default();
        let out =
            two_timescale_run(&[m], 100.0, QVariant::Relative, &s, 20_000, 1).unwrap();
        assert_eq!(out.final_price, 0.0);
        assert!(out.price_trace.iter().all(|&(_, p)| p == 0.0));
    }

    #[test]
    fn q_index_single_client_reduces_to_softmax_sampling() {
        let m = model();
        let s = Schedules { tau_scale: 0.0, ..Schedules::default() };
        // tau = 0 throughout: uniform exploration; the run just has to
        // complete and learn every entry.
        let out = q_index_run(
            &[m],
            1,
            QVariant::Relative,
            &s,
            BoltzmannConvention::SoftMin,
            20_000,
            5,
        )
        .unwrap();
        let min_visits = out.tables[0]
            .counts
            .iter()
            .flat_map(|row| row.iter())
            .copied()
            .min()
            .unwrap();
        assert!(min_visits > 100);
    }

    #[test]
    fn q_index_respects_channel_budget_via_assignments() {
        // m = 1 with two clients: exactly one client learns per slot.
        let m1 = model();
        let m2 = model();
        let s = Schedules::default();
        let out = q_index_run(
            &[m1, m2],
            1,
            QVariant::Relative,
            &s,
            BoltzmannConvention::SoftMin,
            10_000,
            5,
        )
        .unwrap();
        let updates: u64 = out.tables.iter().map(|t| t.t).sum();
        assert_eq!(updates, 10_000);
    }
}
