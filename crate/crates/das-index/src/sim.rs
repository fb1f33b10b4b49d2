//! Slot-level Monte Carlo simulation of an access point serving N clients.
//!
//! Every client starts at a full buffer. Per slot: the scheduler picks one
//! action per client (subject to the scenario's constraint mode), deliveries
//! are Bernoulli draws, buffers advance by the success/failure maps, channel
//! states advance by their transition matrices, and realized costs are
//! recorded. A delivery means the transmission succeeded; on overflow levels
//! the packet is still dropped, matching the solvers' cost convention.
//!
//! Randomness is split per entity: client `i` draws from stream `i + 1` of a
//! counter-based generator keyed by the scenario seed, the scheduler from
//! stream 0, so adding a client never perturbs the others' draws. A
//! degenerate single-state channel consumes no channel randomness, which
//! makes single-state fading runs bit-identical to i.i.d. runs.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::model::{Action, ChannelModel, ClientModel, ModelError};
use crate::solver::PolicyTable;
use crate::whittle::{self, IndexTable};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("scenario needs at least one client")]
    EmptyScenario,

    #[error("horizon must be >= 1")]
    BadHorizon,

    #[error("scheduler broke the channel constraint at slot {slot}: {transmissions} > {allowed}")]
    ChannelBreach { slot: u64, transmissions: usize, allowed: usize },

    #[error("scheduler exceeded the peak power {limit} for client {client} at slot {slot}")]
    PeakBreach { slot: u64, client: usize, limit: f64 },

    #[error("scheduler returned {got} actions for {expected} clients")]
    ActionCount { expected: usize, got: usize },

    #[error("per-slot records were not kept for this trace")]
    MissingRecords,
}

/// Per-slot scheduling constraint of the access point.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum ConstraintMode {
    /// Long-run average power budget: enforced by pricing, only reported
    /// here, never per slot.
    AveragePower { budget: f64 },
    /// At most `count` concurrent transmissions per slot (hard).
    Channels { count: usize },
    /// No action may exceed `limit` energy (normally enforced upstream by
    /// filtering the action set at model load; breaches are hard errors).
    PeakPower { limit: f64 },
}

#[derive(Debug, Clone)]
pub struct ScenarioClient {
    pub model: ClientModel,
    pub channel: Option<ChannelModel>,
    pub initial_channel: usize,
}

impl ScenarioClient {
    pub fn iid(model: ClientModel) -> Self {
        Self { model, channel: None, initial_channel: 0 }
    }

    pub fn fading(model: ClientModel, channel: ChannelModel, initial_channel: usize) -> Self {
        Self { model, channel: Some(channel), initial_channel }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub clients: Vec<ScenarioClient>,
    pub constraint: ConstraintMode,
    pub horizon: u64,
    pub seed: u64,
    /// Keep one record per client-slot (memory scales with horizon).
    pub record_slots: bool,
}

/// Number of batches used for batch-means standard errors.
const BATCHES: u64 = 100;

#[derive(Debug, Clone, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub client: usize,
    pub level: u32,
    pub channel: usize,
    pub action: Action,
    pub delivered: bool,
    pub outage: bool,
    pub new_outage: bool,
}

/// Delivery outcome counts for one (channel, level, action) cell.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct OutcomeCount {
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClientAggregates {
    pub slots: u64,
    pub outage_slots: u64,
    pub outage_periods: u64,
    /// Successful transmissions per quality index.
    pub deliveries: Vec<u64>,
    pub transmissions: u64,
    pub power_sum: f64,
    pub disutility_sum: f64,
    /// Realized QoE cost: outage + disutility on delivery + weighted
    /// outage-period starts.
    pub qoe_cost_sum: f64,
    pub outage_period_weight: f64,
    /// Per-batch sums of realized QoE cost and power, for batch-means SEs.
    pub batch_size: u64,
    pub batch_cost: Vec<f64>,
    pub batch_power: Vec<f64>,
    /// `(channel, level, action index)` delivery counts; action indices
    /// follow the model's power-major action order.
    #[serde(serialize_with = "serialize_outcomes")]
    pub outcomes: BTreeMap<(usize, u32, usize), OutcomeCount>,
}

fn serialize_outcomes<S: serde::Serializer>(
    outcomes: &BTreeMap<(usize, u32, usize), OutcomeCount>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Cell {
        channel: usize,
        level: u32,
        action: usize,
        attempts: u64,
        successes: u64,
    }
    serializer.collect_seq(outcomes.iter().map(|(&(channel, level, action), c)| Cell {
        channel,
        level,
        action,
        attempts: c.attempts,
        successes: c.successes,
    }))
}

impl ClientAggregates {
    fn new(model: &ClientModel, horizon: u64) -> Self {
        Self {
            slots: 0,
            outage_slots: 0,
            outage_periods: 0,
            deliveries: vec![0; model.num_qualities()],
            transmissions: 0,
            power_sum: 0.0,
            disutility_sum: 0.0,
            qoe_cost_sum: 0.0,
            outage_period_weight: model.outage_period_weight(),
            batch_size: (horizon / BATCHES).max(1),
            batch_cost: Vec::new(),
            batch_power: Vec::new(),
            outcomes: BTreeMap::new(),
        }
    }

    pub fn outage_fraction(&self) -> f64 {
        self.outage_slots as f64 / self.slots as f64
    }

    pub fn outage_period_rate(&self) -> f64 {
        self.outage_periods as f64 / self.slots as f64
    }

    pub fn mean_power(&self) -> f64 {
        self.power_sum / self.slots as f64
    }

    pub fn mean_disutility(&self) -> f64 {
        self.disutility_sum / self.slots as f64
    }

    pub fn mean_qoe_cost(&self) -> f64 {
        self.qoe_cost_sum / self.slots as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimTrace {
    pub seed: u64,
    pub horizon: u64,
    /// Every client starts with a full buffer; recorded per client.
    pub initial_levels: Vec<u32>,
    pub per_client: Vec<ClientAggregates>,
    pub records: Option<Vec<SlotRecord>>,
}

/// Per-slot action source. `levels` and `channels` give each client's state
/// at the start of the slot; the scheduler RNG is its own stream.
pub trait Scheduler {
    fn select(
        &mut self,
        slot: u64,
        levels: &[u32],
        channels: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Vec<Action>;
}

/// Applies a fixed per-client policy table (channel-aware when the table
/// has channel columns).
pub struct FixedPolicies {
    pub policies: Vec<PolicyTable>,
}

impl Scheduler for FixedPolicies {
    fn select(
        &mut self,
        _slot: u64,
        levels: &[u32],
        channels: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> Vec<Action> {
        self.policies
            .iter()
            .zip(levels.iter().zip(channels.iter()))
            .map(|(policy, (&l, &c))| {
                if policy.num_channels() > 1 {
                    policy.action_at(l, c)
                } else {
                    policy.action(l)
                }
            })
            .collect()
    }
}

/// Top-M activation by per-state indices; activated clients use their fixed
/// transmit action, everyone else idles.
pub struct WhittleScheduler {
    pub tables: Vec<IndexTable>,
    pub transmit: Vec<Action>,
    pub channels: usize,
}

impl Scheduler for WhittleScheduler {
    fn select(
        &mut self,
        _slot: u64,
        levels: &[u32],
        _channels: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> Vec<Action> {
        let picked = whittle::top_m_schedule(&self.tables, levels, self.channels);
        let mut actions: Vec<Action> = self
            .transmit
            .iter()
            .map(|a| Action::new(a.quality, 0))
            .collect();
        for client in picked {
            actions[client] = self.transmit[client];
        }
        actions
    }
}

/// One-step-lookahead index scheduling over supplied value functions.
pub struct SeparableIndexScheduler {
    pub models: Vec<ClientModel>,
    pub values: Vec<Vec<f64>>,
    pub channels: usize,
}

impl Scheduler for SeparableIndexScheduler {
    fn select(
        &mut self,
        _slot: u64,
        levels: &[u32],
        _channels: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> Vec<Action> {
        whittle::separable_value_index(&self.models, &self.values, levels, self.channels)
            .into_iter()
            .map(|choice| choice.unwrap_or(Action::new(0, 0)))
            .collect()
    }
}

/// One client's live state inside a run; also reused by the learning loops.
pub(crate) struct ClientProcess {
    pub model: ClientModel,
    channel: ChannelModel,
    pub level: u32,
    pub channel_state: usize,
    prev_outage: bool,
    rng: ChaCha8Rng,
}

pub(crate) struct StepOutcome {
    pub delivered: bool,
    pub outage: bool,
    pub new_outage: bool,
}

impl ClientProcess {
    pub fn new(client: &ScenarioClient, seed: u64, index: usize) -> Self {
        let channel = client
            .channel
            .clone()
            .unwrap_or_else(|| ChannelModel::degenerate(&client.model));
        let initial_channel = client.initial_channel.min(channel.num_states() - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        Self {
            model: client.model.clone(),
            channel,
            level: client.model.buffer_capacity(),
            channel_state: initial_channel,
            prev_outage: false,
            rng,
        }
    }

    pub fn success_prob(&self, action: Action) -> f64 {
        self.channel
            .success_prob(&self.model, self.channel_state, action)
            .expect("validated model/action")
    }

    /// Advances one slot under `action`. The outage flags describe the slot
    /// being played (the pre-transition state).
    pub fn step(&mut self, action: Action) -> StepOutcome {
        let outage = self.level == 0;
        let new_outage = outage && !self.prev_outage;
        let p = self.success_prob(action);
        let delivered = self.rng.gen::<f64>() < p;
        self.level = if delivered {
            self.model.successor_success_unchecked(self.level)
        } else {
            self.level.saturating_sub(1)
        };
        if self.channel.num_states() > 1 {
            let row = self.channel.transition_row(self.channel_state);
            let draw = self.rng.gen::<f64>();
            let mut acc = 0.0;
            let mut next = row.len() - 1;
            for (c, &w) in row.iter().enumerate() {
                acc += w;
                if draw < acc {
                    next = c;
                    break;
                }
            }
            self.channel_state = next;
        }
        self.prev_outage = outage;
        StepOutcome { delivered, outage, new_outage }
    }
}

fn scheduler_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Index of `action` in the model's power-major action order.
pub fn action_index(model: &ClientModel, action: Action) -> usize {
    action.power * model.num_qualities() + action.quality
}

fn run_engine(scenario: &Scenario, scheduler: &mut dyn Scheduler) -> Result<SimTrace, SimError> {
    if scenario.clients.is_empty() {
        return Err(SimError::EmptyScenario);
    }
    if scenario.horizon < 1 {
        return Err(SimError::BadHorizon);
    }
    let n = scenario.clients.len();
    let mut processes: Vec<ClientProcess> = scenario
        .clients
        .iter()
        .enumerate()
        .map(|(i, c)| ClientProcess::new(c, scenario.seed, i))
        .collect();
    let mut aggregates: Vec<ClientAggregates> = scenario
        .clients
        .iter()
        .map(|c| ClientAggregates::new(&c.model, scenario.horizon))
        .collect();
    let mut sched_rng = scheduler_rng(scenario.seed);
    let mut records = scenario.record_slots.then(Vec::new);
    let batch_size = aggregates[0].batch_size;
    let mut batch_cost = vec![0.0f64; n];
    let mut batch_power = vec![0.0f64; n];

    let mut levels = vec![0u32; n];
    let mut channels = vec![0usize; n];
    for slot in 0..scenario.horizon {
        for (i, p) in processes.iter().enumerate() {
            levels[i] = p.level;
            channels[i] = p.channel_state;
        }
        let actions = scheduler.select(slot, &levels, &channels, &mut sched_rng);
        if actions.len() != n {
            return Err(SimError::ActionCount { expected: n, got: actions.len() });
        }
        match scenario.constraint {
            ConstraintMode::Channels { count } => {
                let transmissions = actions.iter().filter(|a| !a.is_idle()).count();
                if transmissions > count {
                    return Err(SimError::ChannelBreach { slot, transmissions, allowed: count });
                }
            }
            ConstraintMode::PeakPower { limit } => {
                for (i, (a, p)) in actions.iter().zip(processes.iter()).enumerate() {
                    p.model.validate_action(*a)?;
                    if p.model.power(*a) > limit {
                        return Err(SimError::PeakBreach { slot, client: i, limit });
                    }
                }
            }
            ConstraintMode::AveragePower { .. } => {}
        }
        for (i, (process, &action)) in processes.iter_mut().zip(actions.iter()).enumerate() {
            process.model.validate_action(action)?;
            let level = process.level;
            let channel = process.channel_state;
            let out = process.step(action);
            let agg = &mut aggregates[i];
            let power = process.model.power(action);
            let disutility = if out.delivered { process.model.disutility(action) } else { 0.0 };
            let realized = (out.outage as u64 as f64)
                + disutility
                + (out.new_outage as u64 as f64) * agg.outage_period_weight;
            agg.slots += 1;
            agg.outage_slots += out.outage as u64;
            agg.outage_periods += out.new_outage as u64;
            if out.delivered {
                agg.deliveries[action.quality] += 1;
            }
            agg.transmissions += (!action.is_idle()) as u64;
            agg.power_sum += power;
            agg.disutility_sum += disutility;
            agg.qoe_cost_sum += realized;
            let cell = agg
                .outcomes
                .entry((channel, level, action_index(&process.model, action)))
                .or_default();
            cell.attempts += 1;
            cell.successes += out.delivered as u64;
            batch_cost[i] += realized;
            batch_power[i] += power;
            if let Some(records) = records.as_mut() {
                records.push(SlotRecord {
                    slot,
                    client: i,
                    level,
                    channel,
                    action,
                    delivered: out.delivered,
                    outage: out.outage,
                    new_outage: out.new_outage,
                });
            }
        }
        if (slot + 1) % batch_size == 0 {
            for i in 0..n {
                aggregates[i].batch_cost.push(batch_cost[i]);
                aggregates[i].batch_power.push(batch_power[i]);
                batch_cost[i] = 0.0;
                batch_power[i] = 0.0;
            }
        }
    }
    Ok(SimTrace {
        seed: scenario.seed,
        horizon: scenario.horizon,
        initial_levels: scenario.clients.iter().map(|c| c.model.buffer_capacity()).collect(),
        per_client: aggregates,
        records,
    })
}

/// Simulates on i.i.d. channels; any attached channel models are ignored.
pub fn run(scenario: &Scenario, scheduler: &mut dyn Scheduler) -> Result<SimTrace, SimError> {
    let stripped = Scenario {
        clients: scenario
            .clients
            .iter()
            .map(|c| ScenarioClient::iid(c.model.clone()))
            .collect(),
        ..scenario.clone()
    };
    run_engine(&stripped, scheduler)
}

/// Simulates with Markov channel evolution; clients without a channel model
/// get the degenerate single-state channel (identical draws to [`run`]).
pub fn run_fading(scenario: &Scenario, scheduler: &mut dyn Scheduler) -> Result<SimTrace, SimError> {
    run_engine(scenario, scheduler)
}

// ── Metrics ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct ClientMetrics {
    pub outage_fraction: f64,
    pub outage_period_rate: f64,
    pub mean_quality_disutility: f64,
    pub mean_power: f64,
    /// `outage_fraction + mean_quality_disutility + weight * period_rate`.
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub schema: &'static str,
    pub seed: u64,
    pub horizon: u64,
    pub per_client: Vec<ClientMetrics>,
    pub total_objective: f64,
    pub total_power: f64,
}

/// Aggregate QoE metrics of a trace; deterministic given the trace.
pub fn metrics_report(trace: &SimTrace) -> MetricsReport {
    let per_client: Vec<ClientMetrics> = trace
        .per_client
        .iter()
        .map(|a| {
            let objective = a.outage_fraction()
                + a.mean_disutility()
                + a.outage_period_weight * a.outage_period_rate();
            ClientMetrics {
                outage_fraction: a.outage_fraction(),
                outage_period_rate: a.outage_period_rate(),
                mean_quality_disutility: a.mean_disutility(),
                mean_power: a.mean_power(),
                objective,
            }
        })
        .collect();
    MetricsReport {
        schema: "das-index.metrics.v1",
        seed: trace.seed,
        horizon: trace.horizon,
        total_objective: per_client.iter().map(|c| c.objective).sum(),
        total_power: per_client.iter().map(|c| c.mean_power).sum(),
        per_client,
    }
}

/// CSV of per-slot records, one row per client-slot, with a versioned header.
pub fn trace_csv(trace: &SimTrace) -> Result<String, SimError> {
    let records = trace.records.as_ref().ok_or(SimError::MissingRecords)?;
    let mut out = String::new();
    out.push_str("# schema=das-index.trace.v1\n");
    out.push_str(&format!(
        "# seed={} horizon={} initial_levels={:?}\n",
        trace.seed, trace.horizon, trace.initial_levels
    ));
    out.push_str("slot,client,level,channel,quality,power,delivered,outage,new_outage\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.slot,
            r.client,
            r.level,
            r.channel,
            r.action.quality,
            r.action.power,
            r.delivered as u8,
            r.outage as u8,
            r.new_outage as u8
        ));
    }
    Ok(out)
}

// ── Statistical helpers ──────────────────────────────────────────────────

/// Mean and batch-means standard error of a per-slot average, given batch
/// sums over equal-size batches. Batch means absorb the chain's short-range
/// dependence, so +-3 SE is an honest band for long runs.
pub fn batch_mean_se(batch_sums: &[f64], batch_size: u64) -> (f64, f64) {
    let n = batch_sums.len() as f64;
    let means: Vec<f64> = batch_sums.iter().map(|s| s / batch_size as f64).collect();
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub cells: usize,
    pub critical: f64,
    pub passed: bool,
}

/// Goodness-of-fit of observed delivery frequencies against the model's
/// success probabilities. Sums the per-cell binomial z^2 over every
/// (channel-state, level, action) cell with at least `min_attempts` visits
/// and a nondegenerate probability, and compares against the chi-squared
/// quantile at `level` (e.g. 0.999).
pub fn delivery_chi_square(
    aggregates: &ClientAggregates,
    client: &ScenarioClient,
    min_attempts: u64,
    level: f64,
) -> ChiSquareReport {
    let model = &client.model;
    let actions = model.actions();
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&(channel, _level, ai), count) in &aggregates.outcomes {
        if count.attempts < min_attempts {
            continue;
        }
        let action = actions[ai];
        let p = match &client.channel {
            Some(ch) => ch.success_prob(model, channel, action).expect("validated"),
            None => model.success_prob(action),
        };
        if p <= 0.0 || p >= 1.0 {
            continue;
        }
        let n = count.attempts as f64;
        let expected = n * p;
        let z2 = (count.successes as f64 - expected).powi(2) / (expected * (1.0 - p));
        statistic += z2;
        cells += 1;
    }
    if cells == 0 {
        return ChiSquareReport { statistic: 0.0, cells: 0, critical: 0.0, passed: true };
    }
    let dist = ChiSquared::new(cells as f64).expect("positive dof");
    let critical = dist.inverse_cdf(level);
    ChiSquareReport { statistic, cells, critical, passed: statistic <= critical }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(p: f64) -> ClientModel {
        ClientModel::new(
            4,
            2,
            vec![0.2],
            vec![0.0, 1.0],
            vec![vec![0.0, p]],
            1.5,
        )
        .unwrap()
    }

    fn scenario(p: f64, horizon: u64, seed: u64) -> Scenario {
        Scenario {
            clients: vec![ScenarioClient::iid(model(p))],
            constraint: ConstraintMode::AveragePower { budget: 1.0 },
            horizon,
            seed,
            record_slots: true,
        }
    }

    fn always_transmit(levels: usize) -> FixedPolicies {
        FixedPolicies { policies: vec![PolicyTable::constant(levels, Action::new(0, 1))] }
    }

    fn never_transmit(levels: usize) -> FixedPolicies {
        FixedPolicies { policies: vec![PolicyTable::constant(levels, Action::new(0, 0))] }
    }

    #[test]
    fn certain_delivery_never_starves() {
        let s = scenario(1.0, 5000, 7);
        let trace = run(&s, &mut always_transmit(5)).unwrap();
        assert_eq!(trace.per_client[0].outage_slots, 0);
        assert_eq!(trace.per_client[0].outage_periods, 0);
    }

    #[test]
    fn idle_policy_has_exactly_one_outage_period() {
        let s = scenario(0.9, 10_000, 7);
        let trace = run(&s, &mut never_transmit(5)).unwrap();
        let a = &trace.per_client[0];
        assert_eq!(a.outage_periods, 1);
        // Buffer drains in B slots, outage ever after.
        assert_eq!(a.outage_slots, 10_000 - 4);
        assert!(a.outage_fraction() > 0.999);
        assert_eq!(a.power_sum, 0.0);
    }

    #[test]
    fn deterministic_given_seed_and_different_across_seeds() {
        let s = scenario(0.6, 2000, 42);
        let t1 = run(&s, &mut always_transmit(5)).unwrap();
        let t2 = run(&s, &mut always_transmit(5)).unwrap();
        assert_eq!(
            serde_json::to_string(&t1).unwrap(),
            serde_json::to_string(&t2).unwrap()
        );
        let t3 = run(&scenario(0.6, 2000, 43), &mut always_transmit(5)).unwrap();
        assert_ne!(
            serde_json::to_string(&t1).unwrap(),
            serde_json::to_string(&t3).unwrap()
        );
    }

    #[test]
    fn adding_a_client_does_not_perturb_existing_draws() {
        let one = scenario(0.6, 2000, 9);
        let t1 = run(&one, &mut always_transmit(5)).unwrap();
        let mut two = scenario(0.6, 2000, 9);
        two.clients.push(ScenarioClient::iid(model(0.4)));
        let mut sched = FixedPolicies {
            policies: vec![
                PolicyTable::constant(5, Action::new(0, 1)),
                PolicyTable::constant(5, Action::new(0, 1)),
            ],
        };
        let t2 = run(&two, &mut sched).unwrap();
        assert_eq!(
            serde_json::to_string(&t1.per_client[0]).unwrap(),
            serde_json::to_string(&t2.per_client[0]).unwrap()
        );
    }

    #[test]
    fn degenerate_channel_run_is_bit_identical_to_iid() {
        let mut s = scenario(0.6, 3000, 11);
        let iid = run(&s, &mut always_transmit(5)).unwrap();
        s.clients[0].channel = Some(ChannelModel::degenerate(&s.clients[0].model));
        let faded = run_fading(&s, &mut always_transmit(5)).unwrap();
        assert_eq!(
            serde_json::to_string(&iid).unwrap(),
            serde_json::to_string(&faded).unwrap()
        );
    }

    #[test]
    fn frozen_identity_channel_equals_iid_with_that_table() {
        // Identity transitions, start in state 1: success probability is
        // state 1's forever.
        let base = model(0.3);
        let table0 = vec![vec![0.0, 0.3]];
        let table1 = vec![vec![0.0, 0.8]];
        let ch = ChannelModel::new(
            &base,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![table0, table1],
        )
        .unwrap();
        let mut s = scenario(0.3, 5000, 13);
        s.clients[0] = ScenarioClient::fading(base, ch, 1);
        let trace = run_fading(&s, &mut always_transmit(5)).unwrap();
        let a = &trace.per_client[0];
        let total: u64 = a.deliveries.iter().sum();
        let rate = total as f64 / a.transmissions as f64;
        assert!((rate - 0.8).abs() < 0.02, "delivery rate {rate}");
        for &(c, _, _) in a.outcomes.keys() {
            assert_eq!(c, 1);
        }
    }

    #[test]
    fn channel_constraint_breach_is_fatal() {
        let mut s = scenario(0.6, 100, 5);
        s.clients.push(ScenarioClient::iid(model(0.6)));
        s.constraint = ConstraintMode::Channels { count: 1 };
        let mut sched = FixedPolicies {
            policies: vec![
                PolicyTable::constant(5, Action::new(0, 1)),
                PolicyTable::constant(5, Action::new(0, 1)),
            ],
        };
        assert!(matches!(
            run(&s, &mut sched),
            Err(SimError::ChannelBreach { transmissions: 2, allowed: 1, .. })
        ));
    }

    #[test]
    fn whittle_scheduler_respects_channel_count() {
        let mut s = scenario(0.6, 2000, 5);
        s.clients.push(ScenarioClient::iid(model(0.5)));
        s.constraint = ConstraintMode::Channels { count: 1 };
        let tables = vec![
            IndexTable { indices: vec![3.0, 2.0, 1.0, 0.0, 0.0] },
            IndexTable { indices: vec![2.5, 1.5, 0.5, 0.0, 0.0] },
        ];
        let mut sched = WhittleScheduler {
            tables,
            transmit: vec![Action::new(0, 1), Action::new(0, 1)],
            channels: 1,
        };
        let trace = run(&s, &mut sched).unwrap();
        // The run completing proves the constraint held every slot.
        assert_eq!(trace.per_client.len(), 2);
    }

    #[test]
    fn outage_period_counting_matches_indicator_rule() {
        // B=1, T=1, transmit only at level 0 with certain delivery:
        // levels 1,0,1,0,... so outages alternate and every outage slot
        // starts a fresh period.
        let m = ClientModel::new(1, 1, vec![0.1], vec![0.0, 1.0], vec![vec![0.0, 1.0]], 2.0)
            .unwrap();
        let mut policy = PolicyTable::constant(2, Action::new(0, 0));
        policy.set_action(0, 0, Action::new(0, 1));
        let s = Scenario {
            clients: vec![ScenarioClient::iid(m)],
            constraint: ConstraintMode::AveragePower { budget: 1.0 },
            horizon: 10,
            seed: 1,
            record_slots: true,
        };
        let trace = run(&s, &mut FixedPolicies { policies: vec![policy] }).unwrap();
        let a = &trace.per_client[0];
        assert_eq!(a.outage_slots, 5);
        assert_eq!(a.outage_periods, 5);
        assert!((a.outage_fraction() - 0.5).abs() < 1e-12);
        // Recomputing aggregates from the records reproduces them exactly.
        let records = trace.records.as_ref().unwrap();
        let outages = records.iter().filter(|r| r.outage).count() as u64;
        let periods = records.iter().filter(|r| r.new_outage).count() as u64;
        assert_eq!(outages, a.outage_slots);
        assert_eq!(periods, a.outage_periods);
    }

    #[test]
    fn metrics_objective_matches_realized_cost() {
        let s = scenario(0.55, 20_000, 3);
        let trace = run(&s, &mut always_transmit(5)).unwrap();
        let report = metrics_report(&trace);
        let a = &trace.per_client[0];
        assert!((report.per_client[0].objective - a.mean_qoe_cost()).abs() < 1e-12);
        // Batch sums add up to the totals.
        let batch_total: f64 = a.batch_cost.iter().sum();
        assert!((batch_total - a.qoe_cost_sum).abs() < 1e-6);
    }

    #[test]
    fn empirical_frequencies_pass_chi_square() {
        let s = scenario(0.55, 200_000, 17);
        let trace = run(&s, &mut always_transmit(5)).unwrap();
        let report = delivery_chi_square(&trace.per_client[0], &s.clients[0], 100, 0.999);
        assert!(report.cells > 0);
        assert!(report.passed, "chi2 {} > {}", report.statistic, report.critical);
    }

    #[test]
    fn trace_csv_has_versioned_header() {
        let s = scenario(0.6, 5, 1);
        let trace = run(&s, &mut always_transmit(5)).unwrap();
        let csv = trace_csv(&trace).unwrap();
        assert!(csv.starts_with("# schema=das-index.trace.v1\n"));
        assert_eq!(csv.lines().count(), 2 + 1 + 5);
        let mut no_records = trace.clone();
        no_records.records = None;
        assert!(trace_csv(&no_records).is_err());
    }
}
