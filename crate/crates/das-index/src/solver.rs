//! Exact single-client solvers and structural verifiers.
//!
//! Finite-horizon backward induction, discounted value iteration, and
//! average-cost relative value iteration over the buffer chain (optionally
//! augmented with a Markov channel state), plus:
//!
//! - threshold-structure and stage-monotonicity verifiers for the computed
//!   policies and stage gap functions,
//! - a brute-force oracle that enumerates every deterministic stationary
//!   policy and evaluates it exactly by linear solve,
//! - a product-space solver for small multi-client instances, used to
//!   validate the price decomposition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{self, FiniteMdp};
use crate::model::{Action, ChannelModel, ClientModel, ModelError};

/// Default stopping tolerance for both solvers.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Sweep cap for both solvers; exceeding it signals misconfiguration.
pub const MAX_SWEEPS: usize = 1_000_000;
/// Two action values within this of each other count as tied during greedy
/// extraction; ties resolve to lowest power, then lowest quality index.
pub const TIE_EPS: f64 = 1e-9;
/// Slack for the weak inequalities in the structure verifiers.
pub const STRUCTURE_SLACK: f64 = 1e-9;

/// Policy-enumeration cap for the brute-force oracle.
const MAX_ENUMERATED_POLICIES: f64 = 1e7;
/// Joint state-space cap for the product solver.
const MAX_PRODUCT_STATES: usize = 1_000_000;
const MAX_PRODUCT_ACTIONS: usize = 100_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("discount factor must lie in (0,1), got {0}")]
    BadDiscount(f64),

    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),

    #[error("horizon must be >= 1")]
    BadHorizon,

    #[error("no convergence within {iterations} sweeps; check the model and tolerances")]
    NoConvergence { iterations: usize },

    #[error("singular linear solve: {detail}")]
    SingularChain { detail: String },

    #[error("instance too large: {detail}")]
    InstanceTooLarge { detail: String },

    #[error("policy shape mismatch: expected {expected} states, got {got}")]
    PolicyShape { expected: usize, got: usize },
}

// ── Policy and result types ──────────────────────────────────────────────

/// A deterministic stationary policy: one action per state.
///
/// The state space is `{0..B}` for the i.i.d. channel and
/// `{0..B} x {0..C-1}` for a fading channel; entries are stored
/// channel-major (`index = channel * (B+1) + level`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    levels: usize,
    channels: usize,
    actions: Vec<Action>,
}

impl PolicyTable {
    pub fn new_iid(actions: Vec<Action>) -> Self {
        Self { levels: actions.len(), channels: 1, actions }
    }

    pub fn new_fading(levels: usize, channels: usize, actions: Vec<Action>) -> Self {
        assert_eq!(actions.len(), levels * channels, "policy table shape mismatch");
        Self { levels, channels, actions }
    }

    /// Constant policy taking `action` everywhere.
    pub fn constant(levels: usize, action: Action) -> Self {
        Self::new_iid(vec![action; levels])
    }

    pub fn num_levels(&self) -> usize {
        self.levels
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn action(&self, level: u32) -> Action {
        assert_eq!(self.channels, 1, "use action_at for channel-dependent policies");
        self.actions[level as usize]
    }

    pub fn action_at(&self, level: u32, channel: usize) -> Action {
        self.actions[channel * self.levels + level as usize]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn set_action(&mut self, level: u32, channel: usize, action: Action) {
        self.actions[channel * self.levels + level as usize] = action;
    }
}

/// Output of a single-client solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Discounted values, or the average-cost bias normalized to `h(0) = 0`.
    pub values: Vec<f64>,
    /// Average cost per slot; `None` for discounted solves.
    pub gain: Option<f64>,
    pub policy: PolicyTable,
    pub iterations: usize,
    /// Final sup-norm change (discounted) or span of the Bellman update
    /// (average cost).
    pub residual: f64,
}

/// The per-stage gap driving the threshold structure:
/// `D_s(x) = 1{x=1} w_O + beta (V^{s-1}(F(x)) - V^{s-1}(S(x)))`
/// on the accepting region `x in {1..B-T+1}`.
///
/// Nonincreasing in `x` for valid models; [`verify_d_monotone`] checks this
/// rather than assuming it.
#[derive(Debug, Clone)]
pub struct DFunction {
    pub stage: usize,
    pub discount: f64,
    /// `values[i]` is `D(i + 1)`, covering `x = 1..=B-T+1`.
    pub values: Vec<f64>,
}

impl DFunction {
    pub fn at(&self, level: u32) -> f64 {
        self.values[level as usize - 1]
    }
}

// ── Compilation to the generic MDP form ──────────────────────────────────

/// Actions ordered lowest power first, then lowest quality index, so that
/// first-minimizer tie-breaking picks the cheapest representative.
pub(crate) fn ordered_actions(model: &ClientModel) -> Vec<Action> {
    model.actions()
}

pub(crate) fn compile_iid(model: &ClientModel, price: f64) -> FiniteMdp {
    let actions = ordered_actions(model);
    let levels = model.num_levels();
    let mut cost = vec![vec![0.0; actions.len()]; levels];
    let mut trans = vec![vec![Vec::new(); actions.len()]; levels];
    for l in 0..levels {
        let level = l as u32;
        for (ai, &a) in actions.iter().enumerate() {
            let p = model.success_prob(a);
            cost[l][ai] = model.step_cost_with_prob(level, a, price, p);
            let up = model.successor_success_unchecked(level) as usize;
            let down = level.saturating_sub(1) as usize;
            trans[l][ai] = if up == down {
                vec![(down, 1.0)]
            } else {
                let mut v = Vec::with_capacity(2);
                if p > 0.0 {
                    v.push((up, p));
                }
                if p < 1.0 {
                    v.push((down, 1.0 - p));
                }
                v
            };
        }
    }
    FiniteMdp { cost, trans }
}

/// Buffer chain augmented with the channel state, indexed channel-major.
pub(crate) fn compile_fading(model: &ClientModel, channel: &ChannelModel, price: f64) -> FiniteMdp {
    let actions = ordered_actions(model);
    let levels = model.num_levels();
    let states = levels * channel.num_states();
    let mut cost = vec![vec![0.0; actions.len()]; states];
    let mut trans = vec![vec![Vec::new(); actions.len()]; states];
    for c in 0..channel.num_states() {
        let row = channel.transition_row(c);
        for l in 0..levels {
            let level = l as u32;
            let s = c * levels + l;
            for (ai, &a) in actions.iter().enumerate() {
                let p = channel
                    .success_prob(model, c, a)
                    .expect("validated channel/action");
                cost[s][ai] = model.step_cost_with_prob(level, a, price, p);
                let up = model.successor_success_unchecked(level) as usize;
                let down = level.saturating_sub(1) as usize;
                let mut v = Vec::new();
                for (cn, &pi) in row.iter().enumerate() {
                    if pi == 0.0 {
                        continue;
                    }
                    if up == down {
                        v.push((cn * levels + down, pi));
                    } else {
                        if p > 0.0 {
                            v.push((cn * levels + up, p * pi));
                        }
                        if p < 1.0 {
                            v.push((cn * levels + down, (1.0 - p) * pi));
                        }
                    }
                }
                trans[s][ai] = v;
            }
        }
    }
    FiniteMdp { cost, trans }
}

fn policy_from_indices(model: &ClientModel, channels: usize, indices: &[usize]) -> PolicyTable {
    let actions = ordered_actions(model);
    PolicyTable::new_fading(
        model.num_levels(),
        channels,
        indices.iter().map(|&i| actions[i]).collect(),
    )
}

fn check_price(price: f64) -> Result<(), SolveError> {
    if !(price.is_finite() && price >= 0.0) {
        return Err(ModelError::NegativePrice(price).into());
    }
    Ok(())
}

// ── Single-client solvers ────────────────────────────────────────────────

/// Finite-horizon backward induction from `V^0 = 0`.
///
/// Returns the stage values `V^0..V^s` and the stage gap functions
/// `D_1..D_s`.
pub fn backward_induction(
    model: &ClientModel,
    price: f64,
    discount: f64,
    horizon: usize,
) -> Result<(Vec<Vec<f64>>, Vec<DFunction>), SolveError> {
    check_price(price)?;
    if !(discount > 0.0 && discount < 1.0) {
        return Err(SolveError::BadDiscount(discount));
    }
    if horizon < 1 {
        return Err(SolveError::BadHorizon);
    }
    let mdp = compile_iid(model, price);
    let levels = model.num_levels();
    let accept = model.accept_limit() as usize;
    let mut stages = Vec::with_capacity(horizon + 1);
    let mut gaps = Vec::with_capacity(horizon);
    stages.push(vec![0.0; levels]);
    for stage in 1..=horizon {
        let prev = stages.last().unwrap();
        let mut d = Vec::with_capacity(accept);
        for x in 1..=accept {
            let level = x as u32;
            let up = model.successor_success_unchecked(level) as usize;
            let down = (level - 1) as usize;
            let period = if x == 1 { model.outage_period_weight() } else { 0.0 };
            d.push(period + discount * (prev[down] - prev[up]));
        }
        gaps.push(DFunction { stage, discount, values: d });
        let next = (0..levels)
            .map(|s| {
                mdp.q_values(s, discount, prev)
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        stages.push(next);
    }
    Ok((stages, gaps))
}

/// Infinite-horizon discounted solve; stops once the sup-norm sweep change
/// is below `tol (1-beta) / (2 beta)`, so values are accurate to `tol / 2`.
pub fn discounted_value_iteration(
    model: &ClientModel,
    price: f64,
    discount: f64,
    tol: f64,
) -> Result<SolveResult, SolveError> {
    check_price(price)?;
    let mdp = compile_iid(model, price);
    let out = mdp::value_iteration(&mdp, discount, tol, MAX_SWEEPS, TIE_EPS)?;
    Ok(SolveResult {
        values: out.values,
        gain: None,
        policy: policy_from_indices(model, 1, &out.policy),
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// Average-cost solve by relative value iteration with reference state 0.
pub fn average_cost_solve(
    model: &ClientModel,
    price: f64,
    tol: f64,
) -> Result<SolveResult, SolveError> {
    check_price(price)?;
    let mdp = compile_iid(model, price);
    let out = mdp::relative_value_iteration(&mdp, tol, MAX_SWEEPS, TIE_EPS)?;
    Ok(SolveResult {
        values: out.values,
        gain: out.gain,
        policy: policy_from_indices(model, 1, &out.policy),
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// Average-cost solve on the channel-augmented state space; the policy may
/// condition on the channel state.
pub fn average_cost_solve_fading(
    model: &ClientModel,
    channel: &ChannelModel,
    price: f64,
    tol: f64,
) -> Result<SolveResult, SolveError> {
    check_price(price)?;
    let mdp = compile_fading(model, channel, price);
    let out = mdp::relative_value_iteration(&mdp, tol, MAX_SWEEPS, TIE_EPS)?;
    Ok(SolveResult {
        values: out.values,
        gain: out.gain,
        policy: policy_from_indices(model, channel.num_states(), &out.policy),
        iterations: out.iterations,
        residual: out.residual,
    })
}

// ── Structure verifiers ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThresholdClause {
    /// Lower state switched to a strictly lower quality index at the same
    /// power (higher video quality on a lower buffer).
    QualityDrop,
    /// Lower state switched to a strictly lower power at the same quality.
    PowerDrop,
    /// Success probability not nonincreasing in the buffer level.
    SuccessProbability,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdViolation {
    pub upper_state: u32,
    pub lower_state: u32,
    pub clause: ThresholdClause,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub passed: bool,
    pub violations: Vec<ThresholdViolation>,
}

/// Checks the threshold property of `policy` on the accepting region
/// `{1..B-T+1}`: as the buffer drops the policy may not switch to a lower
/// quality index at fixed power, nor to a lower power at fixed quality, and
/// the delivery probability may not decrease (weak inequalities with
/// [`STRUCTURE_SLACK`]).
pub fn verify_threshold(policy: &PolicyTable, model: &ClientModel) -> ThresholdReport {
    let accept = model.accept_limit();
    let mut violations = Vec::new();
    for upper in 1..=accept {
        let ux = policy.action(upper);
        for lower in 1..upper {
            let uy = policy.action(lower);
            if uy.power == ux.power && uy.quality < ux.quality {
                violations.push(ThresholdViolation {
                    upper_state: upper,
                    lower_state: lower,
                    clause: ThresholdClause::QualityDrop,
                });
            }
            if uy.quality == ux.quality && model.power(uy) < model.power(ux) {
                violations.push(ThresholdViolation {
                    upper_state: upper,
                    lower_state: lower,
                    clause: ThresholdClause::PowerDrop,
                });
            }
            if model.success_prob(uy) < model.success_prob(ux) - STRUCTURE_SLACK {
                violations.push(ThresholdViolation {
                    upper_state: upper,
                    lower_state: lower,
                    clause: ThresholdClause::SuccessProbability,
                });
            }
        }
    }
    ThresholdReport { passed: violations.is_empty(), violations }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub passed: bool,
    /// First `x` with `D(x) < D(x+1) - slack`, if any.
    pub first_violation: Option<u32>,
}

/// Checks that a stage gap function is nonincreasing over its domain.
pub fn verify_d_monotone(d: &DFunction) -> MonotoneReport {
    for i in 0..d.values.len().saturating_sub(1) {
        if d.values[i] < d.values[i + 1] - STRUCTURE_SLACK {
            return MonotoneReport { passed: false, first_violation: Some(i as u32 + 1) };
        }
    }
    MonotoneReport { passed: true, first_violation: None }
}

// ── Brute-force oracles ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    Discounted(f64),
    AverageCost,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Discounted mode: pointwise minimum over all deterministic stationary
    /// policies. Average mode: bias-free copy of the best gain per state is
    /// meaningless, so this holds the best policy's values instead.
    pub values: Vec<f64>,
    /// Average mode: best gain over all policies, evaluated from the full
    /// buffer. `None` in discounted mode.
    pub gain: Option<f64>,
    pub policy: PolicyTable,
    pub policies_evaluated: usize,
}

/// Exact optimum over all deterministic stationary policies by per-policy
/// linear-system evaluation. Only feasible for tiny instances; the policy
/// count `|A|^(B+1)` is capped.
pub fn enumerate_policies_oracle(
    model: &ClientModel,
    price: f64,
    mode: SolveMode,
) -> Result<OracleResult, SolveError> {
    check_price(price)?;
    if let SolveMode::Discounted(beta) = mode {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(SolveError::BadDiscount(beta));
        }
    }
    let mdp = compile_iid(model, price);
    let states = mdp.n_states();
    let actions = mdp.n_actions();
    let count = (actions as f64).powi(states as i32);
    if count > MAX_ENUMERATED_POLICIES {
        return Err(SolveError::InstanceTooLarge {
            detail: format!("{actions}^{states} policies exceed the enumeration cap"),
        });
    }
    let start = states - 1; // full buffer
    let mut assignment = vec![0usize; states];
    let mut best_values: Option<Vec<f64>> = None;
    let mut best_gain = f64::INFINITY;
    let mut best_policy = assignment.clone();
    let mut evaluated = 0usize;
    loop {
        evaluated += 1;
        match mode {
            SolveMode::Discounted(beta) => {
                let v = mdp::policy_value_discounted(&mdp, &assignment, beta)?;
                match &mut best_values {
                    None => {
                        best_values = Some(v);
                        best_policy = assignment.clone();
                    }
                    Some(best) => {
                        // Track the pointwise minimum; remember the policy
                        // that is best from the full buffer.
                        if v[start] < best[start] {
                            best_policy = assignment.clone();
                        }
                        for (b, x) in best.iter_mut().zip(v.iter()) {
                            *b = b.min(*x);
                        }
                    }
                }
            }
            SolveMode::AverageCost => {
                let dist = mdp::stationary_from(&mdp, &assignment, start)?;
                let gain: f64 = dist
                    .iter()
                    .enumerate()
                    .map(|(s, &w)| w * mdp.cost[s][assignment[s]])
                    .sum();
                if gain < best_gain {
                    best_gain = gain;
                    best_policy = assignment.clone();
                    best_values = Some(dist);
                }
            }
        }
        // Next assignment in mixed radix.
        let mut pos = 0;
        loop {
            if pos == states {
                let gain = matches!(mode, SolveMode::AverageCost).then_some(best_gain);
                return Ok(OracleResult {
                    values: best_values.unwrap(),
                    gain,
                    policy: policy_from_indices(model, 1, &best_policy),
                    policies_evaluated: evaluated,
                });
            }
            assignment[pos] += 1;
            if assignment[pos] < actions {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

// ── Product-space solver ─────────────────────────────────────────────────

/// Result of a joint multi-client solve on the product chain.
#[derive(Debug, Clone)]
pub struct JointSolveResult {
    pub values: Vec<f64>,
    pub gain: Option<f64>,
    /// Joint policy: per product state, one action per client.
    pub policy: Vec<Vec<Action>>,
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) struct ProductSpace {
    pub level_counts: Vec<usize>,
    pub action_lists: Vec<Vec<Action>>,
    pub joint_actions: Vec<Vec<usize>>,
}

impl ProductSpace {
    pub fn new(models: &[ClientModel]) -> Result<Self, SolveError> {
        let action_lists: Vec<Vec<Action>> = models.iter().map(ordered_actions).collect();
        Self::with_action_lists(models, action_lists)
    }

    /// Product space over restricted per-client action lists (e.g. the
    /// idle/transmit pairs of the prioritization problem).
    pub fn with_action_lists(
        models: &[ClientModel],
        action_lists: Vec<Vec<Action>>,
    ) -> Result<Self, SolveError> {
        assert_eq!(models.len(), action_lists.len());
        let level_counts: Vec<usize> = models.iter().map(|m| m.num_levels()).collect();
        let n_states: usize = level_counts.iter().product();
        if n_states > MAX_PRODUCT_STATES {
            return Err(SolveError::InstanceTooLarge {
                detail: format!("{n_states} joint states exceed the product-space cap"),
            });
        }
        let n_actions: usize = action_lists.iter().map(Vec::len).product();
        if n_actions > MAX_PRODUCT_ACTIONS {
            return Err(SolveError::InstanceTooLarge {
                detail: format!("{n_actions} joint actions exceed the product-space cap"),
            });
        }
        let mut joint_actions = Vec::with_capacity(n_actions);
        let mut idx = vec![0usize; models.len()];
        loop {
            joint_actions.push(idx.clone());
            let mut pos = models.len();
            loop {
                if pos == 0 {
                    return Ok(Self { level_counts, action_lists, joint_actions });
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < action_lists[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.level_counts.iter().product()
    }

    pub fn unpack_state(&self, mut state: usize) -> Vec<u32> {
        let mut levels = vec![0u32; self.level_counts.len()];
        for (i, &count) in self.level_counts.iter().enumerate() {
            levels[i] = (state % count) as u32;
            state /= count;
        }
        levels
    }

    pub fn pack_state(&self, levels: &[u32]) -> usize {
        let mut state = 0usize;
        for (i, &count) in self.level_counts.iter().enumerate().rev() {
            state = state * count + levels[i] as usize;
        }
        state
    }

    pub fn actions_of(&self, joint: usize) -> Vec<Action> {
        self.joint_actions[joint]
            .iter()
            .enumerate()
            .map(|(client, &ai)| self.action_lists[client][ai])
            .collect()
    }
}

/// Compiles the joint chain over the joint actions satisfying `allowed`
/// (e.g. at most M transmitters). Returns the MDP together with the map from
/// its action indices back to the space's joint-action indices.
pub(crate) fn compile_product(
    models: &[ClientModel],
    price: f64,
    space: &ProductSpace,
    allowed: impl Fn(&[Action]) -> bool,
) -> (FiniteMdp, Vec<usize>) {
    let joint: Vec<(usize, Vec<Action>)> = (0..space.joint_actions.len())
        .map(|j| (j, space.actions_of(j)))
        .filter(|(_, acts)| allowed(acts))
        .collect();
    let n_states = space.n_states();
    let mut cost = vec![vec![0.0; joint.len()]; n_states];
    let mut trans = vec![vec![Vec::new(); joint.len()]; n_states];
    for s in 0..n_states {
        let levels = space.unpack_state(s);
        for (ji, (_, acts)) in joint.iter().enumerate() {
            let mut c = 0.0;
            // Outcome distribution: product over clients of success/failure.
            let mut outcomes: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
            for (n, (&level, &a)) in levels.iter().zip(acts.iter()).enumerate() {
                let model = &models[n];
                let p = model.success_prob(a);
                c += model.step_cost_with_prob(level, a, price, p);
                let up = model.successor_success_unchecked(level);
                let down = level.saturating_sub(1);
                let mut grown = Vec::with_capacity(outcomes.len() * 2);
                for (prefix, w) in &outcomes {
                    if up == down {
                        let mut v = prefix.clone();
                        v.push(down);
                        grown.push((v, *w));
                        continue;
                    }
                    if p > 0.0 {
                        let mut v = prefix.clone();
                        v.push(up);
                        grown.push((v, w * p));
                    }
                    if p < 1.0 {
                        let mut v = prefix.clone();
                        v.push(down);
                        grown.push((v, w * (1.0 - p)));
                    }
                }
                outcomes = grown;
            }
            cost[s][ji] = c;
            trans[s][ji] = outcomes
                .into_iter()
                .map(|(lv, w)| (space.pack_state(&lv), w))
                .collect();
        }
    }
    (FiniteMdp { cost, trans }, joint.into_iter().map(|(j, _)| j).collect())
}

/// Solves the joint price-relaxed problem `min sum_n (C_n + price * E_n)` on
/// the exact product chain. With independent dynamics and additive costs the
/// optimum equals the sum of single-client optima; this solver exists to
/// check exactly that.
pub fn product_mdp_solve(
    models: &[ClientModel],
    price: f64,
    mode: SolveMode,
    tol: f64,
) -> Result<JointSolveResult, SolveError> {
    check_price(price)?;
    let space = ProductSpace::new(models)?;
    let (mdp, _) = compile_product(models, price, &space, |_| true);
    let out = match mode {
        SolveMode::Discounted(beta) => mdp::value_iteration(&mdp, beta, tol, MAX_SWEEPS, TIE_EPS)?,
        SolveMode::AverageCost => mdp::relative_value_iteration(&mdp, tol, MAX_SWEEPS, TIE_EPS)?,
    };
    let policy = out.policy.iter().map(|&j| space.actions_of(j)).collect();
    Ok(JointSolveResult {
        values: out.values,
        gain: out.gain,
        policy,
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// Exact long-run average QoE cost of a fixed joint policy, computed from
/// the stationary distribution of the product chain started at full buffers.
pub fn evaluate_joint_policy(
    models: &[ClientModel],
    policy: impl Fn(&[u32]) -> Vec<Action>,
) -> Result<f64, SolveError> {
    let space = ProductSpace::with_action_lists(
        models,
        models.iter().map(|_| vec![Action::new(0, 0)]).collect(),
    )?;
    let n_states = space.n_states();
    let mut cost = vec![vec![0.0; 1]; n_states];
    let mut trans = vec![vec![Vec::new(); 1]; n_states];
    for s in 0..n_states {
        let levels = space.unpack_state(s);
        let acts = policy(&levels);
        assert_eq!(acts.len(), models.len(), "joint policy must act for every client");
        let mut c = 0.0;
        let mut outcomes: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
        for (n, (&level, &a)) in levels.iter().zip(acts.iter()).enumerate() {
            let model = &models[n];
            model.validate_action(a)?;
            let p = model.success_prob(a);
            c += model.step_cost_with_prob(level, a, 0.0, p);
            let up = model.successor_success_unchecked(level);
            let down = level.saturating_sub(1);
            let mut grown = Vec::with_capacity(outcomes.len() * 2);
            for (prefix, w) in &outcomes {
                if up == down {
                    let mut v = prefix.clone();
                    v.push(down);
                    grown.push((v, *w));
                    continue;
                }
                if p > 0.0 {
                    let mut v = prefix.clone();
                    v.push(up);
                    grown.push((v, w * p));
                }
                if p < 1.0 {
                    let mut v = prefix.clone();
                    v.push(down);
                    grown.push((v, w * (1.0 - p)));
                }
            }
            outcomes = grown;
        }
        cost[s][0] = c;
        trans[s][0] = outcomes
            .into_iter()
            .map(|(lv, w)| (space.pack_state(&lv), w))
            .collect();
    }
    let mdp = FiniteMdp { cost, trans };
    let start = n_states - 1; // all buffers full
    let dist = mdp::stationary_from(&mdp, &vec![0; n_states], start)?;
    Ok(dist.iter().enumerate().map(|(s, &w)| w * mdp.cost[s][0]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small_model() -> ClientModel {
        ClientModel::new(
            6,
            2,
            vec![0.15, 0.4],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.45], vec![0.0, 0.7]],
            1.5,
        )
        .unwrap()
    }

    /// Free, certain delivery available; idling free as well.
    fn free_transmit_model() -> ClientModel {
        ClientModel::new(6, 2, vec![0.0], vec![0.0, 1.0], vec![vec![0.0, 1.0]], 0.0).unwrap()
    }

    /// Only the zero-power action exists: nothing is ever delivered.
    fn drain_only_model(outage_weight: f64) -> ClientModel {
        ClientModel::new(5, 2, vec![0.3], vec![0.0], vec![vec![0.0]], outage_weight).unwrap()
    }

    /// Independent recursive evaluator for the finite-horizon values, built
    /// straight from the one-step model operations.
    fn recursive_stage_value(
        model: &ClientModel,
        price: f64,
        discount: f64,
        stage: usize,
        level: u32,
        memo: &mut HashMap<(usize, u32), f64>,
    ) -> f64 {
        if stage == 0 {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(stage, level)) {
            return v;
        }
        let mut best = f64::INFINITY;
        for a in model.actions() {
            let mut q = model.step_cost(level, a, price).unwrap();
            for (next, p) in model.transition_distribution(level, a, None).unwrap() {
                q += discount
                    * p
                    * recursive_stage_value(model, price, discount, stage - 1, next, memo);
            }
            best = best.min(q);
        }
        memo.insert((stage, level), best);
        best
    }

    #[test]
    fn stage_one_gap_is_outage_weight_indicator() {
        let m = small_model();
        let (_, gaps) = backward_induction(&m, 0.5, 0.9, 1).unwrap();
        let d1 = &gaps[0];
        assert_eq!(d1.values.len(), m.accept_limit() as usize);
        assert!((d1.at(1) - m.outage_period_weight()).abs() < 1e-12);
        for x in 2..=m.accept_limit() {
            assert_eq!(d1.at(x), 0.0);
        }
    }

    #[test]
    fn free_certain_delivery_costs_one_outage_slot() {
        let m = free_transmit_model();
        let (stages, _) = backward_induction(&m, 0.0, 0.95, 12).unwrap();
        for (s, v) in stages.iter().enumerate() {
            for l in 1..m.num_levels() {
                assert!(v[l].abs() < 1e-12, "stage {s} level {l}");
            }
            if s >= 1 {
                assert!((v[0] - 1.0).abs() < 1e-12, "stage {s}");
            }
        }
    }

    #[test]
    fn backward_induction_matches_recursive_oracle() {
        let m = small_model();
        let price = 0.7;
        let beta = 0.9;
        let horizon = 8;
        let (stages, _) = backward_induction(&m, price, beta, horizon).unwrap();
        let mut memo = HashMap::new();
        for stage in 0..=horizon {
            for level in 0..m.num_levels() as u32 {
                let expect =
                    recursive_stage_value(&m, price, beta, stage, level, &mut memo);
                let got = stages[stage][level as usize];
                assert!(
                    (got - expect).abs() < 1e-10,
                    "stage {stage} level {level}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn backward_induction_rejects_bad_inputs() {
        let m = small_model();
        assert!(backward_induction(&m, 0.0, 1.0, 5).is_err());
        assert!(backward_induction(&m, 0.0, 0.9, 0).is_err());
        assert!(backward_induction(&m, -1.0, 0.9, 5).is_err());
    }

    #[test]
    fn drain_only_discounted_values() {
        // Deterministic drain: level l reaches 0 after l slots, pays the
        // outage-period weight once at level 1, then 1 per slot forever.
        let w = 2.5;
        let m = drain_only_model(w);
        let beta = 0.9;
        let r = discounted_value_iteration(&m, 1.0, beta, 1e-10).unwrap();
        for l in 1..m.num_levels() {
            let expect = beta.powi(l as i32) / (1.0 - beta) + w * beta.powi(l as i32 - 1);
            assert!((r.values[l] - expect).abs() < 1e-8, "level {l}");
        }
        assert!((r.values[0] - 1.0 / (1.0 - beta)).abs() < 1e-8);
    }

    #[test]
    fn always_transmit_policy_value_is_geometric() {
        // With certain delivery the always-transmit policy pays the quality
        // disutility every slot: V = c / (1 - beta) at every level >= 1.
        let c = 0.3;
        let m = ClientModel::new(6, 2, vec![c], vec![0.0, 1.0], vec![vec![0.0, 1.0]], 0.0)
            .unwrap();
        let mdp = compile_iid(&m, 0.0);
        let transmit = 1; // ordered: [(q0, m0), (q0, m1)]
        let beta = 0.9;
        let v = crate::mdp::policy_value_discounted(&mdp, &vec![transmit; 7], beta).unwrap();
        for l in 1..7 {
            assert!((v[l] - c / (1.0 - beta)).abs() < 1e-9, "level {l}");
        }
    }

    #[test]
    fn average_cost_of_drain_only_is_full_outage() {
        let m = drain_only_model(1.0);
        let r = average_cost_solve(&m, 0.3, 1e-10).unwrap();
        assert!((r.gain.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn discounted_matches_enumeration_oracle() {
        let m = ClientModel::new(
            4,
            2,
            vec![0.1, 0.35],
            vec![0.0, 1.2],
            vec![vec![0.0, 0.5], vec![0.0, 0.75]],
            1.0,
        )
        .unwrap();
        let beta = 0.9;
        let vi = discounted_value_iteration(&m, 0.5, beta, 1e-9).unwrap();
        let oracle = enumerate_policies_oracle(&m, 0.5, SolveMode::Discounted(beta)).unwrap();
        assert_eq!(oracle.policies_evaluated, 4usize.pow(5));
        for (a, b) in vi.values.iter().zip(oracle.values.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn average_matches_enumeration_oracle() {
        let m = ClientModel::new(
            4,
            2,
            vec![0.1, 0.35],
            vec![0.0, 1.2],
            vec![vec![0.0, 0.5], vec![0.0, 0.75]],
            1.0,
        )
        .unwrap();
        let rvi = average_cost_solve(&m, 0.5, 1e-10).unwrap();
        let oracle = enumerate_policies_oracle(&m, 0.5, SolveMode::AverageCost).unwrap();
        assert!((rvi.gain.unwrap() - oracle.gain.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let m = ClientModel::new(
            20,
            4,
            vec![0.1, 0.2, 0.3],
            vec![0.0, 1.0, 2.0],
            vec![
                vec![0.0, 0.2, 0.4],
                vec![0.0, 0.3, 0.5],
                vec![0.0, 0.4, 0.6],
            ],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            enumerate_policies_oracle(&m, 0.0, SolveMode::AverageCost),
            Err(SolveError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn threshold_verifier_examples() {
        let m = small_model();
        // Constant policies trivially pass.
        let constant = PolicyTable::constant(m.num_levels(), Action::new(0, 1));
        assert!(verify_threshold(&constant, &m).passed);

        // Higher power at level 5 than at level 2 with the same quality.
        let mut bad = PolicyTable::constant(m.num_levels(), Action::new(0, 0));
        bad.set_action(5, 0, Action::new(0, 1));
        let report = verify_threshold(&bad, &m);
        assert!(!report.passed);
        assert!(report
            .violations
            .iter()
            .any(|v| v.upper_state == 5
                && v.lower_state == 2
                && v.clause == ThresholdClause::PowerDrop));

        // Success probability increasing as the level decreases passes.
        let mut good = PolicyTable::constant(m.num_levels(), Action::new(0, 0));
        for l in 0..=2u32 {
            good.set_action(l, 0, Action::new(1, 1));
        }
        for l in 3..=4u32 {
            good.set_action(l, 0, Action::new(0, 1));
        }
        assert!(verify_threshold(&good, &m).passed);
    }

    #[test]
    fn d_monotone_verifier() {
        let pass = DFunction { stage: 1, discount: 0.9, values: vec![2.0, 0.0, 0.0] };
        assert!(verify_d_monotone(&pass).passed);
        let flat = DFunction { stage: 3, discount: 0.9, values: vec![1.0, 1.0, 1.0] };
        assert!(verify_d_monotone(&flat).passed);
        let fail = DFunction { stage: 2, discount: 0.9, values: vec![1.0, 0.5, 0.5 + 1e-6] };
        let report = verify_d_monotone(&fail);
        assert!(!report.passed);
        assert_eq!(report.first_violation, Some(2));
    }

    #[test]
    fn stage_gap_monotonicity_has_a_boundary_counterexample() {
        // With expensive priced transmission, idling near the outage
        // boundary is optimal over short remaining horizons and the stage
        // gaps are NOT monotone at early stages: D_6(1) < D_6(2) here, even
        // though the gaps built from converged values are monotone. Frozen
        // so the finding is not lost; verified against an independent
        // recursive evaluator.
        let m = ClientModel::new(
            10,
            5,
            vec![0.8420381449076639],
            vec![0.0, 1.5730647415653682],
            vec![vec![0.0, 0.7894495612169649]],
            2.7209054515628304,
        )
        .unwrap();
        let beta = 0.99;
        let price = 2.0;
        let (_, gaps) = backward_induction(&m, price, beta, 15).unwrap();
        let d6 = &gaps[5];
        assert!(d6.at(1) < d6.at(2) - 0.1, "expected the frozen violation to persist");
        assert!(!verify_d_monotone(d6).passed);

        // The infinite-horizon gap function is monotone for the same model.
        let vi = discounted_value_iteration(&m, price, beta, 1e-10).unwrap();
        let limit: Vec<f64> = (1..=m.accept_limit())
            .map(|x| {
                let up = m.successor_success(x).unwrap() as usize;
                let down = (x - 1) as usize;
                let w = if x == 1 { m.outage_period_weight() } else { 0.0 };
                w + beta * (vi.values[down] - vi.values[up])
            })
            .collect();
        let df = DFunction { stage: 0, discount: beta, values: limit };
        assert!(verify_d_monotone(&df).passed);
    }

    #[test]
    fn product_of_one_equals_single_solve() {
        let m = small_model();
        let single = average_cost_solve(&m, 0.4, 1e-10).unwrap();
        let joint = product_mdp_solve(
            std::slice::from_ref(&m),
            0.4,
            SolveMode::AverageCost,
            1e-10,
        )
        .unwrap();
        assert!((single.gain.unwrap() - joint.gain.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn identical_pair_doubles_the_gain() {
        let m = ClientModel::new(
            3,
            2,
            vec![0.2],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.6]],
            1.0,
        )
        .unwrap();
        let single = average_cost_solve(&m, 0.5, 1e-10).unwrap();
        let joint = product_mdp_solve(
            &[m.clone(), m],
            0.5,
            SolveMode::AverageCost,
            1e-10,
        )
        .unwrap();
        assert!((joint.gain.unwrap() - 2.0 * single.gain.unwrap()).abs() < 1e-7);
    }

    #[test]
    fn high_buffer_states_idle_under_positive_price() {
        let m = small_model();
        let r = average_cost_solve(&m, 0.8, 1e-10).unwrap();
        for l in (m.accept_limit() + 1)..=m.buffer_capacity() {
            assert!(r.policy.action(l).is_idle(), "level {l} should idle");
        }
    }
}
