//! Client and channel models with their exact slot-level dynamics.
//!
//! A client holds `l ∈ {0..B}` slots of playtime. Every slot it drains one
//! slot of playtime (clamped at zero); a delivered packet adds `T` slots.
//! Deliveries are Bernoulli with probability `P(q, E)` chosen per slot via a
//! (quality, power) action. The buffer refuses packets that would overflow:
//! for `l > B − T + 1` a delivery is lost and the state just drains.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by model validation and the dynamics operations.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("buffer capacity must be >= 1")]
    EmptyBuffer,

    #[error("playtime per packet must be in 1..=buffer_capacity (got T={playtime}, B={capacity})")]
    PacketTooLarge { playtime: u32, capacity: u32 },

    #[error("quality disutilities must be a nonempty strictly increasing list of finite values >= 0")]
    BadDisutilities,

    #[error("power levels must start at 0 and be strictly increasing and finite")]
    BadPowerLevels,

    #[error("success probability table must be {rows}x{cols} to match qualities x power levels")]
    SuccessShape { rows: usize, cols: usize },

    #[error("success probability out of [0,1] at quality {quality}, power {power}: {value}")]
    SuccessRange { quality: usize, power: usize, value: f64 },

    #[error("success probability must be 0 at the zero power level (quality {quality})")]
    NonzeroAtIdle { quality: usize },

    #[error("success probabilities must be nondecreasing in quality and in power (violated at quality {quality}, power {power})")]
    NonMonotone { quality: usize, power: usize },

    #[error("outage period weight must be finite and >= 0")]
    BadOutageWeight,

    #[error("buffer level {level} out of range 0..={capacity}")]
    LevelOutOfRange { level: u32, capacity: u32 },

    #[error("action ({quality}, {power}) out of range for {qualities} qualities x {powers} power levels")]
    ActionOutOfRange { quality: usize, power: usize, qualities: usize, powers: usize },

    #[error("power price must be finite and >= 0 (got {0})")]
    NegativePrice(f64),

    #[error("channel transition matrix must be {states}x{states} row-stochastic")]
    BadTransitionMatrix { states: usize },

    #[error("channel state {state} out of range 0..{states}")]
    ChannelOutOfRange { state: usize, states: usize },

    #[error("channel must define one success table per state (got {got}, expected {expected})")]
    ChannelTableCount { got: usize, expected: usize },

    #[error("peak power filter at {limit} leaves no usable power level")]
    EmptyPeakFilter { limit: f64 },
}

/// One scheduling choice: a quality index and a power-level index.
///
/// Both are zero-based. Quality index 0 is the best (lowest-disutility)
/// quality; power index 0 is the zero-power level, which never delivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub quality: usize,
    pub power: usize,
}

impl Action {
    pub fn new(quality: usize, power: usize) -> Self {
        Self { quality, power }
    }

    /// True when this action uses the zero power level (no transmission).
    pub fn is_idle(&self) -> bool {
        self.power == 0
    }
}

/// Serialized form of [`ClientModel`]; validation happens on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientModelSpec {
    pub buffer_capacity: u32,
    pub playtime_per_packet: u32,
    pub quality_disutilities: Vec<f64>,
    pub power_levels: Vec<f64>,
    /// `success_prob[q][m]` = delivery probability at quality `q`, power level `m`.
    pub success_prob: Vec<Vec<f64>>,
    pub outage_period_weight: f64,
}

/// Static parameters of one streaming client.
///
/// Immutable after validation; all dynamics operations are pure functions of
/// the model, so a model can be shared freely across threads.
#[derive(Debug, Clone, Serialize)]
#[serde(into = "ClientModelSpec")]
pub struct ClientModel {
    buffer_capacity: u32,
    playtime_per_packet: u32,
    quality_disutilities: Vec<f64>,
    power_levels: Vec<f64>,
    success_prob: Vec<Vec<f64>>,
    outage_period_weight: f64,
}

impl From<ClientModel> for ClientModelSpec {
    fn from(m: ClientModel) -> Self {
        ClientModelSpec {
            buffer_capacity: m.buffer_capacity,
            playtime_per_packet: m.playtime_per_packet,
            quality_disutilities: m.quality_disutilities,
            power_levels: m.power_levels,
            success_prob: m.success_prob,
            outage_period_weight: m.outage_period_weight,
        }
    }
}

impl TryFrom<ClientModelSpec> for ClientModel {
    type Error = ModelError;

    fn try_from(spec: ClientModelSpec) -> Result<Self, ModelError> {
        ClientModel::new(
            spec.buffer_capacity,
            spec.playtime_per_packet,
            spec.quality_disutilities,
            spec.power_levels,
            spec.success_prob,
            spec.outage_period_weight,
        )
    }
}

impl<'de> Deserialize<'de> for ClientModel {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let spec = ClientModelSpec::deserialize(deserializer)?;
        ClientModel::try_from(spec).map_err(serde::de::Error::custom)
    }
}

impl ClientModel {
    pub fn new(
        buffer_capacity: u32,
        playtime_per_packet: u32,
        quality_disutilities: Vec<f64>,
        power_levels: Vec<f64>,
        success_prob: Vec<Vec<f64>>,
        outage_period_weight: f64,
    ) -> Result<Self, ModelError> {
        if buffer_capacity < 1 {
            return Err(ModelError::EmptyBuffer);
        }
        if playtime_per_packet < 1 || playtime_per_packet > buffer_capacity {
            return Err(ModelError::PacketTooLarge {
                playtime: playtime_per_packet,
                capacity: buffer_capacity,
            });
        }
        if quality_disutilities.is_empty()
            || quality_disutilities.iter().any(|x| !x.is_finite() || *x < 0.0)
            || quality_disutilities.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(ModelError::BadDisutilities);
        }
        if power_levels.is_empty()
            || power_levels[0] != 0.0
            || power_levels.iter().any(|x| !x.is_finite())
            || power_levels.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(ModelError::BadPowerLevels);
        }
        if !(outage_period_weight.is_finite() && outage_period_weight >= 0.0) {
            return Err(ModelError::BadOutageWeight);
        }
        validate_success_table(&success_prob, quality_disutilities.len(), power_levels.len())?;
        Ok(Self {
            buffer_capacity,
            playtime_per_packet,
            quality_disutilities,
            power_levels,
            success_prob,
            outage_period_weight,
        })
    }

    pub fn buffer_capacity(&self) -> u32 {
        self.buffer_capacity
    }

    pub fn playtime_per_packet(&self) -> u32 {
        self.playtime_per_packet
    }

    pub fn quality_disutilities(&self) -> &[f64] {
        &self.quality_disutilities
    }

    pub fn power_levels(&self) -> &[f64] {
        &self.power_levels
    }

    pub fn outage_period_weight(&self) -> f64 {
        self.outage_period_weight
    }

    /// The full success-probability table (rows by quality, columns by
    /// power level).
    pub fn success_table(&self) -> &[Vec<f64>] {
        &self.success_prob
    }

    pub fn num_qualities(&self) -> usize {
        self.quality_disutilities.len()
    }

    pub fn num_power_levels(&self) -> usize {
        self.power_levels.len()
    }

    pub fn num_levels(&self) -> usize {
        self.buffer_capacity as usize + 1
    }

    /// Largest buffer level that can still accept a packet (`B − T + 1`).
    pub fn accept_limit(&self) -> u32 {
        self.buffer_capacity - self.playtime_per_packet + 1
    }

    /// All actions ordered by (power index, quality index).
    ///
    /// This ordering matters: greedy extraction breaks value ties by taking
    /// the first minimizer, which under this order is the lowest-power,
    /// then lowest-quality-index representative.
    pub fn actions(&self) -> Vec<Action> {
        let mut out = Vec::with_capacity(self.num_qualities() * self.num_power_levels());
        for power in 0..self.num_power_levels() {
            for quality in 0..self.num_qualities() {
                out.push(Action { quality, power });
            }
        }
        out
    }

    pub fn validate_level(&self, level: u32) -> Result<(), ModelError> {
        if level > self.buffer_capacity {
            return Err(ModelError::LevelOutOfRange {
                level,
                capacity: self.buffer_capacity,
            });
        }
        Ok(())
    }

    pub fn validate_action(&self, action: Action) -> Result<(), ModelError> {
        if action.quality >= self.num_qualities() || action.power >= self.num_power_levels() {
            return Err(ModelError::ActionOutOfRange {
                quality: action.quality,
                power: action.power,
                qualities: self.num_qualities(),
                powers: self.num_power_levels(),
            });
        }
        Ok(())
    }

    /// Delivery probability of `action` on the i.i.d. channel.
    pub fn success_prob(&self, action: Action) -> f64 {
        self.success_prob[action.quality][action.power]
    }

    /// Energy spent by `action`.
    pub fn power(&self, action: Action) -> f64 {
        self.power_levels[action.power]
    }

    /// Disutility charged when a packet of `action`'s quality is delivered.
    pub fn disutility(&self, action: Action) -> f64 {
        self.quality_disutilities[action.quality]
    }

    /// Next buffer level after a successful delivery: `(l−1)^+ + T` while the
    /// packet fits, otherwise the plain drain `l−1` (the delivery is lost).
    pub fn successor_success(&self, level: u32) -> Result<u32, ModelError> {
        self.validate_level(level)?;
        Ok(self.successor_success_unchecked(level))
    }

    pub(crate) fn successor_success_unchecked(&self, level: u32) -> u32 {
        if level <= self.accept_limit() {
            level.saturating_sub(1) + self.playtime_per_packet
        } else {
            level - 1
        }
    }

    /// Next buffer level after a failed (or absent) delivery: `(l−1)^+`.
    pub fn successor_failure(&self, level: u32) -> Result<u32, ModelError> {
        self.validate_level(level)?;
        Ok(level.saturating_sub(1))
    }

    /// Distribution of the next buffer level under `action`.
    ///
    /// Entries with equal successor states are merged and zero-probability
    /// entries dropped, so the probabilities always sum to 1 exactly. With
    /// `channel_state` set, the per-state success table of `channel` is used
    /// in place of the i.i.d. one.
    pub fn transition_distribution(
        &self,
        level: u32,
        action: Action,
        channel: Option<(&ChannelModel, usize)>,
    ) -> Result<Vec<(u32, f64)>, ModelError> {
        self.validate_level(level)?;
        self.validate_action(action)?;
        let p = match channel {
            Some((ch, c)) => ch.success_prob(self, c, action)?,
            None => self.success_prob(action),
        };
        let up = self.successor_success_unchecked(level);
        let down = level.saturating_sub(1);
        if up == down {
            return Ok(vec![(down, 1.0)]);
        }
        let mut out = Vec::with_capacity(2);
        if p > 0.0 {
            out.push((up, p));
        }
        if p < 1.0 {
            out.push((down, 1.0 - p));
        }
        Ok(out)
    }

    /// Expected one-step cost of `action` in state `level` at power price
    /// `price`: outage indicator, priced energy, expected quality disutility,
    /// and the expected new-outage-period penalty (charged when a
    /// transmission at level 1 fails, one slot before the outage begins).
    pub fn step_cost(&self, level: u32, action: Action, price: f64) -> Result<f64, ModelError> {
        self.validate_level(level)?;
        self.validate_action(action)?;
        if !(price.is_finite() && price >= 0.0) {
            return Err(ModelError::NegativePrice(price));
        }
        Ok(self.step_cost_with_prob(level, action, price, self.success_prob(action)))
    }

    pub(crate) fn step_cost_with_prob(
        &self,
        level: u32,
        action: Action,
        price: f64,
        success: f64,
    ) -> f64 {
        let outage = if level == 0 { 1.0 } else { 0.0 };
        let period = if level == 1 { self.outage_period_weight } else { 0.0 };
        outage
            + price * self.power(action)
            + success * self.disutility(action)
            + (1.0 - success) * period
    }

    /// Copy of this model with power levels above `limit` removed.
    pub fn with_peak_power(&self, limit: f64) -> Result<Self, ModelError> {
        let keep = self.power_levels.iter().filter(|&&e| e <= limit).count();
        if keep < 1 {
            return Err(ModelError::EmptyPeakFilter { limit });
        }
        ClientModel::new(
            self.buffer_capacity,
            self.playtime_per_packet,
            self.quality_disutilities.clone(),
            self.power_levels[..keep].to_vec(),
            self.success_prob.iter().map(|row| row[..keep].to_vec()).collect(),
            self.outage_period_weight,
        )
    }
}

fn validate_success_table(
    table: &[Vec<f64>],
    qualities: usize,
    powers: usize,
) -> Result<(), ModelError> {
    if table.len() != qualities || table.iter().any(|row| row.len() != powers) {
        return Err(ModelError::SuccessShape { rows: qualities, cols: powers });
    }
    for (q, row) in table.iter().enumerate() {
        for (m, &p) in row.iter().enumerate() {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(ModelError::SuccessRange { quality: q, power: m, value: p });
            }
            if m == 0 && p != 0.0 {
                return Err(ModelError::NonzeroAtIdle { quality: q });
            }
            if m > 0 && row[m - 1] > p {
                return Err(ModelError::NonMonotone { quality: q, power: m });
            }
            if q > 0 && table[q - 1][m] > p {
                return Err(ModelError::NonMonotone { quality: q, power: m });
            }
        }
    }
    Ok(())
}

/// Serialized form of [`ChannelModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModelSpec {
    /// Row-stochastic transition matrix over channel states.
    pub transition_matrix: Vec<Vec<f64>>,
    /// One success table per channel state, each shaped like the client's.
    pub per_state_success: Vec<Vec<Vec<f64>>>,
}

/// A finite-state Markov fading channel.
///
/// State `c` swaps the client's success table for `per_state_success[c]`;
/// the state itself evolves by `transition_matrix` once per slot. A single
/// state with transition matrix `[[1]]` reproduces the i.i.d. channel.
#[derive(Debug, Clone, Serialize)]
#[serde(into = "ChannelModelSpec")]
pub struct ChannelModel {
    transition_matrix: Vec<Vec<f64>>,
    per_state_success: Vec<Vec<Vec<f64>>>,
}

impl From<ChannelModel> for ChannelModelSpec {
    fn from(ch: ChannelModel) -> Self {
        ChannelModelSpec {
            transition_matrix: ch.transition_matrix,
            per_state_success: ch.per_state_success,
        }
    }
}

impl ChannelModel {
    const ROW_SUM_TOL: f64 = 1e-12;

    /// Validates shapes, stochasticity, and per-state monotonicity against
    /// the client model the channel will be paired with.
    pub fn new(
        client: &ClientModel,
        transition_matrix: Vec<Vec<f64>>,
        per_state_success: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ModelError> {
        let states = transition_matrix.len();
        if states == 0 || transition_matrix.iter().any(|row| row.len() != states) {
            return Err(ModelError::BadTransitionMatrix { states });
        }
        for row in &transition_matrix {
            if row.iter().any(|&p| !(p.is_finite() && (0.0..=1.0).contains(&p))) {
                return Err(ModelError::BadTransitionMatrix { states });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(ModelError::BadTransitionMatrix { states });
            }
        }
        if per_state_success.len() != states {
            return Err(ModelError::ChannelTableCount {
                got: per_state_success.len(),
                expected: states,
            });
        }
        for table in &per_state_success {
            validate_success_table(table, client.num_qualities(), client.num_power_levels())?;
        }
        Ok(Self { transition_matrix, per_state_success })
    }

    /// Degenerate single-state channel equal to the client's i.i.d. table.
    pub fn degenerate(client: &ClientModel) -> Self {
        Self {
            transition_matrix: vec![vec![1.0]],
            per_state_success: vec![client.success_prob.clone()],
        }
    }

    pub fn num_states(&self) -> usize {
        self.transition_matrix.len()
    }

    pub fn transition_row(&self, state: usize) -> &[f64] {
        &self.transition_matrix[state]
    }

    pub fn success_prob(
        &self,
        client: &ClientModel,
        state: usize,
        action: Action,
    ) -> Result<f64, ModelError> {
        if state >= self.num_states() {
            return Err(ModelError::ChannelOutOfRange { state, states: self.num_states() });
        }
        client.validate_action(action)?;
        Ok(self.per_state_success[state][action.quality][action.power])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn demo_model() -> ClientModel {
        // B=10, T=4, two qualities, three power levels.
        ClientModel::new(
            10,
            4,
            vec![0.2, 0.5],
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0, 0.3, 0.5], vec![0.0, 0.6, 0.8]],
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn successor_maps_match_hand_values() {
        let m = demo_model();
        assert_eq!(m.successor_success(5).unwrap(), 8);
        assert_eq!(m.successor_success(0).unwrap(), 4);
        assert_eq!(m.successor_success(8).unwrap(), 7); // 8 > B-T+1 = 7
        assert_eq!(m.successor_failure(0).unwrap(), 0);
        assert_eq!(m.successor_failure(1).unwrap(), 0);
        assert_eq!(m.successor_failure(5).unwrap(), 4);
        assert!(m.successor_success(11).is_err());
        assert!(m.successor_failure(11).is_err());
    }

    #[test]
    fn transition_distribution_merges_and_drops() {
        let m = demo_model();
        // p = P(q=1, m=2) = 0.8 at l=5.
        let d = m.transition_distribution(5, Action::new(1, 2), None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].0, d[1].0), (8, 4));
        assert!((d[0].1 - 0.8).abs() < 1e-15 && (d[1].1 - 0.2).abs() < 1e-15);
        assert_eq!(d[0].1 + d[1].1, 1.0); // sums to one exactly
        // Overflow region: S = F, single merged entry.
        let d = m.transition_distribution(8, Action::new(1, 2), None).unwrap();
        assert_eq!(d, vec![(7, 1.0)]);
        // Zero power never delivers.
        let d = m.transition_distribution(3, Action::new(1, 0), None).unwrap();
        assert_eq!(d, vec![(2, 1.0)]);
    }

    #[test]
    fn step_cost_matches_formula() {
        // l=1 with P=0.6, E=2, lambda_q=0.5, lambda_O=3, price=1:
        // 0 + 2 + 0.6*0.5 + 0.4*3 = 3.5
        let m = ClientModel::new(
            10,
            4,
            vec![0.5],
            vec![0.0, 2.0],
            vec![vec![0.0, 0.6]],
            3.0,
        )
        .unwrap();
        let c = m.step_cost(1, Action::new(0, 1), 1.0).unwrap();
        assert!((c - 3.5).abs() < 1e-12);

        let m = demo_model();
        // Outage state, idle action: outage penalty only.
        let c = m.step_cost(0, Action::new(0, 0), 1.0).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        // No outage, idle, away from level 1: free.
        let c = m.step_cost(5, Action::new(0, 0), 1.0).unwrap();
        assert_eq!(c, 0.0);
        assert!(m.step_cost(5, Action::new(0, 0), -0.5).is_err());
    }

    #[test]
    fn validation_rejects_bad_models() {
        // T > B
        assert!(ClientModel::new(3, 4, vec![0.1], vec![0.0], vec![vec![0.0]], 0.0).is_err());
        // non-increasing disutilities
        assert!(ClientModel::new(
            10,
            4,
            vec![0.5, 0.2],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.3], vec![0.0, 0.6]],
            0.0
        )
        .is_err());
        // nonzero success at zero power
        assert!(ClientModel::new(10, 4, vec![0.2], vec![0.0, 1.0], vec![vec![0.1, 0.3]], 0.0)
            .is_err());
        // non-monotone in power
        assert!(ClientModel::new(
            10,
            4,
            vec![0.2],
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0, 0.5, 0.3]],
            0.0
        )
        .is_err());
        // non-monotone in quality
        assert!(ClientModel::new(
            10,
            4,
            vec![0.2, 0.5],
            vec![0.0, 1.0],
            vec![vec![0.0, 0.7], vec![0.0, 0.5]],
            0.0
        )
        .is_err());
        // first power level not zero
        assert!(ClientModel::new(10, 4, vec![0.2], vec![0.5, 1.0], vec![vec![0.0, 0.3]], 0.0)
            .is_err());
    }

    #[test]
    fn peak_filter_truncates_power_levels() {
        let m = demo_model();
        let f = m.with_peak_power(1.0).unwrap();
        assert_eq!(f.power_levels(), &[0.0, 1.0]);
        assert_eq!(f.success_prob(Action::new(1, 1)), 0.6);
        assert!(m.with_peak_power(-1.0).is_err());
    }

    #[test]
    fn degenerate_channel_matches_iid() {
        let m = demo_model();
        let ch = ChannelModel::degenerate(&m);
        for q in 0..m.num_qualities() {
            for p in 0..m.num_power_levels() {
                let a = Action::new(q, p);
                assert_eq!(ch.success_prob(&m, 0, a).unwrap(), m.success_prob(a));
            }
        }
        let iid = m.transition_distribution(5, Action::new(1, 2), None).unwrap();
        let faded = m.transition_distribution(5, Action::new(1, 2), Some((&ch, 0))).unwrap();
        assert_eq!(iid, faded);
    }

    #[test]
    fn channel_validation() {
        let m = demo_model();
        // Rows must sum to one.
        assert!(ChannelModel::new(
            &m,
            vec![vec![0.5, 0.4], vec![0.2, 0.8]],
            vec![m.success_prob.clone(), m.success_prob.clone()],
        )
        .is_err());
        // Table count must match state count.
        assert!(ChannelModel::new(
            &m,
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![m.success_prob.clone()],
        )
        .is_err());
        let ch = ChannelModel::new(
            &m,
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![m.success_prob.clone(), m.success_prob.clone()],
        )
        .unwrap();
        assert_eq!(ch.num_states(), 2);
        assert!(ch.success_prob(&m, 2, Action::new(0, 0)).is_err());
    }
}
