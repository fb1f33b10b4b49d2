//! Buffer/quality/power scheduling for adaptive video streaming.
//!
//! A client drains one slot of playtime per time-slot and receives `T` slots
//! of playtime per delivered packet; the scheduler picks a (quality, power)
//! action per slot and pays for outages, outage-period starts, quality
//! disutility, and (priced) transmit power. This crate contains:
//!
//! - [`model`]: the client/channel models and their exact slot dynamics,
//! - [`solver`]: finite-horizon, discounted, and average-cost solvers with
//!   threshold-structure verifiers and brute-force oracles,
//! - [`pricing`]: exact policy evaluation, the dual function over the power
//!   price, and projected subgradient price ascent,
//! - [`whittle`]: indexability checks, index computation (bisection and
//!   linear solve), and top-M index schedulers,
//! - [`learning`]: tabular Q-learning (discounted and relative), Boltzmann
//!   index scheduling, and the two-timescale price/policy learner,
//! - [`sim`]: a deterministic slot-level Monte Carlo simulator,
//! - [`acceptance`]: the oracle-backed verification suite,
//! - [`cli`]: config-driven commands used by the `das-index` binary.

pub mod acceptance;
pub mod cli;
pub mod learning;
pub mod model;
pub mod pricing;
pub mod sim;
pub mod solver;
pub mod whittle;

mod linalg;
mod mdp;

pub use model::{Action, ChannelModel, ClientModel, ModelError};
pub use solver::{DFunction, PolicyTable, SolveResult};

/// Scratch hook used by the tuning example; mirrors the structure sample.
#[doc(hidden)]
pub fn acceptance_sample(rng: &mut rand_chacha::ChaCha8Rng) -> model::ClientModel {
    acceptance::sample_model(rng, (4, 20), 3, 3)
}
