//! Config-driven command layer behind the `das-index` binary.
//!
//! Every command reads one strict JSON config (unknown keys rejected),
//! computes, and writes machine-readable results into the output directory.
//! All outputs carry the config's SHA-256 and the effective seed, so runs
//! are attributable and reproducible. Exit codes: 0 success, 1 numerical or
//! convergence failure, 2 config error, 3 verification failure.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acceptance;
use crate::learning::{self, BoltzmannConvention, QVariant, Schedules};
use crate::model::{ChannelModelSpec, ClientModel, ClientModelSpec};
use crate::pricing::{self, PriceSchedule};
use crate::sim::{self, ConstraintMode, Scenario, ScenarioClient};
use crate::solver::{self, PolicyTable};
use crate::whittle::{self, BinaryClientModel};
use crate::model::{Action, ChannelModel};

// ── Errors and exit codes ────────────────────────────────────────────────

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable, or invalid configuration (exit 2).
    Config(String),
    /// Solver/learning failures: non-convergence, singular systems (exit 1).
    Numerical(String),
    /// A requested verification failed under `--strict` (exit 3).
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 1,
            CliError::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

// ── Config schema ────────────────────────────────────────────────────────

/// Top-level configuration document. Strict: unknown keys anywhere are
/// rejected before any computation starts. All defaults live here.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub pricing: PricingConfig,
    #[serde(default)]
    pub whittle: WhittleConfig,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub clients: Vec<ClientConfig>,
    pub constraint: ConstraintConfig,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_slots: bool,
    #[serde(default)]
    pub policy: PolicyConfig,
}

fn default_horizon() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub model: ClientModelSpec,
    #[serde(default)]
    pub channel: Option<ChannelModelSpec>,
    #[serde(default)]
    pub initial_channel: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    AveragePower { budget: f64 },
    Channels { count: usize },
    PeakPower { limit: f64 },
}

/// What the simulator runs for each client.
#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    /// Average-cost-optimal policy at `solver.price` (channel-aware when the
    /// client has a channel model).
    #[default]
    OptimalAverage,
    /// Discounted-optimal policy at `solver.price` and `solver.discount`.
    OptimalDiscounted,
    /// Top-M activation by per-state indices (channels constraint only).
    WhittleTopM,
    /// One-step-lookahead index over average-cost biases (channels only).
    SeparableIndex,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub discount: f64,
    pub tol: f64,
    /// Power price for single-client solves and simulator policies.
    pub price: f64,
    /// Stages checked by the finite-horizon monotonicity report.
    pub stages: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { discount: 0.99, tol: 1e-9, price: 0.0, stages: 50 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricingConfig {
    pub budget: f64,
    pub step_a: f64,
    pub step_b: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self { budget: 1.0, step_a: 1.0, step_b: 10.0, max_iters: 500, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhittleConfig {
    pub transmit_quality: usize,
    pub transmit_power: usize,
    pub grid_points: usize,
    /// Defaults to each client's own price cap when absent.
    pub price_cap: Option<f64>,
    pub tol: f64,
}

impl Default for WhittleConfig {
    fn default() -> Self {
        Self { transmit_quality: 0, transmit_power: 1, grid_points: 50, price_cap: None, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub mode: LearnMode,
    pub variant: VariantConfig,
    pub discount: f64,
    pub lr_exponent: f64,
    pub lr_scale: f64,
    pub price_exponent: f64,
    pub price_scale: f64,
    pub tau_scale: f64,
    pub epsilon: f64,
    pub horizon: u64,
    pub convention: ConventionConfig,
    /// Checkpoint file to resume from (single-client mode).
    pub resume: Option<PathBuf>,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            mode: LearnMode::SingleClient,
            variant: VariantConfig::Relative,
            discount: 0.99,
            lr_exponent: 0.7,
            lr_scale: 1.0,
            price_exponent: 0.85,
            price_scale: 1.0,
            tau_scale: 1.0,
            epsilon: 0.1,
            horizon: 1_000_000,
            convention: ConventionConfig::SoftMin,
            resume: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum LearnMode {
    SingleClient,
    TwoTimescale,
    Index,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum VariantConfig {
    Relative,
    Discounted,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ConventionConfig {
    SoftMin,
    LiteralSoftMax,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl LearningConfig {
    fn schedules(&self) -> Schedules {
        Schedules {
            lr_exponent: self.lr_exponent,
            lr_scale: self.lr_scale,
            price_exponent: self.price_exponent,
            price_scale: self.price_scale,
            tau_scale: self.tau_scale,
            epsilon: self.epsilon,
        }
    }

    fn variant(&self) -> QVariant {
        match self.variant {
            VariantConfig::Relative => QVariant::Relative,
            VariantConfig::Discounted => QVariant::Discounted { discount: self.discount },
        }
    }

    fn convention(&self) -> BoltzmannConvention {
        match self.convention {
            ConventionConfig::SoftMin => BoltzmannConvention::SoftMin,
            ConventionConfig::LiteralSoftMax => BoltzmannConvention::LiteralSoftMax,
        }
    }
}

// ── Loaded context ───────────────────────────────────────────────────────

pub struct Context {
    config: ConfigDocument,
    config_sha256: String,
    seed: u64,
    strict: bool,
    out_dir: PathBuf,
    models: Vec<ClientModel>,
    channels: Vec<Option<ChannelModel>>,
    initial_channels: Vec<usize>,
}

impl Context {
    fn load(args: &Cli) -> Result<Self, CliError> {
        let path = args
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
        let raw = fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(&raw);
        let config_sha256 = to_hex(&hasher.finalize());
        let config: ConfigDocument =
            serde_json::from_slice(&raw).map_err(config_err)?;
        if config.scenario.clients.is_empty() {
            return Err(CliError::Config("scenario needs at least one client".into()));
        }
        let mut models = Vec::new();
        let mut channels = Vec::new();
        let mut initial_channels = Vec::new();
        for (i, client) in config.scenario.clients.iter().enumerate() {
            let mut model = ClientModel::try_from(client.model.clone())
                .map_err(|e| config_err(format!("client {i}: {e}")))?;
            if let ConstraintConfig::PeakPower { limit } = config.scenario.constraint {
                // Peak power is an action-set filter applied at load time.
                model = model
                    .with_peak_power(limit)
                    .map_err(|e| config_err(format!("client {i}: {e}")))?;
            }
            let channel = match &client.channel {
                Some(spec) => Some(
                    ChannelModel::new(
                        &model,
                        spec.transition_matrix.clone(),
                        spec.per_state_success.clone(),
                    )
                    .map_err(|e| config_err(format!("client {i} channel: {e}")))?,
                ),
                None => None,
            };
            models.push(model);
            channels.push(channel);
            initial_channels.push(client.initial_channel);
        }
        let seed = args.seed.unwrap_or(config.scenario.seed);
        let out_dir = args.out.clone().unwrap_or_else(|| config.output.dir.clone());
        Ok(Self {
            strict: args.strict,
            seed,
            out_dir,
            config_sha256,
            models,
            channels,
            initial_channels,
            config,
        })
    }

    fn scenario(&self) -> Scenario {
        let constraint = match self.config.scenario.constraint {
            ConstraintConfig::AveragePower { budget } => ConstraintMode::AveragePower { budget },
            ConstraintConfig::Channels { count } => ConstraintMode::Channels { count },
            ConstraintConfig::PeakPower { limit } => ConstraintMode::PeakPower { limit },
        };
        Scenario {
            clients: self
                .models
                .iter()
                .zip(self.channels.iter())
                .zip(self.initial_channels.iter())
                .map(|((m, ch), &c0)| ScenarioClient {
                    model: m.clone(),
                    channel: ch.clone(),
                    initial_channel: c0,
                })
                .collect(),
            constraint,
            horizon: self.config.scenario.horizon,
            seed: self.seed,
            record_slots: self.config.scenario.record_slots,
        }
    }

    fn write_text(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| config_err(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        fs::write(&path, body).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_csv(&self, name: &str, schema: &str, body: &str) -> Result<PathBuf, CliError> {
        let header = format!(
            "# schema={schema}\n# config_sha256={} seed={}\n",
            self.config_sha256, self.seed
        );
        self.write_text(name, &format!("{header}{body}"))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let wrapped = serde_json::json!({
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "result": value,
        });
        self.write_text(name, &serde_json::to_string_pretty(&wrapped).expect("serializable"))
    }

    fn binary_models(&self) -> Result<Vec<BinaryClientModel>, CliError> {
        let w = &self.config.whittle;
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                BinaryClientModel::new(
                    m.clone(),
                    Action::new(w.transmit_quality, w.transmit_power),
                )
                .map_err(|e| config_err(format!("client {i}: {e}")))
            })
            .collect()
    }
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn policy_rows(policy: &PolicyTable) -> String {
    let mut rows = String::from("level,channel,quality,power\n");
    for c in 0..policy.num_channels() {
        for l in 0..policy.num_levels() {
            let a = policy.action_at(l as u32, c);
            rows.push_str(&format!("{l},{c},{},{}\n", a.quality, a.power));
        }
    }
    rows
}

// ── Commands ─────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct SolveReport {
    client: usize,
    price: f64,
    gain: f64,
    bias: Vec<f64>,
    iterations: usize,
    residual: f64,
    policy: PolicyTable,
    discounted_policy: PolicyTable,
    threshold_passed: bool,
    threshold_violations: usize,
    monotone_stages_checked: usize,
    monotone_stages_failed: usize,
}

/// Single-client solves at the configured price, with structure verdicts.
pub fn cmd_solve(ctx: &Context) -> Result<(), CliError> {
    let s = ctx.config.solver;
    let mut all_ok = true;
    let mut reports = Vec::new();
    for (i, model) in ctx.models.iter().enumerate() {
        let average = match &ctx.channels[i] {
            Some(ch) => solver::average_cost_solve_fading(model, ch, s.price, s.tol),
            None => solver::average_cost_solve(model, s.price, s.tol),
        }
        .map_err(numerical_err)?;
        let discounted = solver::discounted_value_iteration(model, s.price, s.discount, s.tol)
            .map_err(numerical_err)?;
        let threshold = solver::verify_threshold(&discounted.policy, model);
        let (_, gaps) = solver::backward_induction(model, s.price, s.discount, s.stages)
            .map_err(numerical_err)?;
        let failed_stages =
            gaps.iter().filter(|g| !solver::verify_d_monotone(g).passed).count();
        all_ok &= threshold.passed && failed_stages == 0;
        ctx.write_csv(
            &format!("policy_client_{i}.csv"),
            "das-index.policy.v1",
            &policy_rows(&average.policy),
        )?;
        reports.push(SolveReport {
            client: i,
            price: s.price,
            gain: average.gain.unwrap_or(f64::NAN),
            bias: average.values.clone(),
            iterations: average.iterations,
            residual: average.residual,
            policy: average.policy,
            discounted_policy: discounted.policy,
            threshold_passed: threshold.passed,
            threshold_violations: threshold.violations.len(),
            monotone_stages_checked: gaps.len(),
            monotone_stages_failed: failed_stages,
        });
    }
    for r in &reports {
        println!(
            "client {}: gain {:.6} at price {} (threshold {}, monotone {}/{})",
            r.client,
            r.gain,
            r.price,
            if r.threshold_passed { "ok" } else { "VIOLATED" },
            r.monotone_stages_checked - r.monotone_stages_failed,
            r.monotone_stages_checked
        );
    }
    ctx.write_json("solve.json", &reports)?;
    if ctx.strict && !all_ok {
        return Err(CliError::Verification("structure verification failed".into()));
    }
    Ok(())
}

/// Projected subgradient price ascent over the scenario's clients.
pub fn cmd_price(ctx: &Context) -> Result<(), CliError> {
    let p = ctx.config.pricing;
    let schedule = PriceSchedule { a: p.step_a, b: p.step_b };
    let out = pricing::price_iteration(
        &ctx.models,
        p.budget,
        schedule,
        p.max_iters,
        p.tol,
        ctx.config.solver.tol,
    )
    .map_err(numerical_err)?;
    ctx.write_csv("price_iterations.csv", "das-index.price.v1", &out.history_csv())?;
    #[derive(Serialize)]
    struct PriceReport {
        best_price: f64,
        best_dual: f64,
        converged: bool,
        iterations: usize,
        constraint_violation: f64,
        complementary_slackness: f64,
        per_client_power: Vec<f64>,
        per_client_qoe: Vec<f64>,
        policies: Vec<PolicyTable>,
    }
    println!(
        "price ascent: best price {:.6}, dual {:.6}, converged {}, {} iterations",
        out.best_price, out.best_dual, out.converged, out.iterations
    );
    let report = PriceReport {
        best_price: out.best_price,
        best_dual: out.best_dual,
        converged: out.converged,
        iterations: out.iterations,
        constraint_violation: out.constraint_violation,
        complementary_slackness: out.complementary_slackness,
        per_client_power: out.per_client_power,
        per_client_qoe: out.per_client_qoe,
        policies: out.policies,
    };
    ctx.write_json("price.json", &report)?;
    if ctx.strict && !report.converged {
        return Err(CliError::Verification("price ascent did not converge".into()));
    }
    Ok(())
}

/// Per-client activation indices plus the indexability report.
pub fn cmd_whittle(ctx: &Context) -> Result<(), CliError> {
    let w = ctx.config.whittle;
    let bins = ctx.binary_models()?;
    let mut tables = Vec::new();
    let mut reports = Vec::new();
    for (i, bin) in bins.iter().enumerate() {
        let cap = w.price_cap.unwrap_or_else(|| bin.default_price_cap());
        let grid: Vec<f64> = (0..w.grid_points)
            .map(|k| cap * k as f64 / (w.grid_points.max(2) - 1) as f64)
            .collect();
        let report = whittle::check_indexability(bin, &grid).map_err(numerical_err)?;
        let table = whittle::index_table(bin, cap, w.tol).map_err(numerical_err)?;
        println!(
            "client {i}: indexable {}, indices {:?}",
            report.passed,
            table.indices.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
        tables.push(table);
        reports.push(report);
    }
    ctx.write_csv(
        "whittle_indices.csv",
        "das-index.indices.v1",
        &whittle::index_tables_csv(&tables),
    )?;
    ctx.write_json("indexability.json", &reports)?;
    if ctx.strict && reports.iter().any(|r| !r.passed) {
        return Err(CliError::Verification("passive sets failed to nest".into()));
    }
    Ok(())
}

/// Tabular Q-learning runs; writes resumable checkpoints and curves.
pub fn cmd_learn(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config.learning;
    let schedules = cfg.schedules();
    match cfg.mode {
        LearnMode::SingleClient => {
            let resume = match &cfg.resume {
                Some(path) => {
                    let raw = fs::read_to_string(path)
                        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                    Some(learning::QTable::from_json(&raw).map_err(config_err)?)
                }
                None => None,
            };
            let mut curves = String::from("client,step,mean_cost,gain_estimate\n");
            for (i, model) in ctx.models.iter().enumerate() {
                let out = learning::single_client_q_run(
                    model,
                    ctx.config.solver.price,
                    cfg.variant(),
                    &schedules,
                    cfg.horizon,
                    ctx.seed.wrapping_add(i as u64),
                    resume.clone(),
                )
                .map_err(numerical_err)?;
                println!(
                    "client {i}: mean cost {:.6}, gain estimate {:.6} after {} steps",
                    out.mean_cost, out.averaged_gain_estimate, out.steps
                );
                curves.push_str(&format!(
                    "{i},{},{},{}\n",
                    out.steps, out.mean_cost, out.averaged_gain_estimate
                ));
                ctx.write_text(&format!("qtable_client_{i}.json"), &out.table.to_json())?;
            }
            ctx.write_csv("learning_curves.csv", "das-index.learning.v1", &curves)?;
        }
        LearnMode::TwoTimescale => {
            let budget = ctx.config.pricing.budget;
            let out = learning::two_timescale_run(
                &ctx.models,
                budget,
                cfg.variant(),
                &schedules,
                cfg.horizon,
                ctx.seed,
            )
            .map_err(numerical_err)?;
            println!(
                "two-timescale: final price {:.6}, mean power {:.6} (budget {budget})",
                out.final_price, out.mean_power
            );
            let mut curve = String::from("step,price\n");
            for (t, p) in &out.price_trace {
                curve.push_str(&format!("{t},{p}\n"));
            }
            ctx.write_csv("price_trace.csv", "das-index.learning.v1", &curve)?;
            for (i, table) in out.tables.iter().enumerate() {
                ctx.write_text(&format!("qtable_client_{i}.json"), &table.to_json())?;
            }
            #[derive(Serialize)]
            struct TwoTimescaleReport {
                final_price: f64,
                mean_power: f64,
                late_mean_power: f64,
                mean_cost: f64,
                budget: f64,
            }
            ctx.write_json(
                "two_timescale.json",
                &TwoTimescaleReport {
                    final_price: out.final_price,
                    mean_power: out.mean_power,
                    late_mean_power: out.late_mean_power,
                    mean_cost: out.mean_cost,
                    budget,
                },
            )?;
        }
        LearnMode::Index => {
            let count = match ctx.config.scenario.constraint {
                ConstraintConfig::Channels { count } => count,
                _ => {
                    return Err(CliError::Config(
                        "index learning requires the channels constraint".into(),
                    ))
                }
            };
            let out = learning::q_index_run(
                &ctx.models,
                count,
                cfg.variant(),
                &schedules,
                cfg.convention(),
                cfg.horizon,
                ctx.seed,
            )
            .map_err(numerical_err)?;
            println!(
                "index learning: mean cost {:.6}, late mean cost {:.6}",
                out.mean_cost, out.late_mean_cost
            );
            for (i, table) in out.tables.iter().enumerate() {
                ctx.write_text(&format!("qtable_client_{i}.json"), &table.to_json())?;
            }
            #[derive(Serialize)]
            struct IndexLearnReport {
                mean_cost: f64,
                late_mean_cost: f64,
                steps: u64,
            }
            ctx.write_json(
                "index_learning.json",
                &IndexLearnReport {
                    mean_cost: out.mean_cost,
                    late_mean_cost: out.late_mean_cost,
                    steps: out.steps,
                },
            )?;
        }
    }
    Ok(())
}

fn build_scheduler(ctx: &Context) -> Result<Box<dyn sim::Scheduler>, CliError> {
    let s = ctx.config.solver;
    match ctx.config.scenario.policy {
        PolicyConfig::OptimalAverage | PolicyConfig::OptimalDiscounted => {
            let mut policies = Vec::new();
            for (i, model) in ctx.models.iter().enumerate() {
                let solve = match (&ctx.channels[i], ctx.config.scenario.policy) {
                    (Some(ch), PolicyConfig::OptimalAverage) => {
                        solver::average_cost_solve_fading(model, ch, s.price, s.tol)
                    }
                    (None, PolicyConfig::OptimalAverage) => {
                        solver::average_cost_solve(model, s.price, s.tol)
                    }
                    (None, PolicyConfig::OptimalDiscounted) => {
                        solver::discounted_value_iteration(model, s.price, s.discount, s.tol)
                    }
                    (Some(_), PolicyConfig::OptimalDiscounted) => {
                        return Err(CliError::Config(
                            "discounted simulator policies do not support channels".into(),
                        ))
                    }
                    _ => unreachable!(),
                }
                .map_err(numerical_err)?;
                policies.push(solve.policy);
            }
            Ok(Box::new(sim::FixedPolicies { policies }))
        }
        PolicyConfig::WhittleTopM => {
            let count = match ctx.config.scenario.constraint {
                ConstraintConfig::Channels { count } => count,
                _ => {
                    return Err(CliError::Config(
                        "whittle_top_m requires the channels constraint".into(),
                    ))
                }
            };
            if ctx.channels.iter().any(Option::is_some) {
                return Err(CliError::Config(
                    "whittle_top_m policies run on i.i.d. channels only".into(),
                ));
            }
            let w = ctx.config.whittle;
            let bins = ctx.binary_models()?;
            let mut tables = Vec::new();
            for bin in &bins {
                let cap = w.price_cap.unwrap_or_else(|| bin.default_price_cap());
                tables.push(whittle::index_table(bin, cap, w.tol).map_err(numerical_err)?);
            }
            Ok(Box::new(sim::WhittleScheduler {
                tables,
                transmit: bins.iter().map(|b| b.transmit_action()).collect(),
                channels: count,
            }))
        }
        PolicyConfig::SeparableIndex => {
            let count = match ctx.config.scenario.constraint {
                ConstraintConfig::Channels { count } => count,
                _ => {
                    return Err(CliError::Config(
                        "separable_index requires the channels constraint".into(),
                    ))
                }
            };
            if ctx.channels.iter().any(Option::is_some) {
                return Err(CliError::Config(
                    "separable_index policies run on i.i.d. channels only".into(),
                ));
            }
            let mut values = Vec::new();
            for model in &ctx.models {
                let solve =
                    solver::average_cost_solve(model, s.price, s.tol).map_err(numerical_err)?;
                values.push(solve.values);
            }
            Ok(Box::new(sim::SeparableIndexScheduler {
                models: ctx.models.clone(),
                values,
                channels: count,
            }))
        }
    }
}

/// Simulates the configured scenario and writes the trace and metrics.
pub fn cmd_simulate(ctx: &Context) -> Result<(), CliError> {
    let scenario = ctx.scenario();
    let mut scheduler = build_scheduler(ctx)?;
    let has_channels = scenario.clients.iter().any(|c| c.channel.is_some());
    let trace = if has_channels {
        sim::run_fading(&scenario, scheduler.as_mut())
    } else {
        sim::run(&scenario, scheduler.as_mut())
    }
    .map_err(numerical_err)?;
    let report = sim::metrics_report(&trace);
    println!(
        "simulated {} slots: total objective {:.6}, total power {:.6}",
        trace.horizon, report.total_objective, report.total_power
    );
    if trace.records.is_some() {
        let csv = sim::trace_csv(&trace).map_err(numerical_err)?;
        ctx.write_text("trace.csv", &csv)?;
    }
    ctx.write_json("metrics.json", &report)?;
    Ok(())
}

/// Full verification suite; exit 3 when any check fails.
pub fn cmd_verify(seed: u64, ctx: Option<&Context>) -> Result<(), CliError> {
    let outcomes = acceptance::run_all(seed);
    for o in &outcomes {
        println!("{}", o.line());
    }
    if let Some(ctx) = ctx {
        #[derive(Serialize)]
        struct VerifyRow {
            id: usize,
            name: &'static str,
            passed: bool,
            detail: String,
        }
        let rows: Vec<VerifyRow> = outcomes
            .iter()
            .map(|o| VerifyRow {
                id: o.id,
                name: o.name,
                passed: o.passed,
                detail: o.detail.clone(),
            })
            .collect();
        ctx.write_json("verify.json", &rows)?;
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("criteria {failed:?} failed")))
    }
}

// ── Entry point ──────────────────────────────────────────────────────────

#[derive(Debug, Parser)]
#[command(name = "das-index", version, about = "Buffer/quality/power scheduling toolkit: exact solvers, price ascent, activation indices, Q-learning, and a slot-level simulator")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the scenario seed (Monte Carlo draws only; exact solves
    /// are deterministic regardless).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Turn verification verdicts into nonzero exits.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads (falls back to DAS_INDEX_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact single-client solves with structure verification.
    Solve,
    /// Subgradient price ascent across the scenario's clients.
    Price,
    /// Activation indices and the indexability report.
    Whittle,
    /// Tabular Q-learning (single-client, two-timescale, or index mode).
    Learn,
    /// Slot-level simulation of the configured scenario.
    Simulate,
    /// Run the full verification suite.
    Verify,
}

fn configure_threads(requested: Option<usize>) {
    let threads = requested.or_else(|| {
        std::env::var("DAS_INDEX_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args` and runs the selected command; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version print and exit 0; real parse errors exit 2.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads(cli.threads);
    let result = match cli.command {
        Command::Verify => {
            let ctx = match cli.config {
                Some(_) => match Context::load(&cli) {
                    Ok(ctx) => Some(ctx),
                    Err(e) => {
                        eprintln!("{e}");
                        return e.exit_code();
                    }
                },
                None => None,
            };
            let seed = cli.seed.or(ctx.as_ref().map(|c| c.seed)).unwrap_or(acceptance::DEFAULT_SEED);
            cmd_verify(seed, ctx.as_ref())
        }
        ref command => {
            let ctx = match Context::load(&cli) {
                Ok(ctx) => ctx,
                Err(e) => {
                    eprintln!("{e}");
                    return e.exit_code();
                }
            };
            match command {
                Command::Solve => cmd_solve(&ctx),
                Command::Price => cmd_price(&ctx),
                Command::Whittle => cmd_whittle(&ctx),
                Command::Learn => cmd_learn(&ctx),
                Command::Simulate => cmd_simulate(&ctx),
                Command::Verify => unreachable!(),
            }
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// CLI entry used by `main`.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}
