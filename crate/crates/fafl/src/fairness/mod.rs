//! Pluggable fairness mechanisms: select clients, aggregate their updates,
//! then apply post-round feedback.
//!
//! Six strategies share one interface: the FedAvg baseline, bandit-driven
//! client selection with a long-term participation constraint, reputation
//! thresholding, bounded group loss with dual ascent, agnostic minimax
//! mixtures, and incentive sharing. Mechanism state (reputations, duals,
//! mixture, queues, budget) is mutated only at the aggregation barrier.

pub mod afl;
pub mod adversary;
pub mod bgl;
pub mod incentive;
pub mod ltf;
pub mod reputation;

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FaflError, Result};
use crate::model::{ModelDelta, ParamVector};

/// Mechanism identifiers as used in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    FedAvg,
    Ltf,
    Reputation,
    Bgl,
    Afl,
    Incentive,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 6] = [
        MechanismKind::FedAvg,
        MechanismKind::Ltf,
        MechanismKind::Reputation,
        MechanismKind::Bgl,
        MechanismKind::Afl,
        MechanismKind::Incentive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MechanismKind::FedAvg => "fedavg",
            MechanismKind::Ltf => "ltf",
            MechanismKind::Reputation => "reputation",
            MechanismKind::Bgl => "bgl",
            MechanismKind::Afl => "afl",
            MechanismKind::Incentive => "incentive",
        }
    }

    /// Scheme name used in reports and chart legends.
    pub fn display_name(&self, adversaries: usize) -> String {
        match self {
            MechanismKind::FedAvg => "AES-FL".to_string(),
            MechanismKind::Ltf => "LTF Constraint".to_string(),
            MechanismKind::Reputation => format!("Reputation A = {adversaries}"),
            MechanismKind::Bgl => "BGL Constraint".to_string(),
            MechanismKind::Afl => "AFL Mixture".to_string(),
            MechanismKind::Incentive => "Incentive Sharing".to_string(),
        }
    }
}

impl FromStr for MechanismKind {
    type Err = FaflError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fedavg" | "aes-fl" => Ok(MechanismKind::FedAvg),
            "ltf" => Ok(MechanismKind::Ltf),
            "reputation" => Ok(MechanismKind::Reputation),
            "bgl" => Ok(MechanismKind::Bgl),
            "afl" => Ok(MechanismKind::Afl),
            "incentive" => Ok(MechanismKind::Incentive),
            other => Err(FaflError::Config(format!(
                "unknown mechanism '{other}' (expected one of fedavg, ltf, reputation, bgl, afl, incentive)"
            ))),
        }
    }
}

/// Mechanism hyperparameters. Constants the source formulations leave open
/// are pinned here with validated ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// Gradient regularization for reputation weighting.
    pub gamma: f64,
    /// Reputation threshold: clients below it are excluded from aggregation.
    pub rho: f64,
    /// Reputation smoothing factor.
    pub epsilon: f64,
    /// Per-group loss bound.
    pub zeta: f64,
    /// Dual ascent step for the group-loss constraint.
    pub dual_step: f64,
    /// Mixture ascent step for agnostic aggregation.
    pub mixture_step: f64,
    /// Minimum long-term selection rate per client.
    pub beta: f64,
    /// Clients selected per round by selection-based mechanisms;
    /// 0 means auto (half the federation, at least one).
    pub select_count: usize,
    /// Per-round incentive budget.
    pub budget: f64,
    /// Quadratic effort cost coefficient.
    pub cost_coeff: f64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            rho: 0.4,
            epsilon: 0.2,
            zeta: 0.6,
            dual_step: 0.05,
            mixture_step: 0.1,
            beta: 0.2,
            select_count: 0,
            budget: 10.0,
            cost_coeff: 1.0,
        }
    }
}

impl MechanismConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.gamma <= 0.0 || self.gamma.is_nan() {
            return Err(FaflError::Config("gamma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(FaflError::Config("rho must lie in [0,1]".into()));
        }
        if self.epsilon <= 0.0 || self.epsilon > 1.0 || self.epsilon.is_nan() {
            return Err(FaflError::Config("epsilon must lie in (0,1]".into()));
        }
        if self.zeta <= 0.0 || self.zeta.is_nan() {
            return Err(FaflError::Config("zeta must be positive".into()));
        }
        if self.dual_step <= 0.0 || self.dual_step.is_nan() {
            return Err(FaflError::Config("dual_step must be positive".into()));
        }
        if self.mixture_step <= 0.0 || self.mixture_step.is_nan() {
            return Err(FaflError::Config("mixture_step must be positive".into()));
        }
        if self.beta <= 0.0 || self.beta > 1.0 || self.beta.is_nan() {
            return Err(FaflError::Config("beta must lie in (0,1]".into()));
        }
        if self.select_count > num_clients {
            return Err(FaflError::Config(format!(
                "select_count {} exceeds client count {num_clients}",
                self.select_count
            )));
        }
        if self.budget < 0.0 {
            return Err(FaflError::Config("budget must be non-negative".into()));
        }
        if self.cost_coeff <= 0.0 || self.cost_coeff.is_nan() {
            return Err(FaflError::Config("cost_coeff must be positive".into()));
        }
        Ok(())
    }

    /// Effective per-round selection size.
    pub fn resolved_select_count(&self, num_clients: usize) -> usize {
        if self.select_count == 0 {
            (num_clients / 2).max(1)
        } else {
            self.select_count
        }
    }
}

/// Per-client bookkeeping carried across rounds.
#[derive(Debug, Clone, Serialize)]
pub struct ClientProfile {
    pub id: usize,
    /// Smoothed contribution reputation in [0,1].
    pub reputation: f64,
    /// Rounds this client was selected.
    pub selection_count: u64,
    /// Bandit reward observations and their running mean.
    pub reward_count: u64,
    pub mean_reward: f64,
    /// Last reported local loss (context feature).
    pub recent_loss: f64,
    /// Shard size (context feature).
    pub shard_size: usize,
    pub adversarial: bool,
    /// Effort level for the incentive mechanism, clamped to [0,1] when used
    /// as the local data fraction.
    pub strategy: f64,
    /// Trailing estimate of payout per unit effort.
    pub rate_estimate: f64,
    pub cumulative_payout: f64,
}

impl ClientProfile {
    pub fn new(id: usize, shard_size: usize, adversarial: bool) -> Self {
        Self {
            id,
            reputation: 0.5,
            selection_count: 0,
            reward_count: 0,
            mean_reward: 0.0,
            recent_loss: 0.0,
            shard_size,
            adversarial,
            strategy: 1.0,
            rate_estimate: 0.0,
            cumulative_payout: 0.0,
        }
    }

    /// Context feature vector: shard size, recent local loss, past
    /// contribution score.
    pub fn context(&self) -> [f64; 3] {
        [self.shard_size as f64, self.recent_loss, self.mean_reward]
    }
}

/// Per-round shared state, including every mechanism-specific piece:
/// dual variables, mixture weights, virtual queues and the incentive budget.
#[derive(Debug, Clone)]
pub struct RoundState {
    pub t: usize,
    pub w_global: ParamVector,
    /// Previous round's aggregate change, broadcast to every local protocol.
    pub global_delta: ModelDelta,
    pub indicators: Vec<bool>,
    pub duals: Vec<f64>,
    pub mixture: Vec<f64>,
    pub queues: Vec<f64>,
    pub budget_remaining: f64,
}

impl RoundState {
    pub fn new(w_global: ParamVector, num_clients: usize, num_groups: usize, budget: f64) -> Self {
        let len = w_global.len();
        Self {
            t: 0,
            w_global,
            global_delta: ModelDelta::zeros(len),
            indicators: vec![false; num_clients],
            duals: vec![0.0; num_groups],
            mixture: vec![1.0 / num_clients as f64; num_clients],
            queues: vec![0.0; num_clients],
            budget_remaining: budget,
        }
    }

    /// Mixture on the simplex, duals and queues non-negative.
    pub fn check_invariants(&self) -> Result<()> {
        let sum: f64 = self.mixture.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.mixture.iter().any(|&v| v < 0.0) {
            return Err(FaflError::Aggregation(format!("mixture left the simplex (sum {sum})")));
        }
        if self.duals.iter().any(|&v| v < 0.0) {
            return Err(FaflError::Aggregation("negative dual variable".into()));
        }
        if self.queues.iter().any(|&v| v < 0.0) {
            return Err(FaflError::Aggregation("negative queue".into()));
        }
        Ok(())
    }
}

/// What a selected client sends back after local training.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub weights: ParamVector,
    pub delta: ModelDelta,
    /// Shard mean loss at the received global weights.
    pub local_loss: f64,
    /// Per-group shard losses at the received global weights.
    pub group_losses: BTreeMap<u32, f64>,
    /// Holdout accuracy change when this update alone replaces the global
    /// model; `None` when the mechanism does not score contributions.
    pub accuracy_gain: Option<f64>,
}

/// Instructions for a client's local step this round.
#[derive(Debug, Clone)]
pub struct LocalPlan {
    /// Dual variables for the penalized local objective.
    pub duals: Option<Vec<f64>>,
    /// Fraction of the shard to train on (effort-scaled for incentives).
    pub data_fraction: f64,
}

impl Default for LocalPlan {
    fn default() -> Self {
        Self { duals: None, data_fraction: 1.0 }
    }
}

/// The select → aggregate → feedback strategy interface.
pub trait Mechanism: Send + Sync {
    fn kind(&self) -> MechanismKind;

    /// Round-start selection. Selection-based mechanisms mark exactly
    /// `select_count` clients; the rest select everyone and filter at
    /// aggregation instead.
    fn select(
        &self,
        state: &mut RoundState,
        profiles: &[ClientProfile],
        cfg: &MechanismConfig,
    ) -> Result<Vec<bool>>;

    /// Whether the engine must score each update against the server holdout.
    fn needs_contribution_scores(&self) -> bool {
        false
    }

    /// Local-step instructions for one client.
    fn local_plan(
        &self,
        _state: &RoundState,
        _profile: &ClientProfile,
        _cfg: &MechanismConfig,
    ) -> LocalPlan {
        LocalPlan::default()
    }

    /// Combine verified updates into the next global weights.
    fn aggregate(
        &self,
        state: &RoundState,
        updates: &[ClientUpdate],
        profiles: &[ClientProfile],
        cfg: &MechanismConfig,
    ) -> Result<ParamVector>;

    /// Post-aggregation feedback: reputations, duals, mixture, payouts.
    fn post_round(
        &self,
        state: &mut RoundState,
        updates: &[ClientUpdate],
        profiles: &mut [ClientProfile],
        cfg: &MechanismConfig,
    );
}

/// Instantiate a mechanism by kind.
pub fn make_mechanism(kind: MechanismKind) -> Box<dyn Mechanism> {
    match kind {
        MechanismKind::FedAvg => Box::new(FedAvg),
        MechanismKind::Ltf => Box::new(ltf::Ltf),
        MechanismKind::Reputation => Box::new(reputation::Reputation),
        MechanismKind::Bgl => Box::new(bgl::Bgl),
        MechanismKind::Afl => Box::new(afl::Afl),
        MechanismKind::Incentive => Box::new(incentive::Incentive),
    }
}

/// Elementwise mean of client parameter vectors.
pub fn aggregate_fedavg(weights: &[&ParamVector]) -> Result<ParamVector> {
    let first = weights
        .first()
        .ok_or_else(|| FaflError::Aggregation("no client weights to aggregate".into()))?;
    let len = first.len();
    if weights.iter().any(|w| w.len() != len) {
        return Err(FaflError::Aggregation("client weight lengths differ".into()));
    }
    let mut out = vec![0.0; len];
    for w in weights {
        for (o, v) in out.iter_mut().zip(&w.values) {
            *o += v;
        }
    }
    let inv = 1.0 / weights.len() as f64;
    for o in out.iter_mut() {
        *o *= inv;
    }
    Ok(ParamVector { arch: first.arch, values: out })
}

/// Select everyone.
fn select_all(state: &mut RoundState, profiles: &[ClientProfile]) -> Result<Vec<bool>> {
    let indicators = vec![true; profiles.len()];
    state.indicators = indicators.clone();
    Ok(indicators)
}

/// FedAvg baseline: full participation, plain mean, no feedback.
pub struct FedAvg;

impl Mechanism for FedAvg {
    fn kind(&self) -> MechanismKind {
        MechanismKind::FedAvg
    }

    fn select(
        &self,
        state: &mut RoundState,
        profiles: &[ClientProfile],
        _cfg: &MechanismConfig,
    ) -> Result<Vec<bool>> {
        select_all(state, profiles)
    }

    fn aggregate(
        &self,
        _state: &RoundState,
        updates: &[ClientUpdate],
        _profiles: &[ClientProfile],
        _cfg: &MechanismConfig,
    ) -> Result<ParamVector> {
        let weights: Vec<&ParamVector> = updates.iter().map(|u| &u.weights).collect();
        aggregate_fedavg(&weights)
    }

    fn post_round(
        &self,
        _state: &mut RoundState,
        _updates: &[ClientUpdate],
        _profiles: &mut [ClientProfile],
        _cfg: &MechanismConfig,
    ) {
    }
}
