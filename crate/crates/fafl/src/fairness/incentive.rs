//! Expectation fairness through incentive sharing.
//!
//! Each round the budget is split proportionally to contribution scores,
//! `pi_i = budget * score_i / sum_j score_j`, and every client best-responds
//! to its trailing payout rate with effort
//! `s' = rate / (2 * cost_coeff)` — the argmax of `rate*s - cost*s^2`.
//! Effort, clamped to [0,1], scales the fraction of the client's shard used
//! for local training, so free riders fade while contributors stay engaged.

use crate::error::{FaflError, Result};
use crate::model::ParamVector;

use super::{
    aggregate_fedavg, select_all, ClientProfile, ClientUpdate, LocalPlan, Mechanism,
    MechanismConfig, MechanismKind, RoundState,
};

/// Smoothing for the trailing payout-per-effort estimate.
pub const RATE_SMOOTHING: f64 = 0.2;
/// Effort floor when converting payouts into rates.
pub const EFFORT_FLOOR: f64 = 1e-6;

/// A degradation-free score in [0,1] for payout sharing: positive holdout
/// gains earn, anything else earns nothing.
pub fn incentive_score(accuracy_gain: f64) -> f64 {
    (accuracy_gain / 0.05).clamp(0.0, 1.0)
}

/// Split the budget by score and update every client's effort strategy.
/// Returns the payouts; their sum never exceeds the budget (equality up to
/// float rounding whenever any score is positive).
pub fn incentive_step(
    profiles: &mut [ClientProfile],
    contribution_scores: &[f64],
    budget: f64,
    cost_coeff: f64,
) -> Result<Vec<f64>> {
    if budget < 0.0 {
        return Err(FaflError::Config("budget must be non-negative".into()));
    }
    if cost_coeff <= 0.0 || cost_coeff.is_nan() {
        return Err(FaflError::Config("cost_coeff must be positive".into()));
    }
    if profiles.len() != contribution_scores.len() {
        return Err(FaflError::Config("scores length mismatch".into()));
    }
    if contribution_scores.iter().any(|&s| s < 0.0) {
        return Err(FaflError::Config("contribution scores must be non-negative".into()));
    }

    let total: f64 = contribution_scores.iter().sum();
    let mut payouts: Vec<f64> = if total > 0.0 {
        contribution_scores.iter().map(|&s| budget * s / total).collect()
    } else {
        vec![0.0; profiles.len()]
    };

    // Trim float overshoot so the budget bound holds under exact comparison.
    let mut paid: f64 = payouts.iter().sum();
    while paid > budget {
        let (argmax, _) = payouts
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        payouts[argmax] -= paid - budget;
        paid = payouts.iter().sum();
    }

    for (p, &payout) in profiles.iter_mut().zip(&payouts) {
        let rate = payout / p.strategy.max(EFFORT_FLOOR);
        p.rate_estimate = (1.0 - RATE_SMOOTHING) * p.rate_estimate + RATE_SMOOTHING * rate;
        p.strategy = (p.rate_estimate / (2.0 * cost_coeff)).clamp(0.0, 1.0);
        p.cumulative_payout += payout;
    }
    Ok(payouts)
}

pub struct Incentive;

impl Mechanism for Incentive {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Incentive
    }

    fn select(
        &self,
        state: &mut RoundState,
        profiles: &[ClientProfile],
        _cfg: &MechanismConfig,
    ) -> Result<Vec<bool>> {
        select_all(state, profiles)
    }

    fn needs_contribution_scores(&self) -> bool {
        true
    }

    fn local_plan(
        &self,
        _state: &RoundState,
        profile: &ClientProfile,
        _cfg: &MechanismConfig,
    ) -> LocalPlan {
        LocalPlan { duals: None, data_fraction: profile.strategy.clamp(0.0, 1.0) }
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
        state: &mut RoundState,
        updates: &[ClientUpdate],
        profiles: &mut [ClientProfile],
        cfg: &MechanismConfig,
    ) {
        let mut scores = vec![0.0; profiles.len()];
        for u in updates {
            if let Some(gain) = u.accuracy_gain {
                scores[u.client_id] = incentive_score(gain);
            }
        }
        match incentive_step(profiles, &scores, cfg.budget, cfg.cost_coeff) {
            Ok(payouts) => {
                state.budget_remaining = cfg.budget - payouts.iter().sum::<f64>();
            }
            Err(e) => log::warn!("incentive step skipped: {e}"),
        }
    }
}
