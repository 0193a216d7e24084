//! Long-term fairness client selection.
//!
//! A contextual bandit scores each client by its mean observed contribution
//! reward plus a UCB exploration bonus, and a per-client virtual queue adds
//! pressure for clients falling behind the minimum selection rate `beta`:
//!
//! ```text
//! score_k = mean_reward_k + sqrt(2 ln t / n_k) + Q_k
//! Q_k <- max(Q_k + beta - I_k, 0)     (after selection)
//! ```
//!
//! Unobserved clients (n_k = 0) are selected first, ordered by queue
//! pressure then id. All ties break to the lowest client id.

use crate::error::{FaflError, Result};
use crate::model::ParamVector;

use super::{
    aggregate_fedavg, ClientProfile, ClientUpdate, Mechanism, MechanismConfig, MechanismKind,
    RoundState,
};

/// UCB-with-queues selection. Returns indicators with exactly
/// `cfg.select_count` set and applies the virtual-queue update to `queues`.
pub fn select_clients(
    t: usize,
    profiles: &[ClientProfile],
    queues: &mut [f64],
    cfg: &MechanismConfig,
) -> Result<Vec<bool>> {
    let k = profiles.len();
    let m = cfg.resolved_select_count(k);
    if m > k {
        return Err(FaflError::Config(format!("select_count {m} exceeds client count {k}")));
    }

    // (cold, -score, -queue, id): unexplored clients first, then by score.
    let mut order: Vec<usize> = (0..k).collect();
    let score = |p: &ClientProfile, q: f64| -> f64 {
        let bonus = (2.0 * (t.max(1) as f64).ln() / p.reward_count as f64).sqrt();
        p.mean_reward + bonus + q
    };
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&profiles[a], &profiles[b]);
        let cold_a = pa.reward_count == 0;
        let cold_b = pb.reward_count == 0;
        match (cold_a, cold_b) {
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (true, true) => queues[b]
                .partial_cmp(&queues[a])
                .unwrap()
                .then(a.cmp(&b)),
            (false, false) => {
                let sa = score(pa, queues[a]);
                let sb = score(pb, queues[b]);
                sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
            }
        }
    });

    let mut indicators = vec![false; k];
    for &i in order.iter().take(m) {
        indicators[i] = true;
    }
    for (q, &selected) in queues.iter_mut().zip(&indicators) {
        *q = (*q + cfg.beta - f64::from(selected)).max(0.0);
    }
    Ok(indicators)
}

/// Map a holdout accuracy gain onto a [0,1] bandit reward, centered at 0.5
/// with sensitivity 10 (a +/-5 point swing saturates).
pub fn reward_from_gain(gain: f64) -> f64 {
    (0.5 + 10.0 * gain).clamp(0.0, 1.0)
}

/// Fold one observed reward into the client's running mean.
pub fn record_reward(profile: &mut ClientProfile, reward: f64) {
    profile.reward_count += 1;
    profile.mean_reward += (reward - profile.mean_reward) / profile.reward_count as f64;
}

pub struct Ltf;

impl Mechanism for Ltf {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Ltf
    }

    fn select(
        &self,
        state: &mut RoundState,
        profiles: &[ClientProfile],
        cfg: &MechanismConfig,
    ) -> Result<Vec<bool>> {
        let indicators = select_clients(state.t, profiles, &mut state.queues, cfg)?;
        state.indicators = indicators.clone();
        Ok(indicators)
    }

    fn needs_contribution_scores(&self) -> bool {
        true
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
        updates: &[ClientUpdate],
        profiles: &mut [ClientProfile],
        _cfg: &MechanismConfig,
    ) {
        for u in updates {
            if let Some(gain) = u.accuracy_gain {
                record_reward(&mut profiles[u.client_id], reward_from_gain(gain));
            }
        }
    }
}
