//! Reputation-threshold contribution fairness.
//!
//! Each client's update is scored on a server holdout; the score feeds a
//! smoothed reputation. Aggregation excludes clients below the threshold
//! `rho` and weights the rest by `r_i * gamma / ||delta_i||`, normalized so
//! the result stays inside the convex hull of client weights.

use log::warn;

use crate::error::{FaflError, Result};
use crate::model::{ModelDelta, ParamVector};

use super::{
    aggregate_fedavg, select_all, ClientProfile, ClientUpdate, Mechanism, MechanismConfig,
    MechanismKind, RoundState,
};

/// Norm floor before dividing by `||delta||`; zero-delta clients must not
/// produce infinities.
pub const NORM_FLOOR: f64 = 1e-12;

/// Width of the degradation band: a 5-point holdout accuracy drop zeroes
/// the contribution score.
pub const DEGRADATION_SCALE: f64 = 0.05;

/// Score an update from its holdout accuracy change: 1 when it does not
/// degrade the model, linearly down to 0 as degradation reaches
/// [`DEGRADATION_SCALE`].
pub fn contribution_score(accuracy_gain: f64) -> f64 {
    (1.0 + accuracy_gain / DEGRADATION_SCALE).clamp(0.0, 1.0)
}

/// Smoothed reputation update, clamped to [0,1].
pub fn reputation_update(r_prev: f64, contribution_score: f64, epsilon: f64) -> f64 {
    ((1.0 - epsilon) * r_prev + epsilon * contribution_score).clamp(0.0, 1.0)
}

/// Reputation-weighted aggregation. Returns the aggregate and whether the
/// all-below-threshold FedAvg fallback fired.
pub fn aggregate_reputation(
    weights: &[&ParamVector],
    deltas: &[&ModelDelta],
    reputations: &[f64],
    gamma: f64,
    rho: f64,
) -> Result<(ParamVector, bool)> {
    if weights.is_empty() {
        return Err(FaflError::Aggregation("no client weights to aggregate".into()));
    }
    if weights.len() != deltas.len() || weights.len() != reputations.len() {
        return Err(FaflError::Aggregation("weights/deltas/reputations length mismatch".into()));
    }
    if gamma <= 0.0 || gamma.is_nan() {
        return Err(FaflError::Config("gamma must be positive".into()));
    }
    let len = weights[0].len();
    if weights.iter().any(|w| w.len() != len) || deltas.iter().any(|d| d.values.len() != len) {
        return Err(FaflError::Aggregation("client vector lengths differ".into()));
    }

    let mut coeffs = vec![0.0; weights.len()];
    let mut total = 0.0;
    for (i, (&r, delta)) in reputations.iter().zip(deltas).enumerate() {
        if r < rho {
            continue;
        }
        let u = r * gamma / delta.l2_norm().max(NORM_FLOOR);
        coeffs[i] = u;
        total += u;
    }

    if total <= 0.0 {
        warn!("all clients fell below reputation threshold {rho}; falling back to FedAvg");
        return Ok((aggregate_fedavg(weights)?, true));
    }

    let mut out = vec![0.0; len];
    for (i, w) in weights.iter().enumerate() {
        let c = coeffs[i] / total;
        if c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&w.values) {
            *o += c * v;
        }
    }
    Ok((ParamVector { arch: weights[0].arch, values: out }, false))
}

pub struct Reputation;

impl Mechanism for Reputation {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Reputation
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

    fn aggregate(
        &self,
        _state: &RoundState,
        updates: &[ClientUpdate],
        profiles: &[ClientProfile],
        cfg: &MechanismConfig,
    ) -> Result<ParamVector> {
        let weights: Vec<&ParamVector> = updates.iter().map(|u| &u.weights).collect();
        let deltas: Vec<&ModelDelta> = updates.iter().map(|u| &u.delta).collect();
        // Previous round's reputations: post_round has not run yet.
        let reps: Vec<f64> = updates.iter().map(|u| profiles[u.client_id].reputation).collect();
        let (aggregate, _fallback) =
            aggregate_reputation(&weights, &deltas, &reps, cfg.gamma, cfg.rho)?;
        Ok(aggregate)
    }

    fn post_round(
        &self,
        _state: &mut RoundState,
        updates: &[ClientUpdate],
        profiles: &mut [ClientProfile],
        cfg: &MechanismConfig,
    ) {
        for u in updates {
            if let Some(gain) = u.accuracy_gain {
                let p = &mut profiles[u.client_id];
                p.reputation = reputation_update(p.reputation, contribution_score(gain), cfg.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::tests::pv;

    #[test]
    fn reputation_update_arithmetic() {
        assert!((reputation_update(0.5, 1.0, 0.2) - 0.6).abs() < 1e-12);
        // score == r is a fixed point
        assert!((reputation_update(0.37, 0.37, 0.2) - 0.37).abs() < 1e-12);
        assert_eq!(reputation_update(0.99, 1.5, 0.5), 1.0);
    }

    #[test]
    fn contribution_scores_track_degradation() {
        assert_eq!(contribution_score(0.0), 1.0);
        assert_eq!(contribution_score(0.2), 1.0);
        assert_eq!(contribution_score(-0.05), 0.0);
        assert_eq!(contribution_score(-0.5), 0.0);
        assert!((contribution_score(-0.01) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn adversary_reputation_separates_under_recurrence_replay() {
        // Honest clients score ~1, the sign-flipping adversary degrades the
        // holdout nearly every round. Replay the recurrence directly.
        let eps = 0.2;
        let honest_scores = [1.0, 1.0, 0.9, 1.0, 1.0];
        let adversary_scores = [0.0, 0.1, 0.0, 0.0, 0.2];
        let mut honest: f64 = 0.5;
        let mut adversary: f64 = 0.5;
        let mut honest_replay = 0.5;
        let mut adversary_replay = 0.5;
        for round in 0..30 {
            let hs = honest_scores[round % honest_scores.len()];
            let as_ = adversary_scores[round % adversary_scores.len()];
            honest = reputation_update(honest, hs, eps);
            adversary = reputation_update(adversary, as_, eps);
            // Oracle: direct recurrence.
            honest_replay = ((1.0 - eps) * honest_replay + eps * hs).clamp(0.0, 1.0);
            adversary_replay = ((1.0 - eps) * adversary_replay + eps * as_).clamp(0.0, 1.0);
        }
        assert_eq!(honest, honest_replay);
        assert_eq!(adversary, adversary_replay);
        assert!(adversary < 0.3, "adversary reputation {adversary}");
        assert!(honest > 0.5, "honest reputation {honest}");
        assert!(honest - adversary >= 0.2);
    }

    #[test]
    fn equal_reputations_and_norms_reduce_to_fedavg() {
        let a = pv(vec![1.0, 3.0]);
        let b = pv(vec![3.0, 5.0]);
        let d1 = ModelDelta { values: vec![1.0, 0.0] };
        let d2 = ModelDelta { values: vec![0.0, 1.0] };
        let (agg, fallback) =
            aggregate_reputation(&[&a, &b], &[&d1, &d2], &[0.7, 0.7], 1.0, 0.4).unwrap();
        assert!(!fallback);
        assert_eq!(agg.values, vec![2.0, 4.0]);
    }

    #[test]
    fn two_client_weighting_matches_hand_computation() {
        let w1 = pv(vec![1.0, 0.0]);
        let w2 = pv(vec![0.0, 1.0]);
        let d = ModelDelta { values: vec![1.0, 0.0] }; // unit norm
        let (agg, _) =
            aggregate_reputation(&[&w1, &w2], &[&d, &d], &[0.8, 0.2], 1.0, 0.0).unwrap();
        assert!((agg.values[0] - 0.8).abs() < 1e-15);
        assert!((agg.values[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn random_instance_matches_direct_formula_oracle() {
        use rand::prelude::*;
        let mut rng = crate::rng::rng_from(9);
        let dim = 7;
        let weights: Vec<_> = (0..5)
            .map(|_| pv((0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()))
            .collect();
        let deltas: Vec<ModelDelta> = (0..5)
            .map(|_| ModelDelta {
                values: (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            })
            .collect();
        let reps: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let gamma = 1.7;
        let rho = 0.25;

        let wrefs: Vec<&ParamVector> = weights.iter().collect();
        let drefs: Vec<&ModelDelta> = deltas.iter().collect();
        let (agg, _) = aggregate_reputation(&wrefs, &drefs, &reps, gamma, rho).unwrap();

        // Direct evaluation of the normalized formula.
        let us: Vec<f64> = (0..5)
            .map(|i| {
                if reps[i] < rho {
                    0.0
                } else {
                    reps[i] * gamma / deltas[i].l2_norm().max(NORM_FLOOR)
                }
            })
            .collect();
        let total: f64 = us.iter().sum();
        for j in 0..dim {
            let want: f64 =
                (0..5).map(|i| us[i] / total * weights[i].values[j]).sum();
            assert!((agg.values[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_delta_does_not_blow_up() {
        let w = pv(vec![1.0, 2.0]);
        let zero = ModelDelta { values: vec![0.0, 0.0] };
        let (agg, _) = aggregate_reputation(&[&w], &[&zero], &[1.0], 1.0, 0.0).unwrap();
        assert!(agg.values.iter().all(|v| v.is_finite()));
        assert_eq!(agg.values, w.values);
    }

    #[test]
    fn all_below_threshold_falls_back_to_fedavg() {
        let a = pv(vec![2.0, 0.0]);
        let b = pv(vec![0.0, 2.0]);
        let d = ModelDelta { values: vec![1.0, 1.0] };
        let (agg, fallback) =
            aggregate_reputation(&[&a, &b], &[&d, &d], &[0.1, 0.2], 1.0, 0.9).unwrap();
        assert!(fallback);
        assert_eq!(agg.values, vec![1.0, 1.0]);
    }
}
