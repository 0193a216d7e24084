//! Agnostic fairness: min-max training against the worst-case client
//! mixture.
//!
//! The server aggregates with mixture weights on the simplex and performs
//! projected gradient ascent on the mixture toward the worst-off clients:
//! `lambda' = proj_simplex(lambda + step * (losses - mean(losses)))`.

use crate::error::{FaflError, Result};
use crate::model::ParamVector;

use super::{
    aggregate_fedavg, select_all, ClientProfile, ClientUpdate, Mechanism, MechanismConfig,
    MechanismKind, RoundState,
};

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Mixture-weighted combination of raw vectors (weights need not be
/// normalized; they are divided by their sum).
pub fn mixture_aggregate(vectors: &[&[f64]], mixture: &[f64]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| FaflError::Aggregation("no vectors to aggregate".into()))?;
    if vectors.len() != mixture.len() {
        return Err(FaflError::Aggregation("mixture length mismatch".into()));
    }
    if vectors.iter().any(|v| v.len() != first.len()) {
        return Err(FaflError::Aggregation("vector lengths differ".into()));
    }
    let total: f64 = mixture.iter().sum();
    if total <= 0.0 {
        return Err(FaflError::Aggregation("mixture mass is zero".into()));
    }
    let mut out = vec![0.0; first.len()];
    for (v, &m) in vectors.iter().zip(mixture) {
        let c = m / total;
        for (o, x) in out.iter_mut().zip(*v) {
            *o += c * x;
        }
    }
    Ok(out)
}

/// One ascent step on the mixture from observed client losses.
pub fn mixture_ascent(mixture: &[f64], losses: &[f64], step: f64) -> Vec<f64> {
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    let moved: Vec<f64> = mixture
        .iter()
        .zip(losses)
        .map(|(&l, &f)| l + step * (f - mean))
        .collect();
    project_simplex(&moved)
}

/// Combined minimax step: mixture-weighted aggregate of client weights plus
/// the projected mixture update.
pub fn afl_step(
    weights: &[&ParamVector],
    client_losses: &[f64],
    mixture: &[f64],
    mixture_step: f64,
) -> Result<(ParamVector, Vec<f64>)> {
    if weights.len() != client_losses.len() || weights.len() != mixture.len() {
        return Err(FaflError::Aggregation("weights/losses/mixture length mismatch".into()));
    }
    let raw: Vec<&[f64]> = weights.iter().map(|w| w.values.as_slice()).collect();
    let values = mixture_aggregate(&raw, mixture)?;
    let next = mixture_ascent(mixture, client_losses, mixture_step);
    Ok((ParamVector { arch: weights[0].arch, values }, next))
}

pub struct Afl;

impl Mechanism for Afl {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Afl
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
        state: &RoundState,
        updates: &[ClientUpdate],
        _profiles: &[ClientProfile],
        _cfg: &MechanismConfig,
    ) -> Result<ParamVector> {
        // Mixture entries for clients whose update was dropped carry no
        // mass this round; renormalization happens inside the aggregate.
        let raw: Vec<&[f64]> = updates.iter().map(|u| u.weights.values.as_slice()).collect();
        let mass: Vec<f64> = updates.iter().map(|u| state.mixture[u.client_id]).collect();
        if mass.iter().sum::<f64>() <= 0.0 {
            let weights: Vec<&ParamVector> = updates.iter().map(|u| &u.weights).collect();
            return aggregate_fedavg(&weights);
        }
        let values = mixture_aggregate(&raw, &mass)?;
        Ok(ParamVector { arch: updates[0].weights.arch, values })
    }

    fn post_round(
        &self,
        state: &mut RoundState,
        updates: &[ClientUpdate],
        _profiles: &mut [ClientProfile],
        cfg: &MechanismConfig,
    ) {
        // Ascend toward worst-off clients; absent clients contribute a zero
        // deviation so their mixture mass is preserved under projection.
        let present: Vec<f64> = updates.iter().map(|u| u.local_loss).collect();
        if present.is_empty() {
            return;
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let mut moved = state.mixture.clone();
        for u in updates {
            moved[u.client_id] += cfg.mixture_step * (u.local_loss - mean);
        }
        state.mixture = project_simplex(&moved);
    }
}
