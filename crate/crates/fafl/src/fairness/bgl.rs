//! Bounded-group-loss fairness via dual ascent.
//!
//! Clients minimize a penalized objective
//! `f(w) + sum_g lambda_g * max(0, L_g(w) - zeta)` against the duals
//! broadcast for the round; the server then performs projected ascent on the
//! averaged per-group feedback:
//! `lambda_g <- max(0, lambda_g + step * (mean_i L_{g,i} - zeta))`.

use std::collections::BTreeMap;

use crate::data::LabeledDataset;
use crate::error::Result;
use crate::model::{loss_and_grad, ModelDelta, ParamVector, TrainConfig, TrainOutcome};
use crate::rng::{mix_seed, rng_from};

use super::{
    aggregate_fedavg, select_all, ClientProfile, ClientUpdate, LocalPlan, Mechanism,
    MechanismConfig, MechanismKind, RoundState,
};

/// Per-group losses plus their constraint slack `max(0, L_g - zeta)`.
#[derive(Debug, Clone)]
pub struct GroupFeedback {
    pub group_losses: BTreeMap<u32, f64>,
    pub slack: BTreeMap<u32, f64>,
}

pub fn group_feedback(group_losses: &BTreeMap<u32, f64>, zeta: f64) -> GroupFeedback {
    let slack = group_losses
        .iter()
        .map(|(&g, &l)| (g, (l - zeta).max(0.0)))
        .collect();
    GroupFeedback { group_losses: group_losses.clone(), slack }
}

/// Penalized loss and (sub)gradient over the index subset. Groups whose
/// batch loss stays under `zeta` or whose dual is zero contribute nothing.
pub fn penalized_loss_grad(
    w: &ParamVector,
    data: &LabeledDataset,
    idx: &[usize],
    duals: &[f64],
    zeta: f64,
) -> Result<(f64, ModelDelta)> {
    let (base_loss, mut grad) = loss_and_grad(w, data, idx)?;
    let mut loss = base_loss;

    // Partition the batch by group once.
    let mut by_group: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in idx {
        by_group.entry(data.effective_group(i)).or_default().push(i);
    }

    for (&g, members) in &by_group {
        let lambda = duals.get(g as usize).copied().unwrap_or(0.0);
        if lambda == 0.0 {
            continue;
        }
        let (group_loss, group_grad) = loss_and_grad(w, data, members)?;
        if group_loss > zeta {
            loss += lambda * (group_loss - zeta);
            for (gi, gg) in grad.values.iter_mut().zip(&group_grad.values) {
                *gi += lambda * gg;
            }
        }
    }
    Ok((loss, grad))
}

/// Mini-batch SGD on the penalized objective; mirrors the plain local
/// trainer (seeded shuffle per epoch, short batch kept, per-round decay).
pub fn local_train_penalized(
    w: &ParamVector,
    shard: &LabeledDataset,
    duals: &[f64],
    zeta: f64,
    cfg: &TrainConfig,
    round: usize,
) -> Result<TrainOutcome> {
    use rand::prelude::*;
    cfg.validate()?;
    let all: Vec<usize> = (0..shard.n()).collect();
    let loss_before = crate::model::mean_loss(w, shard, &all)?;
    let rate = cfg.rate_at(round);
    let mut current = w.clone();

    for epoch in 0..cfg.local_epochs {
        let mut order = all.clone();
        let mut rng = rng_from(mix_seed(cfg.seed, &[0x10ca1, round as u64, epoch as u64]));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = penalized_loss_grad(&current, shard, batch, duals, zeta)?;
            for (wi, gi) in current.values.iter_mut().zip(&grad.values) {
                *wi -= rate * gi;
            }
        }
    }
    let delta = ModelDelta::between(&current, w);
    let w_new = w.plus(&delta)?;
    Ok((w_new, delta, loss_before))
}

/// Projected dual ascent on averaged group losses. `mean_group_losses[g]`
/// is `None` when no client reported group `g` this round.
pub fn dual_update(
    duals: &[f64],
    mean_group_losses: &[Option<f64>],
    zeta: f64,
    dual_step: f64,
) -> Vec<f64> {
    duals
        .iter()
        .enumerate()
        .map(|(g, &lambda)| match mean_group_losses.get(g).copied().flatten() {
            Some(mean) => (lambda + dual_step * (mean - zeta)).max(0.0),
            None => lambda,
        })
        .collect()
}

/// Average each group's loss over the clients that reported it.
pub fn mean_group_losses(updates: &[ClientUpdate], num_groups: usize) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; num_groups];
    let mut counts = vec![0usize; num_groups];
    for u in updates {
        for (&g, &l) in &u.group_losses {
            if (g as usize) < num_groups {
                sums[g as usize] += l;
                counts[g as usize] += 1;
            }
        }
    }
    (0..num_groups)
        .map(|g| if counts[g] > 0 { Some(sums[g] / counts[g] as f64) } else { None })
        .collect()
}

pub struct Bgl;

impl Mechanism for Bgl {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Bgl
    }

    fn select(
        &self,
        state: &mut RoundState,
        profiles: &[ClientProfile],
        _cfg: &MechanismConfig,
    ) -> Result<Vec<bool>> {
        select_all(state, profiles)
    }

    fn local_plan(
        &self,
        state: &RoundState,
        _profile: &ClientProfile,
        _cfg: &MechanismConfig,
    ) -> LocalPlan {
        LocalPlan { duals: Some(state.duals.clone()), data_fraction: 1.0 }
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
        _profiles: &mut [ClientProfile],
        cfg: &MechanismConfig,
    ) {
        let means = mean_group_losses(updates, state.duals.len());
        state.duals = dual_update(&state.duals, &means, cfg.zeta, cfg.dual_step);
    }
}
