//! The synchronous federated round loop.
//!
//! Each round: mechanism selection, sealed broadcast of the global weights,
//! parallel local training (label-flipping adversaries included), sealed
//! uploads, server-side verification and contribution scoring, mechanism
//! aggregation, post-round feedback, metrics. Client legs may run on any
//! number of workers; reduction happens in ascending client id at a strict
//! barrier, so worker count never changes results. Network latency is
//! simulated analytically; crypto time is measured wall-clock and reported
//! separately from the deterministic metrics.

pub mod sweep;

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    self, serialize_params, ChannelKey, ChannelMetrics, EncryptedFrame, MsgType, FRAME_OVERHEAD,
    SERVER_SENDER,
};
use crate::config::{config_hash, DataSource, ExperimentConfig, NetworkModel};
use crate::data::{
    generate_synthetic, load_csv_dataset, partition_noniid, shard_stats, LabeledDataset,
    PartitionSpec,
};
use crate::error::{FaflError, Result};
use crate::fairness::{
    adversary::make_adversarial_update, bgl, make_mechanism, ClientProfile, ClientUpdate,
    Mechanism, RoundState,
};
use crate::model::{evaluate, init_model, local_train, Arch, ModelDelta, TrainConfig};
use crate::rng::{mix_seed, rng_from};

/// Fraction of the pre-partition pool reserved as the server holdout, used
/// for contribution scoring and reported accuracy.
pub const HOLDOUT_FRACTION: f64 = 0.1;

/// Per-round record. Every field is a pure function of the config; measured
/// crypto time lives on the series instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub round: u32,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub per_group_loss: BTreeMap<u32, f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub sim_latency_ms: f64,
    pub dropped_updates: u32,
    pub selected: Vec<bool>,
    pub reputations: Vec<f64>,
    pub payouts: Vec<f64>,
    /// Group-loss dual variables at the end of the round.
    pub duals: Vec<f64>,
}

/// Full result of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSeries {
    pub config_hash: String,
    pub scheme: String,
    pub mechanism: String,
    pub alpha: f64,
    pub max_labels: usize,
    pub seed: u64,
    pub encrypted: bool,
    pub records: Vec<MetricRecord>,
    pub total_bytes: u64,
    pub total_sim_latency_ms: f64,
    pub messages: u64,
    /// Measured wall-clock seal+open time; not part of the deterministic
    /// metric surface.
    pub crypto_time_ms: f64,
    pub mean_pairwise_tv: f64,
    pub replacement_draws: usize,
    /// Global model at the end of the run.
    pub final_weights: crate::model::ParamVector,
}

impl MetricSeries {
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.accuracy)
    }

    /// Mean accuracy over the last ten evaluated rounds.
    pub fn last10_mean_accuracy(&self) -> f64 {
        let n = self.records.len();
        if n == 0 {
            return 0.0;
        }
        let tail = &self.records[n.saturating_sub(10)..];
        tail.iter().map(|r| r.accuracy).sum::<f64>() / tail.len() as f64
    }
}

/// `base_latency + bytes / bandwidth`, in milliseconds.
pub fn simulate_latency(bytes: u64, net: &NetworkModel) -> Result<f64> {
    if net.bandwidth_bytes_per_ms <= 0.0 || net.bandwidth_bytes_per_ms.is_nan() {
        return Err(FaflError::Config("network.bandwidth must be positive".into()));
    }
    Ok(net.base_latency_ms + bytes as f64 / net.bandwidth_bytes_per_ms)
}

/// Decides per (client, round) whether to corrupt that sealed upload.
pub type CorruptUploadHook = Box<dyn Fn(usize, u32) -> bool + Sync>;
/// Sees every sealed frame with the client id of its channel.
pub type ObserveFrameHook = Box<dyn Fn(usize, &EncryptedFrame) + Sync>;

/// Test hooks. `corrupt_upload` flips one bit of the named client's sealed
/// update before the server opens it; `observe_frame` may be called from
/// multiple workers.
#[derive(Default)]
pub struct RunHooks {
    pub corrupt_upload: Option<CorruptUploadHook>,
    pub observe_frame: Option<ObserveFrameHook>,
}

struct ClientLeg {
    update: Option<ClientUpdate>,
    bytes_down: u64,
    bytes_up: u64,
    leg_latency_ms: f64,
    metrics: ChannelMetrics,
}

/// Everything shared by the rounds of one experiment.
struct Simulation {
    cfg: ExperimentConfig,
    mechanism: Box<dyn Mechanism>,
    shards: Vec<LabeledDataset>,
    holdout: LabeledDataset,
    profiles: Vec<ClientProfile>,
    state: RoundState,
    keys: Vec<ChannelKey>,
    channel: ChannelMetrics,
    last_eval: Option<(f64, f64, BTreeMap<u32, f64>)>,
    mean_pairwise_tv: f64,
    replacement_draws: usize,
}

fn build_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    match cfg.data.source {
        DataSource::Synthetic => generate_synthetic(
            cfg.data.classes,
            cfg.data.features,
            cfg.data.samples,
            cfg.data.separation,
            mix_seed(cfg.seed, &[0xda7a]),
        ),
        DataSource::Csv => {
            let path = cfg.data.csv_path.as_ref().ok_or_else(|| {
                FaflError::Config("data.csv_path required when data.source = csv".into())
            })?;
            let load = load_csv_dataset(
                std::path::Path::new(path),
                &cfg.data.label_column,
                cfg.data.group_column.as_deref(),
            )?;
            for row in &load.rejected_rows {
                warn!("csv row {row} rejected (unparseable values)");
            }
            Ok(load.data)
        }
    }
}

impl Simulation {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let data = build_dataset(cfg)?;
        if data.n() <= cfg.clients {
            return Err(FaflError::Partition(format!(
                "dataset has {} samples but {} clients were requested",
                data.n(),
                cfg.clients
            )));
        }

        // Server holdout comes off the top of a seeded shuffle, before any
        // client ever sees the pool.
        let mut order: Vec<usize> = (0..data.n()).collect();
        {
            use rand::prelude::*;
            let mut rng = rng_from(mix_seed(cfg.seed, &[0x801d]));
            order.shuffle(&mut rng);
        }
        let holdout_n = ((data.n() as f64 * HOLDOUT_FRACTION) as usize)
            .max(1)
            .min(data.n() - cfg.clients);
        let holdout = data.subset(&order[..holdout_n])?;
        let pool = data.subset(&order[holdout_n..])?;

        let spec = PartitionSpec {
            alpha: cfg.alpha,
            max_labels: cfg.max_labels,
            num_clients: cfg.clients,
            seed: mix_seed(cfg.seed, &[0x9a87]),
        };
        let partition = partition_noniid(&pool, &spec)?;
        let stats = shard_stats(&partition.shards, partition.replacement_draws)?;

        let arch = if cfg.hidden_dim == 0 {
            Arch::linear(pool.dim(), pool.class_count() as usize)
        } else {
            Arch::mlp(pool.dim(), cfg.hidden_dim, pool.class_count() as usize)
        };
        let w0 = init_model(&arch, mix_seed(cfg.seed, &[0x1217]))?;

        // The highest `adversaries` client ids flip labels.
        let profiles: Vec<ClientProfile> = partition
            .shards
            .iter()
            .enumerate()
            .map(|(id, shard)| {
                ClientProfile::new(id, shard.n(), id >= cfg.clients - cfg.adversaries)
            })
            .collect();

        let groups = pool.effective_group_count() as usize;
        let state = RoundState::new(w0, cfg.clients, groups, cfg.mech.budget);

        let master = cfg.resolve_master_secret()?;
        let keys: Vec<ChannelKey> = (0..cfg.clients)
            .map(|id| channel::derive_channel_key(&master, id as u32))
            .collect();

        Ok(Self {
            cfg: cfg.clone(),
            mechanism: make_mechanism(cfg.mechanism),
            shards: partition.shards,
            holdout,
            profiles,
            state,
            keys,
            channel: ChannelMetrics::default(),
            last_eval: None,
            mean_pairwise_tv: stats.mean_pairwise_tv,
            replacement_draws: partition.replacement_draws,
        })
    }

    fn train_cfg(&self, client: usize) -> TrainConfig {
        TrainConfig {
            seed: mix_seed(self.cfg.seed, &[0x7a19, client as u64]),
            ..self.cfg.train
        }
    }

    /// One client leg: open the broadcast, train locally, seal the upload,
    /// let the server verify it. Pure given its inputs.
    #[allow(clippy::too_many_arguments)]
    fn client_leg(
        &self,
        client: usize,
        round: u32,
        broadcast: &[u8],
        broadcast_frame: Option<&EncryptedFrame>,
        key: &ChannelKey,
        hooks: &RunHooks,
    ) -> Result<ClientLeg> {
        let mut metrics = ChannelMetrics::default();
        let shard = &self.shards[client];
        let profile = &self.profiles[client];
        let plan = self.mechanism.local_plan(&self.state, profile, &self.cfg.mech);

        // Receive the global weights (decrypting when sealed).
        let received = match broadcast_frame {
            Some(frame) => channel::open_timed(key, frame, &mut metrics)?,
            None => broadcast.to_vec(),
        };
        let w_received = channel::deserialize_params(&received)?;
        let bytes_down =
            broadcast.len() as u64 + if broadcast_frame.is_some() { FRAME_OVERHEAD as u64 } else { 0 };

        // Effort scaling: train on a prefix of the (already shuffled) shard.
        let used = ((shard.n() as f64 * plan.data_fraction).round() as usize).min(shard.n());
        let cfg = self.train_cfg(client);
        let all: Vec<usize> = (0..shard.n()).collect();
        let (w_new, delta, local_loss) = if used == 0 {
            let loss = crate::model::mean_loss(&w_received, shard, &all)?;
            (w_received.clone(), ModelDelta::zeros(w_received.len()), loss)
        } else {
            let subset;
            let train_set = if used == shard.n() {
                shard
            } else {
                let idx: Vec<usize> = (0..used).collect();
                subset = shard.subset(&idx)?;
                &subset
            };
            if profile.adversarial {
                make_adversarial_update(train_set, &w_received, &cfg, round as usize)?
            } else if let Some(duals) = &plan.duals {
                bgl::local_train_penalized(
                    &w_received,
                    train_set,
                    duals,
                    self.cfg.mech.zeta,
                    &cfg,
                    round as usize,
                )?
            } else {
                local_train(&w_received, train_set, &cfg, round as usize)?
            }
        };

        // Group feedback for the dual update: per-group shard losses at the
        // broadcast weights, so the duals track the global model rather than
        // each client's freshly overfit one.
        let group_losses = if plan.duals.is_some() {
            evaluate(&w_received, shard, None)?.per_group_loss
        } else {
            BTreeMap::new()
        };

        // Seal and ship the update; the server opens and verifies. The seal
        // runs on a clone (the broadcast already advanced the shared
        // counter); the barrier commits the increment to the real key.
        let payload = serialize_params(&w_new)?;
        let mut key_up = key.clone();
        let (bytes_up, opened) = if self.cfg.encrypt {
            let frame = channel::seal_timed(
                &mut key_up,
                MsgType::ClientUpdate,
                round,
                client as u32,
                &payload,
                &mut metrics,
            )?;
            if let Some(observe) = &hooks.observe_frame {
                observe(client, &frame);
            }
            let mut wire = frame.to_bytes();
            if let Some(corrupt) = &hooks.corrupt_upload {
                if corrupt(client, round) {
                    let bit = 8 * (FRAME_OVERHEAD / 2); // inside the header
                    wire[bit / 8] ^= 1;
                }
            }
            let opened = EncryptedFrame::from_bytes(&wire)
                .and_then(|f| channel::open_timed(key, &f, &mut metrics));
            (wire.len() as u64, opened)
        } else {
            (payload.len() as u64, Ok(payload.clone()))
        };

        let leg_bytes = bytes_down + bytes_up;
        let leg_latency_ms = 2.0 * self.cfg.network.base_latency_ms
            + leg_bytes as f64 / self.cfg.network.bandwidth_bytes_per_ms;

        match opened.and_then(|bytes| channel::deserialize_params(&bytes)) {
            Ok(w_verified) => Ok(ClientLeg {
                update: Some(ClientUpdate {
                    client_id: client,
                    weights: w_verified,
                    delta,
                    local_loss,
                    group_losses,
                    accuracy_gain: None,
                }),
                bytes_down,
                bytes_up,
                leg_latency_ms,
                metrics,
            }),
            Err(e) => {
                warn!("round {round}: dropping client {client} update ({e})");
                Ok(ClientLeg {
                    update: None,
                    bytes_down,
                    bytes_up,
                    leg_latency_ms,
                    metrics,
                })
            }
        }
    }

    fn run_round(&mut self, round: u32, hooks: &RunHooks) -> Result<MetricRecord> {
        let indicators =
            self.mechanism.select(&mut self.state, &self.profiles, &self.cfg.mech)?;
        let selected: Vec<usize> =
            (0..self.cfg.clients).filter(|&k| indicators[k]).collect();

        // Seal one broadcast per selected client (sequential: each seal
        // consumes that channel's counter), then fan the legs out.
        let broadcast = serialize_params(&self.state.w_global)?;
        let mut broadcast_frames: Vec<Option<EncryptedFrame>> = vec![None; self.cfg.clients];
        if self.cfg.encrypt {
            for &k in &selected {
                let frame = channel::seal_timed(
                    &mut self.keys[k],
                    MsgType::GlobalBroadcast,
                    round,
                    SERVER_SENDER,
                    &broadcast,
                    &mut self.channel,
                )?;
                if let Some(observe) = &hooks.observe_frame {
                    observe(k, &frame);
                }
                broadcast_frames[k] = Some(frame);
            }
        }

        let legs: Vec<Result<ClientLeg>> = selected
            .par_iter()
            .map(|&k| {
                self.client_leg(k, round, &broadcast, broadcast_frames[k].as_ref(), &self.keys[k], hooks)
            })
            .collect();

        // Barrier: everything below is single-writer, ascending client id.
        let mut updates: Vec<ClientUpdate> = Vec::with_capacity(selected.len());
        let mut bytes_up = 0u64;
        let mut bytes_down = 0u64;
        let mut dropped = 0u32;
        let mut max_leg_ms: f64 = 0.0;
        for (idx, leg) in legs.into_iter().enumerate() {
            let leg = leg?;
            bytes_up += leg.bytes_up;
            bytes_down += leg.bytes_down;
            max_leg_ms = max_leg_ms.max(leg.leg_latency_ms);
            self.channel.merge(&leg.metrics);
            if self.cfg.encrypt {
                // The client's seal advanced a cloned counter; commit it.
                self.keys[selected[idx]].counter += 1;
            }
            if let Some(update) = leg.update {
                updates.push(update);
            } else {
                dropped += 1;
            }
        }

        // Contribution scores: holdout gain of each update applied alone.
        if self.mechanism.needs_contribution_scores() && !updates.is_empty() {
            let base_acc = evaluate(&self.state.w_global, &self.holdout, None)?.accuracy;
            for u in updates.iter_mut() {
                let acc = evaluate(&u.weights, &self.holdout, None)?.accuracy;
                u.accuracy_gain = Some(acc - base_acc);
            }
        }

        let w_prev = self.state.w_global.clone();
        let w_next = if updates.is_empty() {
            warn!("round {round}: no verified updates, carrying global weights over");
            w_prev.clone()
        } else {
            self.mechanism.aggregate(&self.state, &updates, &self.profiles, &self.cfg.mech)?
        };

        let payouts_before: Vec<f64> =
            self.profiles.iter().map(|p| p.cumulative_payout).collect();
        for &k in &selected {
            self.profiles[k].selection_count += 1;
        }
        for u in &updates {
            self.profiles[u.client_id].recent_loss = u.local_loss;
        }
        self.mechanism.post_round(&mut self.state, &updates, &mut self.profiles, &self.cfg.mech);

        self.state.global_delta = ModelDelta::between(&w_next, &w_prev);
        self.state.w_global = w_next;
        self.state.t += 1;
        self.state.check_invariants()?;

        let sim_latency_ms = max_leg_ms + self.cfg.network.base_latency_ms;

        // Holdout evaluation on schedule (and always on the final round).
        let eval_due = (round as usize + 1).is_multiple_of(self.cfg.eval_every)
            || round as usize + 1 == self.cfg.rounds;
        if eval_due || self.last_eval.is_none() {
            let eval = evaluate(&self.state.w_global, &self.holdout, None)?;
            self.last_eval = Some((eval.accuracy, eval.mean_loss, eval.per_group_loss));
        }
        let (accuracy, mean_loss, per_group_loss) =
            self.last_eval.clone().expect("evaluated at least once");

        Ok(MetricRecord {
            round,
            accuracy,
            mean_loss,
            per_group_loss,
            bytes_up,
            bytes_down,
            sim_latency_ms,
            dropped_updates: dropped,
            selected: indicators,
            reputations: self.profiles.iter().map(|p| p.reputation).collect(),
            duals: self.state.duals.clone(),
            payouts: self
                .profiles
                .iter()
                .zip(payouts_before)
                .map(|(p, before)| p.cumulative_payout - before)
                .collect(),
        })
    }
}

/// Run one experiment on `workers` threads (0 = library default). The
/// metric series is a pure function of the config, independent of the
/// worker count.
pub fn run_experiment_with_hooks(
    cfg: &ExperimentConfig,
    workers: usize,
    hooks: &RunHooks,
) -> Result<MetricSeries> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| FaflError::Config(format!("cannot build worker pool: {e}")))?;

    let mut sim = Simulation::new(cfg)?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let record = pool.install(|| sim.run_round(round as u32, hooks))?;
        records.push(record);
    }

    let total_bytes: u64 = records.iter().map(|r| r.bytes_up + r.bytes_down).sum();
    let total_sim_latency_ms: f64 = records.iter().map(|r| r.sim_latency_ms).sum();
    Ok(MetricSeries {
        config_hash: config_hash(cfg),
        scheme: cfg.mechanism.display_name(cfg.adversaries),
        mechanism: cfg.mechanism.name().to_string(),
        alpha: cfg.alpha,
        max_labels: cfg.max_labels,
        seed: cfg.seed,
        encrypted: cfg.encrypt,
        records,
        total_bytes,
        total_sim_latency_ms,
        messages: sim.channel.frames_sealed,
        crypto_time_ms: sim.channel.crypto_time_ms(),
        mean_pairwise_tv: sim.mean_pairwise_tv,
        replacement_draws: sim.replacement_draws,
        final_weights: sim.state.w_global,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<MetricSeries> {
    run_experiment_with_hooks(cfg, workers, &RunHooks::default())
}
