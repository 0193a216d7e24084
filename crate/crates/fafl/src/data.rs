//! Dataset generation, CSV ingestion and heterogeneity-controlled
//! partitioning into client shards.
//!
//! The partitioner mixes an IID fraction with a restricted-label fraction:
//! `alpha` of each shard is drawn only from the client's assigned label set
//! (at most `max_labels` classes, assigned round-robin), the rest is drawn
//! IID from the global pool. `alpha = 0` is fully IID, `alpha = 1` restricts
//! every sample.

use rand::prelude::*;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FaflError, Result};
use crate::rng::{mix_seed, rng_from};

/// Flat row-major feature matrix with integer labels and an optional
/// sensitive-group column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<u32>,
    class_count: u32,
    groups: Option<Vec<u32>>,
    group_count: u32,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<u32>,
        class_count: u32,
        groups: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(FaflError::Config("dataset must contain at least one sample".into()));
        }
        if dim == 0 || features.len() != n * dim {
            return Err(FaflError::Config(format!(
                "feature matrix size {} does not match {n} samples x {dim} dims",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(FaflError::Config("features must be finite".into()));
        }
        if labels.iter().any(|&y| y >= class_count) {
            return Err(FaflError::Config("label out of range for class count".into()));
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(FaflError::Config("group column length mismatch".into()));
            }
        }
        let group_count = groups
            .as_ref()
            .map(|g| g.iter().max().map_or(0, |m| m + 1))
            .unwrap_or(0);
        Ok(Self { features, dim, labels, class_count, groups, group_count })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn groups(&self) -> Option<&[u32]> {
        self.groups.as_deref()
    }

    /// Group id of sample `i`: the sensitive-attribute column when present,
    /// otherwise the label class.
    pub fn effective_group(&self, i: usize) -> u32 {
        match &self.groups {
            Some(g) => g[i],
            None => self.labels[i],
        }
    }

    /// Number of distinct groups under [`Self::effective_group`].
    pub fn effective_group_count(&self) -> u32 {
        if self.groups.is_some() {
            self.group_count
        } else {
            self.class_count
        }
    }

    /// Materialize a new dataset from row indices (duplicates allowed).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(FaflError::Config("subset must be non-empty".into()));
        }
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        let mut labels = Vec::with_capacity(idx.len());
        let mut groups = self.groups.as_ref().map(|_| Vec::with_capacity(idx.len()));
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            if let (Some(dst), Some(src)) = (&mut groups, &self.groups) {
                dst.push(src[i]);
            }
        }
        Ok(Self {
            features,
            dim: self.dim,
            labels,
            class_count: self.class_count,
            groups,
            group_count: self.group_count,
        })
    }

    /// Per-class sample counts.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.class_count as usize];
        for &y in &self.labels {
            hist[y as usize] += 1;
        }
        hist
    }
}

/// Heterogeneity-controlled partition parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    /// Fraction of each shard drawn from the client's restricted label set.
    pub alpha: f64,
    /// Unique restricted labels per client.
    pub max_labels: usize,
    /// Number of clients K.
    pub num_clients: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self, class_count: u32) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(FaflError::Config("alpha must lie in [0,1]".into()));
        }
        if self.max_labels == 0 || self.max_labels > class_count as usize {
            return Err(FaflError::Config(format!(
                "max_labels must lie in [1, {class_count}]"
            )));
        }
        if self.num_clients < 2 {
            return Err(FaflError::Config("num_clients must be at least 2".into()));
        }
        Ok(())
    }
}

/// Partitioner output: one shard per client plus bookkeeping needed to
/// document oversubscribed restricted pools.
#[derive(Debug, Clone)]
pub struct PartitionOutcome {
    pub shards: Vec<LabeledDataset>,
    /// Per-shard count of samples drawn via the restricted pool.
    pub restricted_draws: Vec<usize>,
    /// Draws that fell back to sampling with replacement.
    pub replacement_draws: usize,
}

/// Per-shard label histograms plus the mean pairwise total-variation
/// distance between shard label distributions.
#[derive(Debug, Clone, Serialize)]
pub struct HeterogeneityReport {
    pub histograms: Vec<Vec<usize>>,
    pub mean_pairwise_tv: f64,
    pub replacement_draws: usize,
}

/// Gaussian mixture with one spherical unit-variance component per class;
/// class-balanced to within one sample, deterministic under `seed`.
pub fn generate_synthetic(
    classes: u32,
    features: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(FaflError::Config("classes must be at least 2".into()));
    }
    if features == 0 {
        return Err(FaflError::Config("features must be at least 1".into()));
    }
    if n < classes as usize {
        return Err(FaflError::Config(format!(
            "n = {n} is smaller than the class count {classes}"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(FaflError::Config("separation must be finite and non-negative".into()));
    }

    let mut rng = rng_from(mix_seed(seed, &[0x5e1, classes as u64, features as u64, n as u64]));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Class centers: axis-aligned for the first `features` classes, random
    // unit directions beyond that.
    let mut centers = Vec::with_capacity(classes as usize);
    for c in 0..classes as usize {
        let mut center = vec![0.0; features];
        if c < features {
            center[c] = separation;
        } else {
            let mut norm = 0.0;
            for v in center.iter_mut() {
                *v = normal.sample(&mut rng);
                norm += *v * *v;
            }
            let norm = norm.sqrt().max(1e-12);
            for v in center.iter_mut() {
                *v *= separation / norm;
            }
        }
        centers.push(center);
    }

    let base = n / classes as usize;
    let extra = n % classes as usize;
    let mut rows: Vec<(Vec<f64>, u32)> = Vec::with_capacity(n);
    for c in 0..classes as usize {
        let count = base + usize::from(c < extra);
        for _ in 0..count {
            let x: Vec<f64> = centers[c]
                .iter()
                .map(|&m| m + normal.sample(&mut rng))
                .collect();
            rows.push((x, c as u32));
        }
    }
    rows.shuffle(&mut rng);

    let mut feat = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for (x, y) in rows {
        feat.extend_from_slice(&x);
        labels.push(y);
    }
    LabeledDataset::new(feat, features, labels, classes, None)
}

/// Restricted label set for client `k`: `max_labels` classes assigned
/// round-robin starting at `k * max_labels mod C`.
pub fn restricted_labels(client: usize, max_labels: usize, class_count: u32) -> Vec<u32> {
    let c = class_count as usize;
    let mut set: Vec<u32> = (0..max_labels)
        .map(|j| ((client * max_labels + j) % c) as u32)
        .collect();
    set.sort_unstable();
    set.dedup();
    set
}

/// Split `data` into `spec.num_clients` shards of near-equal size. The
/// restricted fraction samples without replacement from the client's label
/// pool while supply lasts, then falls back to replacement.
pub fn partition_noniid(data: &LabeledDataset, spec: &PartitionSpec) -> Result<PartitionOutcome> {
    spec.validate(data.class_count())?;
    let n = data.n();
    let k = spec.num_clients;
    if n < k {
        return Err(FaflError::Partition(format!(
            "dataset has {n} samples but {k} clients were requested"
        )));
    }

    let mut rng = rng_from(mix_seed(spec.seed, &[0x9a27, k as u64]));
    let classes = data.class_count() as usize;

    // Per-label queues and a global order, both seeded; `consumed` is shared
    // so restricted and IID draws never hand out the same sample twice.
    let mut label_queues: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for i in 0..n {
        label_queues[data.label(i) as usize].push(i);
    }
    let label_pools = label_queues.clone();
    for q in label_queues.iter_mut() {
        q.shuffle(&mut rng);
    }
    let mut global_order: Vec<usize> = (0..n).collect();
    global_order.shuffle(&mut rng);
    let mut global_ptr = 0usize;
    let mut consumed = vec![false; n];

    let base = n / k;
    let extra = n % k;
    let mut shards = Vec::with_capacity(k);
    let mut restricted_draws = Vec::with_capacity(k);
    let mut replacement_draws = 0usize;

    for client in 0..k {
        let size = base + usize::from(client < extra);
        let n_res = ((spec.alpha * size as f64).round() as usize).min(size);
        let set = restricted_labels(client, spec.max_labels, data.class_count());
        let mut chosen = Vec::with_capacity(size);

        for _ in 0..n_res {
            // Pop from a uniformly chosen restricted label with remaining
            // supply; lazily skip entries consumed through the global order.
            let mut live: Vec<u32> = Vec::new();
            for &lab in &set {
                let q = &mut label_queues[lab as usize];
                while let Some(&i) = q.last() {
                    if consumed[i] {
                        q.pop();
                    } else {
                        break;
                    }
                }
                if !q.is_empty() {
                    live.push(lab);
                }
            }
            if let Some(&lab) = live.as_slice().choose(&mut rng) {
                let i = label_queues[lab as usize].pop().expect("live queue");
                consumed[i] = true;
                chosen.push(i);
            } else {
                let pool: Vec<usize> = set
                    .iter()
                    .flat_map(|&lab| label_pools[lab as usize].iter().copied())
                    .collect();
                let &i = pool.as_slice().choose(&mut rng).ok_or_else(|| {
                    FaflError::Partition(format!(
                        "no samples exist for restricted labels {set:?}"
                    ))
                })?;
                chosen.push(i);
                replacement_draws += 1;
            }
        }

        for _ in n_res..size {
            while global_ptr < n && consumed[global_order[global_ptr]] {
                global_ptr += 1;
            }
            if global_ptr < n {
                let i = global_order[global_ptr];
                consumed[i] = true;
                chosen.push(i);
            } else {
                let i = rng.random_range(0..n);
                chosen.push(i);
                replacement_draws += 1;
            }
        }

        restricted_draws.push(n_res);
        shards.push(data.subset(&chosen)?);
    }

    Ok(PartitionOutcome { shards, restricted_draws, replacement_draws })
}

/// Total-variation distance between two label proportion vectors.
fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn shard_stats(shards: &[LabeledDataset], replacement_draws: usize) -> Result<HeterogeneityReport> {
    if shards.is_empty() {
        return Err(FaflError::Partition("no shards to report on".into()));
    }
    let histograms: Vec<Vec<usize>> = shards.iter().map(|s| s.label_histogram()).collect();
    let props: Vec<Vec<f64>> = histograms
        .iter()
        .map(|h| {
            let total: usize = h.iter().sum();
            h.iter().map(|&c| c as f64 / total as f64).collect()
        })
        .collect();
    let k = props.len();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            sum += tv_distance(&props[i], &props[j]);
            pairs += 1;
        }
    }
    let mean_pairwise_tv = if pairs == 0 { 0.0 } else { sum / pairs as f64 };
    Ok(HeterogeneityReport { histograms, mean_pairwise_tv, replacement_draws })
}

/// CSV ingestion result: the dataset plus indices (1-based, excluding the
/// header) of rows rejected for unparseable values.
#[derive(Debug)]
pub struct CsvLoad {
    pub data: LabeledDataset,
    pub rejected_rows: Vec<usize>,
    pub label_names: Vec<String>,
    pub group_names: Vec<String>,
    pub feature_columns: Vec<String>,
}

/// Parse a comma-separated file with a header row. Numeric columns other
/// than the label/group columns become features; labels (and groups) are
/// factorized to contiguous ids in first-appearance order.
pub fn load_csv_dataset(
    path: &std::path::Path,
    label_column: &str,
    group_column: Option<&str>,
) -> Result<CsvLoad> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FaflError::Ingestion(format!("cannot open {}: {e}", path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| FaflError::Ingestion(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();

    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| FaflError::Ingestion(format!("label column '{label_column}' not found")))?;
    let group_idx = match group_column {
        Some(g) => Some(headers.iter().position(|h| h == g).ok_or_else(|| {
            FaflError::Ingestion(format!("group column '{g}' not found"))
        })?),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && Some(i) != group_idx)
        .collect();
    if feature_idx.is_empty() {
        return Err(FaflError::Ingestion("no feature columns left after label/group".into()));
    }

    let mut label_names: Vec<String> = Vec::new();
    let mut group_names: Vec<String> = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups: Vec<u32> = Vec::new();
    let mut rejected = Vec::new();

    let factorize = |names: &mut Vec<String>, value: &str| -> u32 {
        match names.iter().position(|n| n == value) {
            Some(i) => i as u32,
            None => {
                names.push(value.to_owned());
                (names.len() - 1) as u32
            }
        }
    };

    for (row_no, record) in reader.records().enumerate() {
        let row_id = row_no + 1;
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                rejected.push(row_id);
                continue;
            }
        };
        if record.len() != headers.len() {
            rejected.push(row_id);
            continue;
        }
        let mut row: Vec<f64> = Vec::with_capacity(feature_idx.len());
        let mut ok = true;
        for &i in &feature_idx {
            match record[i].parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            rejected.push(row_id);
            continue;
        }
        let label = factorize(&mut label_names, &record[label_idx]);
        if let Some(gi) = group_idx {
            groups.push(factorize(&mut group_names, &record[gi]));
        }
        features.extend_from_slice(&row);
        labels.push(label);
    }

    if labels.is_empty() {
        return Err(FaflError::Ingestion("zero valid rows".into()));
    }

    let class_count = label_names.len() as u32;
    let data = LabeledDataset::new(
        features,
        feature_idx.len(),
        labels,
        class_count,
        if group_idx.is_some() { Some(groups) } else { None },
    )?;
    Ok(CsvLoad {
        data,
        rejected_rows: rejected,
        label_names,
        group_names,
        feature_columns: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
    })
}

/// Write a dataset back out as CSV (`f0..f{D-1},label[,group]`), using the
/// shortest float representation that round-trips exactly.
pub fn write_csv_dataset(data: &LabeledDataset, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = (0..data.dim()).map(|d| format!("f{d}")).collect();
    header.push("label".into());
    if data.groups().is_some() {
        header.push("group".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields: Vec<String> = data.row(i).iter().map(|v| format!("{v}")).collect();
        fields.push(data.label(i).to_string());
        if let Some(g) = data.groups() {
            fields.push(g[i].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
