//! Cross-product sweep harness with an on-disk cache.
//!
//! Each (mechanism, alpha, seed) cell runs as an independent experiment and
//! lands in the cache directory as `<16-hex config hash>.json`. Completed
//! cells are skipped on rerun; unreadable cells are recomputed with a
//! warning.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, ExperimentConfig};
use crate::error::{FaflError, Result};
use crate::fairness::MechanismKind;

use super::{run_experiment, MetricSeries};

/// One completed sweep cell: the exact config it ran under plus its series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub config: ExperimentConfig,
    pub series: MetricSeries,
}

fn cell_path(cache_dir: &Path, hash: &str) -> PathBuf {
    cache_dir.join(format!("{hash}.json"))
}

/// Load a cached cell, verifying that its stored config hashes to the file
/// name it was stored under.
fn load_cell(path: &Path, expect_hash: &str) -> Result<SweepCell> {
    let text = std::fs::read_to_string(path)?;
    let cell: SweepCell = serde_json::from_str(&text)
        .map_err(|e| FaflError::Report(format!("unreadable cache cell: {e}")))?;
    if config_hash(&cell.config) != expect_hash {
        return Err(FaflError::Report("cache cell config hash mismatch".into()));
    }
    Ok(cell)
}

fn store_cell(path: &Path, cell: &SweepCell) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec(cell).expect("cell serializes"))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// All cells of the (mechanism x alpha x seed) grid, cached ones included.
/// Returns cells in grid order along with the number actually computed.
pub fn run_sweep(
    base: &ExperimentConfig,
    mechanisms: &[MechanismKind],
    alphas: &[f64],
    seeds: &[u64],
    cache_dir: &Path,
    workers: usize,
) -> Result<(Vec<SweepCell>, usize)> {
    if mechanisms.is_empty() || alphas.is_empty() || seeds.is_empty() {
        return Err(FaflError::Config("sweep grids must be non-empty".into()));
    }
    std::fs::create_dir_all(cache_dir)?;

    let mut cells = Vec::with_capacity(mechanisms.len() * alphas.len() * seeds.len());
    let mut computed = 0usize;
    for &mechanism in mechanisms {
        for &alpha in alphas {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.mechanism = mechanism;
                cfg.alpha = alpha;
                cfg.seed = seed;
                cfg.validate()?;
                let hash = config_hash(&cfg);
                let path = cell_path(cache_dir, &hash);

                let cell = if path.exists() {
                    match load_cell(&path, &hash) {
                        Ok(cell) => cell,
                        Err(e) => {
                            warn!("recomputing cell {hash}: {e}");
                            let series = run_experiment(&cfg, workers)?;
                            computed += 1;
                            let cell = SweepCell { config: cfg, series };
                            store_cell(&path, &cell)?;
                            cell
                        }
                    }
                } else {
                    let series = run_experiment(&cfg, workers)?;
                    computed += 1;
                    let cell = SweepCell { config: cfg, series };
                    store_cell(&path, &cell)?;
                    cell
                };
                cells.push(cell);
            }
        }
    }
    Ok((cells, computed))
}

/// Read every cached cell in a sweep directory (for the report command).
pub fn load_sweep_dir(cache_dir: &Path) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    let entries = std::fs::read_dir(cache_dir)
        .map_err(|e| FaflError::Report(format!("cannot read {}: {e}", cache_dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        match load_cell(&path, stem) {
            Ok(cell) => cells.push(cell),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(cells)
}
