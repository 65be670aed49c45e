//! Synthetic corpus: a Matérn lead speed followed by the human-driven chain.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gp::sample_gp;
use crate::traffic::simulate_ovm_chain;
use crate::trajectory::{read_raw_csv, uniformize, SpeedTrajectory};

/// One corpus member with the seed that produced it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub index: usize,
    /// seed of the accepted lead draw
    pub seed: u64,
    /// draws discarded because the chain collided
    pub rejected: usize,
    pub trajectory: SpeedTrajectory<f64>,
}

/// Manifest line written next to the dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub index: usize,
    pub seed: u64,
    pub rejected: usize,
    pub file: String,
}

/// SplitMix64 finalizer; decorrelates nearby integers.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of attempt `attempt` for dataset `index` under the experiment seed `base`.
pub fn derive_seed(base: u64, index: usize, attempt: usize) -> u64 {
    mix(mix(mix(base) ^ index as u64) ^ attempt as u64)
}

/// Draws the lead speed of vehicle L and simulates vehicles L-1..1 behind it. A collision in
/// the chain discards the draw and retries with the next sub-seed.
pub fn generate_dataset(cfg: &ExperimentConfig, index: usize) -> Result<Dataset> {
    let l = cfg.human.chain_length;
    let mut last = None;
    for attempt in 0..cfg.max_regenerations.max(1) {
        let seed = derive_seed(cfg.seed, index, attempt);
        let lead = sample_gp(&cfg.gp.config(seed)?, l)?;
        match simulate_ovm_chain(&lead, &cfg.human, cfg.gp.mean_speed, cfg.integrator) {
            Ok(trajectory) => {
                if attempt > 0 {
                    log::info!("dataset {index}: accepted sub-seed {attempt} after {attempt} collisions");
                }
                return Ok(Dataset {
                    index,
                    seed,
                    rejected: attempt,
                    trajectory,
                });
            }
            Err(e @ Error::Collision { .. }) => {
                log::debug!("dataset {index}, sub-seed {attempt}: {e}; regenerating");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Input(format!(
        "dataset {index}: every one of {} draws collided (last: {})",
        cfg.max_regenerations,
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Datasets 0..cfg.datasets in index order.
pub fn generate_corpus(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    generate_range(cfg, 0..cfg.datasets)
}

pub fn generate_range(cfg: &ExperimentConfig, range: std::ops::Range<usize>) -> Result<Vec<Dataset>> {
    range.into_par_iter().map(|i| generate_dataset(cfg, i)).collect()
}

pub fn dataset_file_name(index: usize) -> String {
    format!("dataset_{index:03}.csv")
}

/// Writes every dataset as interchange CSV plus `manifest.json`.
pub fn write_corpus(datasets: &[Dataset], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(datasets.len());
    let mut manifest = Vec::with_capacity(datasets.len());
    for d in datasets {
        let file = dataset_file_name(d.index);
        let path = dir.join(&file);
        d.trajectory.write_csv_path(&path)?;
        manifest.push(DatasetRecord {
            index: d.index,
            seed: d.seed,
            rejected: d.rejected,
            file,
        });
        paths.push(path);
    }
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(paths)
}

/// Reads and validates an interchange CSV; non-uniform time bases are resampled with a warning.
pub fn ingest_external(path: impl AsRef<Path>) -> Result<SpeedTrajectory<f64>> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let table = read_raw_csv(std::io::BufReader::new(file), &source)?;
    if !table.ignored_columns.is_empty() {
        log::info!("{source}: ignoring columns {:?}", table.ignored_columns);
    }
    let ingested = uniformize(table, &source)?;
    if ingested.resampled {
        log::warn!("{source}: time base is not uniform; resampled by linear interpolation");
    }
    Ok(ingested.trajectory)
}

/// Reads a corpus written by [`write_corpus`], in manifest order.
pub fn read_corpus(dir: impl AsRef<Path>) -> Result<Vec<Dataset>> {
    let dir = dir.as_ref();
    let manifest: Vec<DatasetRecord> = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    manifest
        .into_iter()
        .map(|r| {
            Ok(Dataset {
                index: r.index,
                seed: r.seed,
                rejected: r.rejected,
                trajectory: ingest_external(dir.join(&r.file))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.gp.duration = 60.0;
        cfg
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(1, 0, 0);
        assert_eq!(a, derive_seed(1, 0, 0));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(2, 0, 0));
    }

    #[test]
    fn regeneration_is_deterministic() {
        let cfg = small();
        let a = generate_dataset(&cfg, 3).unwrap();
        let b = generate_dataset(&cfg, 3).unwrap();
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.trajectory.speeds(), b.trajectory.speeds());
        assert_eq!(a.trajectory.vehicles().collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let cfg = small();
        let data = generate_range(&cfg, 0..2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&data, dir.path()).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.trajectory.speeds(), b.trajectory.speeds());
            assert_eq!(a.seed, b.seed);
            assert!((a.trajectory.dt - b.trajectory.dt).abs() < 1e-12);
        }
    }

    #[test]
    fn exhausted_regenerations_report_an_error() {
        let mut cfg = small();
        cfg.gp.amplitude = 30.0;
        cfg.max_regenerations = 2;
        let err = generate_dataset(&cfg, 0).unwrap_err();
        assert!(err.to_string().contains("collided"), "{err}");
    }
}
