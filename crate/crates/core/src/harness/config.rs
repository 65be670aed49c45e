//! Typed experiment configuration with every default recorded; read from and written to TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpConfig, MaternKernel};
use crate::spectral::{WelchConfig, WindowKind};
use crate::traffic::{HumanParams, IntegratorSettings, PlantParams, PolicyParams};
use crate::tuner::{Convention, SearchSpec};

/// Lead-vehicle speed process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpSettings {
    /// C, m/s
    pub amplitude: f64,
    /// rho, s
    pub length_scale: f64,
    /// nu
    pub smoothness: f64,
    /// v*, m/s
    pub mean_speed: f64,
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            length_scale: 5.0,
            smoothness: 2.5,
            mean_speed: 25.0,
            duration: 500.0,
            dt: 0.1,
        }
    }
}

impl GpSettings {
    pub fn kernel(&self) -> Result<MaternKernel<f64>> {
        MaternKernel::new(self.amplitude, self.length_scale, self.smoothness)
    }

    pub fn config(&self, seed: u64) -> Result<GpConfig<f64>> {
        Ok(GpConfig {
            kernel: self.kernel()?,
            mean_speed: self.mean_speed,
            duration: self.duration,
            dt: self.dt,
            seed,
        })
    }
}

/// Controlled truck: plant, range policy and the gain on the headway error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruckSettings {
    /// 1/s
    pub alpha: f64,
    pub policy: PolicyParams<f64>,
    pub plant: PlantParams<f64>,
}

impl Default for TruckSettings {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            policy: PolicyParams::truck(),
            plant: PlantParams::heavy_truck(),
        }
    }
}

/// Leader sweep extent; observation and testing datasets are the first indices of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub leaders: Vec<usize>,
    pub observations: usize,
    pub tests: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            leaders: (2..=8).collect(),
            observations: 20,
            tests: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// datasets in the corpus
    pub datasets: usize,
    /// sub-seeds tried per dataset before giving up on collisions
    pub max_regenerations: usize,
    /// connected leader L for the CCC modes
    pub leader: usize,
    /// worker threads; 0 uses all cores
    pub threads: usize,
    pub convention: Convention,
    pub gp: GpSettings,
    pub human: HumanParams<f64>,
    pub truck: TruckSettings,
    pub integrator: IntegratorSettings<f64>,
    pub welch: WelchConfig,
    pub search: SearchSpec,
    pub sweep: SweepSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            datasets: 101,
            max_regenerations: 2000,
            leader: 8,
            threads: 0,
            convention: Convention::Folded,
            gp: GpSettings::default(),
            human: HumanParams::reference(),
            truck: TruckSettings::default(),
            integrator: IntegratorSettings::default(),
            welch: WelchConfig {
                segment_length: 1024,
                overlap_ratio: 0.5,
                window: WindowKind::Hamming,
            },
            search: SearchSpec::default(),
            sweep: SweepSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.gp.config(self.seed)?.samples()?;
        self.human.validate()?;
        self.truck.policy.validate()?;
        self.truck.plant.validate()?;
        self.welch.validate()?;
        self.search.validate()?;
        self.integrator.ratio(self.gp.dt)?;
        if self.leader < 2 || self.leader > self.human.chain_length {
            return Err(Error::Input(format!(
                "leader {} outside 2..={}",
                self.leader, self.human.chain_length
            )));
        }
        if self.datasets < 2 {
            return Err(Error::Input("cross evaluation needs at least two datasets".into()));
        }
        if let Some(&l) = self.sweep.leaders.iter().find(|&&l| l < 2 || l > self.human.chain_length) {
            return Err(Error::Input(format!("sweep leader {l} outside 2..={}", self.human.chain_length)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str("seed = 7\n[human]\nalpha = 0.3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.human.alpha, 0.3);
        assert_eq!(cfg.human.beta, 0.8);
        assert_eq!(cfg.datasets, 101);
    }

    #[test]
    fn shipped_default_file_matches_defaults() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
        assert_eq!(ExperimentConfig::from_path(path).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn rejects_bad_leader_and_step() {
        assert!(ExperimentConfig::from_toml_str("leader = 9").is_err());
        assert!(ExperimentConfig::from_toml_str("[integrator]\nstep = 0.03").is_err());
        assert!(ExperimentConfig::from_toml_str("unknown_key = 1").is_err());
    }
}
