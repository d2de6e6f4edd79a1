use std::path::Path;

use anyhow::{Context, Result};
use co2bayes_core::ingest::{HoursFilter, ParseOptions, SegmentConfig};
use co2bayes_core::{EcaPolicy, MitigationScenario, PriorSet, RoomGeometry, SamplerConfig, TestStatistic};
use serde::{Deserialize, Serialize};

use crate::InputError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub parse: ParseOptions,
    pub segment: SegmentConfig,
    /// Daily window and seasons; days outside the seasons are not assessed.
    pub hours: HoursFilter,
    /// Optional level for the school-hours CDF report.
    pub cdf_threshold_ppm: Option<f64>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            parse: ParseOptions::default(),
            segment: SegmentConfig::default(),
            hours: HoursFilter::default(),
            cdf_threshold_ppm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcConfig {
    pub n_sims: usize,
    pub statistic: TestStatistic,
}

impl Default for PpcConfig {
    fn default() -> Self {
        Self {
            n_sims: 1000,
            statistic: TestStatistic::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub n_runs: usize,
    pub cadr_grid: Vec<f64>,
    /// Fixed breakpoint in cfm; chosen by least squares when absent.
    pub breakpoint_cfm: Option<f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            n_runs: co2bayes_core::assessment::DEFAULT_ENSEMBLE_RUNS,
            cadr_grid: (0..=10).map(|k| k as f64 * 100.0).collect(),
            breakpoint_cfm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: RoomGeometry,
    pub priors: PriorSet,
    pub sampler: SamplerConfig,
    pub policy: EcaPolicy,
    pub scenarios: Vec<MitigationScenario>,
    pub ingest: IngestConfig,
    pub ppc: PpcConfig,
    pub thresholds: ThresholdConfig,
    pub hdi_mass: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: RoomGeometry::chamber(),
            priors: PriorSet::default(),
            sampler: SamplerConfig::default(),
            policy: EcaPolicy::default(),
            scenarios: MitigationScenario::standard_set(),
            ingest: IngestConfig::default(),
            ppc: PpcConfig::default(),
            thresholds: ThresholdConfig::default(),
            hdi_mass: co2bayes_core::inference::DEFAULT_HDI_MASS,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| InputError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        let check = || -> co2bayes_core::Result<()> {
            self.priors.validate()?;
            self.sampler.validate()?;
            self.policy.validate()?;
            for s in &self.scenarios {
                s.validate()?;
            }
            Ok(())
        };
        check().context("config")?;
        if !(self.hdi_mass > 0.0 && self.hdi_mass < 1.0) {
            return Err(InputError(format!("hdi_mass must be in (0, 1), got {}", self.hdi_mass)).into());
        }
        if self.thresholds.cadr_grid.is_empty() {
            return Err(InputError("thresholds.cadr_grid must not be empty".into()).into());
        }
        Ok(())
    }
}
