use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::Co2Series;

use super::prior::{Param, PriorSet};
use super::sampler::{sample_posterior, SamplerConfig};
use super::summary::{summarize, PosteriorSummary, DEFAULT_HDI_MASS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRun {
    pub name: String,
    pub priors: PriorSet,
    pub summary: PosteriorSummary,
    pub converged: bool,
}

/// Difference of posterior means between two prior sets, in units of the
/// pooled posterior sd `sqrt((sd_a^2 + sd_b^2) / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShift {
    pub a: String,
    pub b: String,
    pub param: Param,
    pub shift_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub runs: Vec<SensitivityRun>,
    pub shifts: Vec<MeanShift>,
}

impl SensitivityReport {
    pub fn run(&self, name: &str) -> Option<&SensitivityRun> {
        self.runs.iter().find(|r| r.name == name)
    }

    pub fn shift(&self, a: &str, b: &str, param: Param) -> Option<f64> {
        self.shifts
            .iter()
            .find(|s| s.param == param && ((s.a == a && s.b == b) || (s.a == b && s.b == a)))
            .map(|s| s.shift_sd)
    }
}

/// Standardized shift of one marginal between two summaries.
pub fn mean_shift(a: &PosteriorSummary, b: &PosteriorSummary, param: Param) -> f64 {
    let (x, y) = (a.get(param), b.get(param));
    let pooled = ((x.sd * x.sd + y.sd * y.sd) / 2.0).sqrt();
    let diff = (x.mean - y.mean).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / pooled
    }
}

/// Run the sampler once per prior set (same data, config and seed) and
/// report every pairwise mean shift.
pub fn prior_sensitivity(
    data: &Co2Series,
    volume_l: f64,
    prior_sets: &[(String, PriorSet)],
    config: &SamplerConfig,
    seed: u64,
) -> Result<SensitivityReport> {
    if prior_sets.len() < 2 {
        return invalid(format!("prior sensitivity needs >= 2 prior sets, got {}", prior_sets.len()));
    }
    let mut runs = Vec::with_capacity(prior_sets.len());
    for (name, priors) in prior_sets {
        let labeled = |e: Error| Error::PriorSetRun {
            name: name.clone(),
            source: Box::new(e),
        };
        let samples = sample_posterior(priors, data, volume_l, config, seed).map_err(labeled)?;
        let summary = summarize(&samples, DEFAULT_HDI_MASS).map_err(labeled)?;
        runs.push(SensitivityRun {
            name: name.clone(),
            priors: *priors,
            summary,
            converged: samples.converged(),
        });
    }
    let mut shifts = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            for p in Param::ALL {
                shifts.push(MeanShift {
                    a: runs[i].name.clone(),
                    b: runs[j].name.clone(),
                    param: p,
                    shift_sd: mean_shift(&runs[i].summary, &runs[j].summary, p),
                });
            }
        }
    }
    Ok(SensitivityReport { runs, shifts })
}
