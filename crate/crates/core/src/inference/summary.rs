use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::prior::{Param, ParamDraw};
use super::sampler::PosteriorSamples;

pub const DEFAULT_HDI_MASS: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
}

impl ParamSummary {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.hdi_low && x <= self.hdi_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub hdi_mass: f64,
    pub q_ach: ParamSummary,
    pub c_out_ppm: ParamSummary,
    pub e_lps: ParamSummary,
    pub sigma: ParamSummary,
}

impl PosteriorSummary {
    pub fn get(&self, p: Param) -> &ParamSummary {
        match p {
            Param::Q => &self.q_ach,
            Param::COut => &self.c_out_ppm,
            Param::E => &self.e_lps,
            Param::Sigma => &self.sigma,
        }
    }

    pub fn means(&self) -> ParamDraw {
        ParamDraw::new(self.q_ach.mean, self.c_out_ppm.mean, self.e_lps.mean, self.sigma.mean)
    }
}

/// Narrowest interval containing `ceil(mass * n)` of the draws.
pub fn hdi(draws: &[f64], mass: f64) -> Result<(f64, f64)> {
    if !(mass > 0.0 && mass < 1.0) {
        return invalid(format!("hdi mass must lie in (0, 1), got {mass}"));
    }
    if draws.is_empty() {
        return invalid("hdi of an empty sample");
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let best = (0..=n - k)
        .min_by(|&a, &b| (s[a + k - 1] - s[a]).total_cmp(&(s[b + k - 1] - s[b])))
        .unwrap_or(0);
    Ok((s[best], s[best + k - 1]))
}

/// Mean, sample sd and HDI of one marginal.
pub fn summarize_draws(draws: &[f64], hdi_mass: f64) -> Result<ParamSummary> {
    let (hdi_low, hdi_high) = hdi(draws, hdi_mass)?;
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = if draws.len() > 1 {
        (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    if !(mean >= hdi_low && mean <= hdi_high) {
        log::warn!("posterior mean {mean} lies outside its HDI [{hdi_low}, {hdi_high}]");
    }
    Ok(ParamSummary {
        mean,
        sd,
        hdi_low,
        hdi_high,
    })
}

/// Pooled-chain summary of every parameter.
pub fn summarize(samples: &PosteriorSamples, hdi_mass: f64) -> Result<PosteriorSummary> {
    if samples.total_draws() < 1000 {
        return invalid(format!("summary needs >= 1000 pooled draws, got {}", samples.total_draws()));
    }
    let s = |p| summarize_draws(&samples.pooled(p), hdi_mass);
    Ok(PosteriorSummary {
        hdi_mass,
        q_ach: s(Param::Q)?,
        c_out_ppm: s(Param::COut)?,
        e_lps: s(Param::E)?,
        sigma: s(Param::Sigma)?,
    })
}
