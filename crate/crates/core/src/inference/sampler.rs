use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, Domain};
use crate::series::Co2Series;

use super::convergence::{ess_bulk, split_rhat};
use super::nuts::{run_chain, NutsSettings};
use super::prior::{Param, ParamDraw, PriorSet};
use super::target::PosteriorTarget;

pub const MAX_INIT_ATTEMPTS: usize = 50;
pub const RHAT_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Post burn-in draws per chain.
    pub draws: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            draws: 5000,
            chains: 2,
            burn_in: 500,
            target_accept: 0.8,
            max_tree_depth: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < 1000 {
            return invalid(format!("draws must be >= 1000, got {}", self.draws));
        }
        if self.chains < 2 {
            return invalid(format!("chains must be >= 2, got {}", self.chains));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return invalid(format!("target_accept must lie in (0, 1), got {}", self.target_accept));
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 20 {
            return invalid(format!("max_tree_depth must lie in 1..=20, got {}", self.max_tree_depth));
        }
        Ok(())
    }
}

/// Sampler settings as run, including the adapted kernel of each chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerRecord {
    pub algorithm: String,
    pub draws: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub step_sizes: Vec<f64>,
    /// Diagonal inverse metric per chain, over the free parameters.
    pub inv_metric: Vec<Vec<f64>>,
    pub free_params: Vec<Param>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub r_hat: f64,
    pub effective_sample_size: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Keyed by column name (q_ach, c_out_ppm, e_lps, sigma).
    pub params: BTreeMap<String, ParamDiagnostics>,
    pub divergences: usize,
    pub converged: bool,
}

/// Post burn-in draws of all chains plus diagnostics.
/// Each draw is stored as `[q_ach, c_out_ppm, e_lps, sigma]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub sampler_config: SamplerRecord,
    pub priors: PriorSet,
    pub diagnostics: Diagnostics,
    pub chains: Vec<Vec<[f64; 4]>>,
}

impl PosteriorSamples {
    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, Vec::len)
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// Per-chain traces of one parameter.
    pub fn traces(&self, p: Param) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.iter().map(|d| d[p.index()]).collect())
            .collect()
    }

    /// All draws of one parameter, chains concatenated.
    pub fn pooled(&self, p: Param) -> Vec<f64> {
        self.chains.iter().flatten().map(|d| d[p.index()]).collect()
    }

    pub fn pooled_draws(&self) -> impl Iterator<Item = ParamDraw> + '_ {
        self.chains.iter().flatten().map(|d| ParamDraw::from_array(*d))
    }

    /// Draw by flat index over the concatenated chains.
    pub fn draw(&self, flat: usize) -> Option<ParamDraw> {
        let per = self.draws_per_chain();
        if per == 0 {
            return None;
        }
        self.chains.get(flat / per).and_then(|c| c.get(flat % per)).map(|d| ParamDraw::from_array(*d))
    }

    /// Recompute diagnostics from stored draws.
    pub fn compute_diagnostics(chains: &[Vec<[f64; 4]>], accept_rate: f64, divergences: usize) -> Diagnostics {
        let mut params = BTreeMap::new();
        let mut converged = true;
        for p in Param::ALL {
            let traces: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.iter().map(|d| d[p.index()]).collect())
                .collect();
            let r_hat = split_rhat(&traces);
            if !(r_hat <= RHAT_THRESHOLD) {
                converged = false;
            }
            params.insert(
                p.column().to_string(),
                ParamDiagnostics {
                    r_hat,
                    effective_sample_size: ess_bulk(&traces),
                    acceptance_rate: accept_rate,
                },
            );
        }
        Diagnostics {
            params,
            divergences,
            converged,
        }
    }

    pub fn param_diagnostics(&self, p: Param) -> &ParamDiagnostics {
        &self.diagnostics.params[p.column()]
    }
}

fn initial_point<R: rand::Rng>(target: &PosteriorTarget, priors: &PriorSet, rng: &mut R) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; super::nuts::LogDensity::dim(target)];
    for _ in 0..MAX_INIT_ATTEMPTS {
        let draw = priors.sample(rng);
        let Some(u) = target.to_unconstrained(&draw) else {
            continue;
        };
        let lp = super::nuts::LogDensity::logp_grad(target, &u, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(u);
        }
    }
    Err(Error::PosteriorUnreachable {
        attempts: MAX_INIT_ATTEMPTS,
    })
}

/// Draw from the posterior of (Q, C_out, E, sigma) with NUTS.
///
/// Chain `i` uses its own stream derived from `(seed, i)`; chains run in
/// parallel and the result does not depend on scheduling. Step size and
/// metric adapt during burn-in only. Runs with `r_hat > 1.05` on any
/// parameter are returned with `converged = false`.
pub fn sample_posterior(
    priors: &PriorSet,
    data: &Co2Series,
    volume_l: f64,
    config: &SamplerConfig,
    seed: u64,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let target = PosteriorTarget::new(priors, data, volume_l)?;
    let settings = NutsSettings {
        target_accept: config.target_accept,
        max_tree_depth: config.max_tree_depth,
    };

    let runs: Vec<Result<_>> = (0..config.chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Domain::Chain, i as u64);
            let init = initial_point(&target, priors, &mut rng)?;
            if target.free_params().is_empty() {
                let d = target.to_draw(&init).to_array();
                return Ok((vec![d; config.draws], vec![1.0; config.draws], 0, 0.0, Vec::new()));
            }
            let out = run_chain(&target, init, config.burn_in, config.draws, settings, &mut rng);
            let draws: Vec<[f64; 4]> = out.draws.iter().map(|u| target.to_draw(u).to_array()).collect();
            Ok((draws, out.accept_stats, out.divergences, out.step_size, out.inv_metric))
        })
        .collect();

    let mut chains = Vec::with_capacity(config.chains);
    let mut accept = Vec::new();
    let mut divergences = 0;
    let mut step_sizes = Vec::new();
    let mut inv_metric = Vec::new();
    for r in runs {
        let (d, a, div, eps, m) = r?;
        chains.push(d);
        accept.extend(a);
        divergences += div;
        step_sizes.push(eps);
        inv_metric.push(m);
    }
    let accept_rate = accept.iter().sum::<f64>() / accept.len() as f64;
    let diagnostics = PosteriorSamples::compute_diagnostics(&chains, accept_rate, divergences);
    if !diagnostics.converged {
        log::warn!("sampler did not converge (r_hat > {RHAT_THRESHOLD} on at least one parameter)");
    }
    if divergences > 0 {
        log::warn!("{divergences} divergent transitions after burn-in");
    }

    Ok(PosteriorSamples {
        sampler_config: SamplerRecord {
            algorithm: "nuts".into(),
            draws: config.draws,
            chains: config.chains,
            burn_in: config.burn_in,
            seed,
            target_accept: config.target_accept,
            max_tree_depth: config.max_tree_depth,
            step_sizes,
            inv_metric,
            free_params: target.free_params().to_vec(),
        },
        priors: *priors,
        diagnostics,
        chains,
    })
}
