//! Posterior predictive checks and ODE-vs-SDE trend comparison.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::{ParamDraw, PosteriorSamples, PosteriorSummary};
use crate::model::{check_stability, par_runs, quantile_sorted, simulate_sde_on_grid};
use crate::rng::{stream, Domain};
use crate::room::{check_volume, ModelParams, SECONDS_PER_HOUR};
use crate::series::Co2Series;

pub const ENVELOPE_CSV_HEADER: &str = "t_seconds,q025,q50,q975,observed";
pub const ENVELOPE_PROBS: [f64; 3] = [0.025, 0.5, 0.975];
pub const MIN_PPC_SIMS: usize = 100;
pub const DEFAULT_TREND_SIMS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatistic {
    #[default]
    Mean,
    Max,
    FinalValue,
}

impl TestStatistic {
    pub fn eval(self, values: &[f64]) -> f64 {
        match self {
            TestStatistic::Mean => values.iter().sum::<f64>() / values.len() as f64,
            TestStatistic::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            TestStatistic::FinalValue => *values.last().unwrap_or(&f64::NAN),
        }
    }
}

/// Per-time quantile bands of simulated trajectories next to the observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub t_seconds: Vec<f64>,
    pub q025: Vec<f64>,
    pub q50: Vec<f64>,
    pub q975: Vec<f64>,
    pub observed: Vec<f64>,
}

impl Envelope {
    fn from_runs(times: &[f64], runs: &[Vec<f64>], observed: &[f64]) -> Self {
        let bands = band_quantiles(runs, times.len());
        Self {
            t_seconds: times.to_vec(),
            q025: bands[0].clone(),
            q50: bands[1].clone(),
            q975: bands[2].clone(),
            observed: observed.to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{ENVELOPE_CSV_HEADER}")?;
        for i in 0..self.t_seconds.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.t_seconds[i], self.q025[i], self.q50[i], self.q975[i], self.observed[i]
            )?;
        }
        Ok(())
    }
}

/// Quantiles at [`ENVELOPE_PROBS`] per time index, as three rows.
fn band_quantiles(runs: &[Vec<f64>], len: usize) -> [Vec<f64>; 3] {
    let mut out = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    let mut col = vec![0.0; runs.len()];
    for j in 0..len {
        for (slot, r) in col.iter_mut().zip(runs) {
            *slot = r[j];
        }
        col.sort_by(f64::total_cmp);
        for (k, &p) in ENVELOPE_PROBS.iter().enumerate() {
            out[k][j] = quantile_sorted(&col, p);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcResult {
    pub n_sims: usize,
    pub test_statistic: TestStatistic,
    pub t_obs: f64,
    pub t_sims: Vec<f64>,
    pub bayesian_p: f64,
    /// Simulations start from the observed first value on the observed grid.
    pub initial_value: String,
    pub seed: u64,
    pub envelope: Envelope,
}

/// `(1 + #{t_sim >= t_obs}) / (1 + n)`; ties count as exceeding.
pub fn bayesian_p(t_obs: f64, t_sims: &[f64]) -> f64 {
    let hits = t_sims.iter().filter(|&&t| t >= t_obs).count();
    (1 + hits) as f64 / (1 + t_sims.len()) as f64
}

fn params_for(draw: &ParamDraw, volume_l: f64, max_dt_h: f64) -> Result<ModelParams> {
    let p = ModelParams::from_ach(draw.q_ach, volume_l, draw.c_out_ppm, draw.e_lps, draw.sigma)?;
    check_stability(&p, volume_l, max_dt_h)?;
    Ok(p)
}

fn max_dt_h(data: &Co2Series) -> f64 {
    data.times_s()
        .windows(2)
        .map(|w| (w[1] - w[0]) / SECONDS_PER_HOUR)
        .fold(0.0, f64::max)
}

/// Posterior predictive check for explicit draws and resampling indices.
/// Simulation `i` uses `draws[indices[i]]` with its own stream `(seed, i)`.
pub fn posterior_predictive_with_indices(
    draws: &[ParamDraw],
    indices: &[usize],
    data: &Co2Series,
    volume_l: f64,
    statistic: TestStatistic,
    seed: u64,
) -> Result<PpcResult> {
    check_volume(volume_l)?;
    if draws.is_empty() {
        return invalid("posterior predictive check needs a nonempty posterior");
    }
    if data.is_empty() {
        return Err(Error::Empty("observed series".into()));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= draws.len()) {
        return invalid(format!("resampling index {i} out of range for {} draws", draws.len()));
    }
    let dt = max_dt_h(data);
    let params: Vec<ModelParams> = indices
        .iter()
        .map(|&i| params_for(&draws[i], volume_l, dt))
        .collect::<Result<_>>()?;
    let times = data.times_s();
    let c0 = data.values()[0];
    let runs = par_runs(indices.len(), seed, Domain::Predictive, |i, rng| {
        simulate_sde_on_grid(c0, &params[i], volume_l, times, rng)
    });
    let t_obs = statistic.eval(data.values());
    let t_sims: Vec<f64> = runs.iter().map(|r| statistic.eval(r)).collect();
    Ok(PpcResult {
        n_sims: indices.len(),
        test_statistic: statistic,
        t_obs,
        bayesian_p: bayesian_p(t_obs, &t_sims),
        t_sims,
        initial_value: "observed".into(),
        seed,
        envelope: Envelope::from_runs(times, &runs, data.values()),
    })
}

/// Uniform resampling indices with replacement, from the `(seed, resample)` stream.
pub fn resample_indices(n_draws: usize, n_sims: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, Domain::Resample, 0);
    (0..n_sims).map(|_| rng.random_range(0..n_draws)).collect()
}

/// Simulate `n_sims` trajectories from pooled posterior draws and compare a
/// test statistic against the observation.
pub fn posterior_predictive(
    samples: &PosteriorSamples,
    data: &Co2Series,
    volume_l: f64,
    n_sims: usize,
    statistic: TestStatistic,
    seed: u64,
) -> Result<PpcResult> {
    if n_sims < MIN_PPC_SIMS {
        return invalid(format!("n_sims must be >= {MIN_PPC_SIMS}, got {n_sims}"));
    }
    let draws: Vec<ParamDraw> = samples.pooled_draws().collect();
    if draws.is_empty() {
        return invalid("posterior predictive check needs a nonempty posterior");
    }
    let indices = resample_indices(draws.len(), n_sims, seed);
    posterior_predictive_with_indices(&draws, &indices, data, volume_l, statistic, seed)
}

/// Deterministic trajectory and stochastic spread at the posterior means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendComparison {
    pub t_seconds: Vec<f64>,
    pub ode_trajectory: Vec<f64>,
    pub sde_envelope: Envelope,
    /// Quantiles of SDE minus ODE per time.
    pub residual_q025: Vec<f64>,
    pub residual_q50: Vec<f64>,
    pub residual_q975: Vec<f64>,
    pub n_sims: usize,
}

impl TrendComparison {
    /// Mean half-width of the residual band over samples at or after `from_s`.
    pub fn mean_half_width_after(&self, from_s: f64) -> f64 {
        let idx: Vec<usize> = (0..self.t_seconds.len()).filter(|&i| self.t_seconds[i] >= from_s).collect();
        idx.iter()
            .map(|&i| 0.5 * (self.residual_q975[i] - self.residual_q025[i]))
            .sum::<f64>()
            / idx.len() as f64
    }
}

/// ODE and `n_sims` SDE trajectories at the posterior means, on the observed
/// grid from the observed initial value. The ODE is the noise-free
/// Euler-Maruyama path, so zero sigma collapses the envelope onto it exactly.
pub fn trend_compare(
    summary: &PosteriorSummary,
    data: &Co2Series,
    volume_l: f64,
    n_sims: usize,
    seed: u64,
) -> Result<TrendComparison> {
    check_volume(volume_l)?;
    if data.is_empty() {
        return Err(Error::Empty("observed series".into()));
    }
    if n_sims == 0 {
        return invalid("n_sims must be positive");
    }
    let means = summary.means();
    let params = params_for(&means, volume_l, max_dt_h(data))?;
    let times = data.times_s();
    let c0 = data.values()[0];
    let noiseless = params.with_sigma(0.0)?;
    let ode = simulate_sde_on_grid(c0, &noiseless, volume_l, times, &mut stream(seed, Domain::Predictive, u64::MAX));
    let runs = par_runs(n_sims, seed, Domain::Predictive, |_, rng| {
        simulate_sde_on_grid(c0, &params, volume_l, times, rng)
    });
    let residuals: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.iter().zip(&ode).map(|(s, o)| s - o).collect())
        .collect();
    let [r025, r50, r975] = band_quantiles(&residuals, times.len());
    Ok(TrendComparison {
        t_seconds: times.to_vec(),
        sde_envelope: Envelope::from_runs(times, &runs, data.values()),
        ode_trajectory: ode,
        residual_q025: r025,
        residual_q50: r50,
        residual_q975: r975,
        n_sims,
    })
}
