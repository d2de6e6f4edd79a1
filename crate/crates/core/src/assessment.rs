//! Ventilation verdicts from posterior estimates: occupancy, equivalent clean
//! airflow per person (ECAi) under air-cleaning scenarios, and steady-state
//! CO2 thresholds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};
use crate::inference::PosteriorSummary;
use crate::ingest::Season;
use crate::model::{par_runs, steady_state};
use crate::rng::{derive_seed, Domain};
use crate::room::{check_volume, AchRate, ModelParams};

/// Liters per second in one cubic foot per minute.
pub const CFM_TO_LPS: f64 = 0.471947;
pub const THRESHOLD_CSV_HEADER: &str = "cadr_cfm,c_limit,c_target,c_ideal";
pub const DEFAULT_ENSEMBLE_RUNS: usize = 2000;
pub const MIN_ENSEMBLE_RUNS: usize = 100;
/// Steady-state runs last this many time constants.
pub const STEADY_STATE_TIME_CONSTANTS: f64 = 8.0;
/// Fraction of each run, at its end, averaged into the steady-state value.
pub const STEADY_STATE_TAIL: f64 = 0.2;
const STEPS_PER_TIME_CONSTANT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub label: String,
    pub cadr_cfm: f64,
}

/// A set of air-cleaning devices added to the room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationScenario {
    pub name: String,
    #[serde(default)]
    pub devices: Vec<Device>,
}

impl MitigationScenario {
    pub fn new(name: impl Into<String>, devices: Vec<Device>) -> Result<Self> {
        let s = Self {
            name: name.into(),
            devices,
        };
        s.validate()?;
        Ok(s)
    }

    /// Outdoor ventilation only.
    pub fn none() -> Self {
        Self {
            name: "none".into(),
            devices: Vec::new(),
        }
    }

    /// One device of the given CADR.
    pub fn single(label: impl Into<String>, cadr_cfm: f64) -> Result<Self> {
        let label = label.into();
        Self::new(label.clone(), vec![Device { label, cadr_cfm }])
    }

    /// In-room UV (200 cfm), air cleaner (400 cfm) and their combinations up to 1000 cfm.
    pub fn standard_set() -> Vec<Self> {
        let uv = || Device {
            label: "in-room UV".into(),
            cadr_cfm: 200.0,
        };
        let cleaner = || Device {
            label: "in-room air cleaner".into(),
            cadr_cfm: 400.0,
        };
        vec![
            Self {
                name: "uv_200".into(),
                devices: vec![uv()],
            },
            Self {
                name: "cleaner_400".into(),
                devices: vec![cleaner()],
            },
            Self {
                name: "uv_cleaner_600".into(),
                devices: vec![uv(), cleaner()],
            },
            Self {
                name: "2x_cleaner_800".into(),
                devices: vec![cleaner(), cleaner()],
            },
            Self {
                name: "uv_2x_cleaner_1000".into(),
                devices: vec![uv(), cleaner(), cleaner()],
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.devices {
            if !(d.cadr_cfm.is_finite() && d.cadr_cfm >= 0.0) {
                return invalid(format!("device '{}': cadr_cfm must be finite and >= 0, got {}", d.label, d.cadr_cfm));
            }
        }
        Ok(())
    }

    pub fn cadr_cfm(&self) -> f64 {
        self.devices.iter().map(|d| d.cadr_cfm).sum()
    }

    pub fn cadr_lps(&self) -> f64 {
        self.cadr_cfm() * CFM_TO_LPS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcaPolicy {
    pub ecai_target_lps_per_person: f64,
    pub min_outdoor_lps_per_person: f64,
    pub per_person_gen_lps: f64,
}

impl Default for EcaPolicy {
    fn default() -> Self {
        Self {
            ecai_target_lps_per_person: 20.0,
            min_outdoor_lps_per_person: 7.4,
            per_person_gen_lps: 0.0047,
        }
    }
}

impl EcaPolicy {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.ecai_target_lps_per_person,
            self.min_outdoor_lps_per_person,
            self.per_person_gen_lps,
        ];
        if !v.iter().all(|x| x.is_finite() && *x > 0.0) {
            return invalid(format!("policy values must be finite and > 0, got {v:?}"));
        }
        if self.min_outdoor_lps_per_person > self.ecai_target_lps_per_person {
            return invalid("min_outdoor_lps_per_person must not exceed ecai_target_lps_per_person");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ThresholdProvenance {
    Ensemble { mean: f64, sd: f64, n_runs: usize },
    EmpiricalEquation,
}

/// `c_limit = mean + sd`, `c_target = mean`, `c_ideal = mean - sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTriple {
    pub c_limit: f64,
    pub c_target: f64,
    pub c_ideal: f64,
    pub provenance: ThresholdProvenance,
}

/// Occupants implied by a total emission rate, rounded half away from zero.
pub fn estimate_occupancy(e_gen: f64, policy: &EcaPolicy) -> Result<u32> {
    ensure_finite("e_gen", &[e_gen])?;
    if e_gen < 0.0 {
        return invalid(format!("emission rate must be >= 0, got {e_gen}"));
    }
    policy.validate()?;
    Ok((e_gen / policy.per_person_gen_lps).round() as u32)
}

/// Outdoor air plus device CADR per occupant, L/s/person.
pub fn compute_ecai(q: AchRate, volume_l: f64, occupancy: u32, scenario: &MitigationScenario) -> Result<f64> {
    check_volume(volume_l)?;
    scenario.validate()?;
    if occupancy == 0 {
        return invalid("ECAi needs at least one occupant");
    }
    Ok((q.to_lps(volume_l) + scenario.cadr_lps()) / occupancy as f64)
}

/// Outdoor airflow (L/s) that meets the ECAi target with the scenario's
/// devices, never below the per-person minimum.
pub fn required_outdoor_q(occupancy: u32, scenario: &MitigationScenario, policy: &EcaPolicy) -> Result<f64> {
    policy.validate()?;
    scenario.validate()?;
    if occupancy == 0 {
        return invalid("required ventilation needs at least one occupant");
    }
    let n = occupancy as f64;
    Ok((policy.ecai_target_lps_per_person * n - scenario.cadr_lps()).max(policy.min_outdoor_lps_per_person * n))
}

/// Steady-state thresholds from `n_runs` SDE trajectories at the required
/// outdoor airflow. Each run starts at the analytic steady state, lasts
/// 8 time constants, and contributes the mean of its final 20%.
#[allow(clippy::too_many_arguments)]
pub fn threshold_ensemble(
    e_gen: f64,
    c_out: f64,
    sigma: f64,
    volume_l: f64,
    occupancy: u32,
    scenario: &MitigationScenario,
    policy: &EcaPolicy,
    n_runs: usize,
    seed: u64,
) -> Result<ThresholdTriple> {
    if n_runs < MIN_ENSEMBLE_RUNS {
        return invalid(format!("n_runs must be >= {MIN_ENSEMBLE_RUNS}, got {n_runs}"));
    }
    let q = required_outdoor_q(occupancy, scenario, policy)?;
    let params = ModelParams::new(q, c_out, e_gen, sigma)?;
    let c_ss = steady_state(&params, volume_l)?;
    let lambda = params.lambda(volume_l);
    let steps = (STEADY_STATE_TIME_CONSTANTS * STEPS_PER_TIME_CONSTANT) as usize;
    let dt_h = STEADY_STATE_TIME_CONSTANTS / lambda / steps as f64;
    let tail = ((steps + 1) as f64 * STEADY_STATE_TAIL).ceil() as usize;

    let values = par_runs(n_runs, seed, Domain::Ensemble, |_, rng| {
        let path = crate::model::em_path(c_ss, &params, volume_l, dt_h, steps, rng);
        path[path.len() - tail..].iter().sum::<f64>() / tail as f64
    });
    let n = values.len() as f64;
    // offset by the first value so identical runs give that value exactly
    let mean = values[0] + values.iter().map(|v| v - values[0]).sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(ThresholdTriple {
        c_limit: mean + sd,
        c_target: mean,
        c_ideal: mean - sd,
        provenance: ThresholdProvenance::Ensemble { mean, sd, n_runs },
    })
}

/// Averaged empirical threshold equations: linear in CADR up to 600 cfm,
/// constant beyond.
pub fn threshold_empirical(cadr_cfm: f64) -> Result<ThresholdTriple> {
    ensure_finite("cadr_cfm", &[cadr_cfm])?;
    if cadr_cfm < 0.0 {
        return invalid(format!("cadr_cfm must be >= 0, got {cadr_cfm}"));
    }
    let (c_limit, c_target, c_ideal) = if cadr_cfm <= 600.0 {
        (0.8 * cadr_cfm + 829.1, 0.7 * cadr_cfm + 684.6, 0.5 * cadr_cfm + 540.1)
    } else {
        (1309.1, 1104.6, 840.1)
    };
    Ok(ThresholdTriple {
        c_limit,
        c_target,
        c_ideal,
        provenance: ThresholdProvenance::EmpiricalEquation,
    })
}

/// Line on points up to the breakpoint, constant after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest CADR in the linear segment.
    pub breakpoint: f64,
    pub plateau: f64,
    pub sse: f64,
}

impl PiecewiseFit {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.breakpoint {
            self.slope * x + self.intercept
        } else {
            self.plateau
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurveFit {
    pub c_limit: PiecewiseFit,
    pub c_target: PiecewiseFit,
    pub c_ideal: PiecewiseFit,
}

fn fit_split(xs: &[f64], ys: &[f64], split: usize) -> PiecewiseFit {
    let (px, py) = (&xs[..split], &ys[..split]);
    let n = px.len() as f64;
    let xm = px.iter().sum::<f64>() / n;
    let ym = py.iter().sum::<f64>() / n;
    let sxx: f64 = px.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = px.iter().zip(py).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let post = &ys[split..];
    let plateau = post.iter().sum::<f64>() / post.len() as f64;
    let sse = px.iter().zip(py).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>()
        + post.iter().map(|y| (y - plateau).powi(2)).sum::<f64>();
    PiecewiseFit {
        slope,
        intercept,
        breakpoint: px[px.len() - 1],
        plateau,
        sse,
    }
}

fn fit_one(xs: &[f64], ys: &[f64], breakpoint: Option<f64>) -> Result<PiecewiseFit> {
    match breakpoint {
        Some(bp) => {
            let split = xs.iter().take_while(|&&x| x <= bp).count();
            if split < 2 {
                return invalid(format!("fewer than 2 points at or below breakpoint {bp} cfm; cannot fit the linear segment"));
            }
            if split == xs.len() {
                return invalid(format!("no points above breakpoint {bp} cfm; cannot fit the plateau"));
            }
            Ok(fit_split(xs, ys, split))
        }
        None => {
            let fits: Vec<PiecewiseFit> = (2..xs.len()).map(|s| fit_split(xs, ys, s)).collect();
            let min = fits.iter().map(|f| f.sse).fold(f64::INFINITY, f64::min);
            let ym = ys.iter().sum::<f64>() / ys.len() as f64;
            let scale = ys.iter().map(|y| (y - ym).powi(2)).sum::<f64>().max(1.0);
            let tol = 1e-9 * scale;
            // ties go to the longer linear segment
            Ok(*fits.iter().rev().find(|f| f.sse <= min + tol).expect("at least one split"))
        }
    }
}

/// Piecewise fit (line, then plateau) of each threshold against CADR.
/// With no breakpoint given, the split with the least total squared error
/// is chosen.
pub fn fit_threshold_curve(points: &[(f64, ThresholdTriple)], breakpoint: Option<f64>) -> Result<ThresholdCurveFit> {
    if points.len() < 4 {
        return invalid(format!("threshold curve fit needs >= 4 CADR points, got {}", points.len()));
    }
    let mut pts: Vec<&(f64, ThresholdTriple)> = points.iter().collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return invalid("duplicate CADR values in threshold curve fit");
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    ensure_finite("cadr_cfm", &xs)?;
    let col = |f: fn(&ThresholdTriple) -> f64| pts.iter().map(|p| f(&p.1)).collect::<Vec<_>>();
    Ok(ThresholdCurveFit {
        c_limit: fit_one(&xs, &col(|t| t.c_limit), breakpoint)?,
        c_target: fit_one(&xs, &col(|t| t.c_target), breakpoint)?,
        c_ideal: fit_one(&xs, &col(|t| t.c_ideal), breakpoint)?,
    })
}

/// `c_target` per occupancy with total emission `N * e_per_person`.
#[allow(clippy::too_many_arguments)]
pub fn design_target_curve(
    occupancies: &[u32],
    cadr_cfm: f64,
    e_per_person: f64,
    policy: &EcaPolicy,
    volume_l: f64,
    c_out: f64,
    sigma: f64,
    n_runs: usize,
    seed: u64,
) -> Result<Vec<(u32, f64)>> {
    if occupancies.is_empty() {
        return invalid("design curve needs at least one occupancy");
    }
    let scenario = MitigationScenario::single("design", cadr_cfm)?;
    occupancies
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let t = threshold_ensemble(
                n as f64 * e_per_person,
                c_out,
                sigma,
                volume_l,
                n,
                &scenario,
                policy,
                n_runs,
                derive_seed(seed, i as u64),
            )?;
            Ok((n, t.c_target))
        })
        .collect()
}

pub fn write_threshold_csv<W: Write>(rows: &[(f64, ThresholdTriple)], mut w: W) -> Result<()> {
    writeln!(w, "{THRESHOLD_CSV_HEADER}")?;
    for (cadr, t) in rows {
        writeln!(w, "{},{},{},{}", cadr, t.c_limit, t.c_target, t.c_ideal)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub cadr_cfm: f64,
    pub ecai: f64,
    pub complies: bool,
    pub thresholds: ThresholdTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayAssessment {
    pub day: String,
    pub season: Option<Season>,
    pub q_ach: f64,
    pub e_lps: f64,
    pub c_out_ppm: f64,
    pub sigma: f64,
    pub occupancy: u32,
    /// `None` when no occupant is inferred.
    pub ecai_provided: Option<f64>,
    pub complies_ecai: bool,
    /// Outdoor-air-only thresholds at the ECAi target.
    pub thresholds: Option<ThresholdTriple>,
    /// Observed peak of the occupied window.
    pub observed_peak_ppm: Option<f64>,
    pub complies_threshold: Option<bool>,
    pub scenarios: Vec<ScenarioResult>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonSummary {
    pub season: Season,
    pub n_days: usize,
    pub mean_q_ach: f64,
    pub mean_ecai: Option<f64>,
    pub compliant_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub volume_l: f64,
    pub policy: EcaPolicy,
    pub days: Vec<DayAssessment>,
    pub seasons: Vec<SeasonSummary>,
}

/// Inputs for assessing one occupied window.
#[derive(Debug, Clone)]
pub struct DayInput<'a> {
    pub day: String,
    pub season: Option<Season>,
    pub summary: &'a PosteriorSummary,
    pub observed_peak_ppm: Option<f64>,
    pub converged: bool,
}

/// Occupancy, ECAi per scenario, thresholds and compliance for one day.
/// Thresholds use the day's own posterior means for C_out, E and sigma.
pub fn assess_day(
    input: &DayInput<'_>,
    volume_l: f64,
    policy: &EcaPolicy,
    scenarios: &[MitigationScenario],
    n_runs: usize,
    seed: u64,
) -> Result<DayAssessment> {
    let m = input.summary.means();
    let occupancy = estimate_occupancy(m.e_lps, policy)?;
    let q = AchRate::new(m.q_ach)?;
    let mut out = DayAssessment {
        day: input.day.clone(),
        season: input.season,
        q_ach: m.q_ach,
        e_lps: m.e_lps,
        c_out_ppm: m.c_out_ppm,
        sigma: m.sigma,
        occupancy,
        ecai_provided: None,
        complies_ecai: false,
        thresholds: None,
        observed_peak_ppm: input.observed_peak_ppm,
        complies_threshold: None,
        scenarios: Vec::new(),
        converged: input.converged,
    };
    if occupancy == 0 {
        return Ok(out);
    }
    let ecai = compute_ecai(q, volume_l, occupancy, &MitigationScenario::none())?;
    out.ecai_provided = Some(ecai);
    out.complies_ecai = ecai >= policy.ecai_target_lps_per_person;
    let ensemble = |s: &MitigationScenario, k: u64| {
        threshold_ensemble(m.e_lps, m.c_out_ppm, m.sigma, volume_l, occupancy, s, policy, n_runs, derive_seed(seed, k))
    };
    let base = ensemble(&MitigationScenario::none(), 0)?;
    out.complies_threshold = input.observed_peak_ppm.map(|p| p <= base.c_target);
    out.thresholds = Some(base);
    for (k, s) in scenarios.iter().enumerate() {
        let ecai = compute_ecai(q, volume_l, occupancy, s)?;
        out.scenarios.push(ScenarioResult {
            name: s.name.clone(),
            cadr_cfm: s.cadr_cfm(),
            ecai,
            complies: ecai >= policy.ecai_target_lps_per_person,
            thresholds: ensemble(s, k as u64 + 1)?,
        });
    }
    Ok(out)
}

/// Per-season aggregates over assessed days, in season order.
pub fn season_summaries(days: &[DayAssessment]) -> Vec<SeasonSummary> {
    let mut out = Vec::new();
    for season in Season::ALL {
        let ds: Vec<&DayAssessment> = days.iter().filter(|d| d.season == Some(season)).collect();
        if ds.is_empty() {
            continue;
        }
        let ecais: Vec<f64> = ds.iter().filter_map(|d| d.ecai_provided).collect();
        out.push(SeasonSummary {
            season,
            n_days: ds.len(),
            mean_q_ach: ds.iter().map(|d| d.q_ach).sum::<f64>() / ds.len() as f64,
            mean_ecai: (!ecais.is_empty()).then(|| ecais.iter().sum::<f64>() / ecais.len() as f64),
            compliant_days: ds.iter().filter(|d| d.complies_ecai).count(),
        });
    }
    out
}
