//! Forward models of single-zone room CO2.
//!
//! The drift is the well-mixed mass balance
//! `V dC/dt = (C_out - C) Q + E C_E`; the stochastic model adds a Wiener
//! term `sigma dW` and is stepped with Euler-Maruyama. Forward Euler is the
//! `z = 0` limit of the same step, so the ODE and SDE paths share code.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::rng::{stream, Domain, StreamRng};
use crate::room::{check_volume, ModelParams, C_E, SECONDS_PER_HOUR};
use crate::series::Co2Series;

/// Drift of the mass balance in ppm/h.
pub fn drift(c_r: f64, params: &ModelParams, volume_l: f64) -> Result<f64> {
    check_volume(volume_l)?;
    ensure_finite("concentration", &[c_r])?;
    Ok(drift_unchecked(c_r, params, volume_l))
}

#[inline]
pub(crate) fn drift_unchecked(c_r: f64, params: &ModelParams, volume_l: f64) -> f64 {
    ((params.c_out() - c_r) * params.q_vent() + params.e_gen() * C_E) / volume_l * SECONDS_PER_HOUR
}

/// Equilibrium concentration `c_out + e_gen c_e / q_vent`.
pub fn steady_state(params: &ModelParams, volume_l: f64) -> Result<f64> {
    check_volume(volume_l)?;
    if params.q_vent() == 0.0 {
        return Err(Error::NoVentilation);
    }
    Ok(params.c_out() + params.e_gen() * C_E / params.q_vent())
}

/// Analytic solution of the deterministic model at `t` hours.
///
/// Returns [`Error::NoVentilation`] for `q_vent = 0`; use
/// [`linear_growth`] in that case.
pub fn closed_form_ode(c0: f64, params: &ModelParams, volume_l: f64, t_h: f64) -> Result<f64> {
    ensure_finite("closed form inputs", &[c0, t_h])?;
    let c_ss = steady_state(params, volume_l)?;
    let lambda = params.lambda(volume_l);
    Ok(c_ss + (c0 - c_ss) * (-lambda * t_h).exp())
}

/// Unventilated room: `c0 + e_gen c_e t / V` (t in hours).
pub fn linear_growth(c0: f64, params: &ModelParams, volume_l: f64, t_h: f64) -> Result<f64> {
    check_volume(volume_l)?;
    ensure_finite("linear growth inputs", &[c0, t_h])?;
    Ok(c0 + params.e_gen() * C_E * SECONDS_PER_HOUR * t_h / volume_l)
}

/// One Euler-Maruyama step: `c + drift dt + sigma sqrt(dt) z`.
pub fn em_step(c_r: f64, params: &ModelParams, volume_l: f64, dt_h: f64, z: f64) -> Result<f64> {
    check_volume(volume_l)?;
    ensure_finite("em_step inputs", &[c_r, dt_h, z])?;
    if dt_h <= 0.0 {
        return invalid(format!("dt must be > 0, got {dt_h}"));
    }
    Ok(em_step_unchecked(c_r, params, volume_l, dt_h, z))
}

#[inline]
pub(crate) fn em_step_unchecked(c_r: f64, params: &ModelParams, volume_l: f64, dt_h: f64, z: f64) -> f64 {
    c_r + drift_unchecked(c_r, params, volume_l) * dt_h + params.sigma() * dt_h.sqrt() * z
}

/// Uniform simulation grid: step count and step length in hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub steps: usize,
    pub dt_h: f64,
}

impl Grid {
    pub fn new(horizon_h: f64, dt_h: f64) -> Result<Self> {
        ensure_finite("grid", &[horizon_h, dt_h])?;
        if dt_h <= 0.0 {
            return invalid(format!("dt must be > 0, got {dt_h}"));
        }
        if horizon_h < dt_h {
            return invalid(format!("horizon {horizon_h} h shorter than dt {dt_h} h"));
        }
        let ratio = horizon_h / dt_h;
        let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
            ratio.round()
        } else {
            ratio.floor()
        } as usize;
        Ok(Self { steps, dt_h })
    }

    pub fn times_s(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| k as f64 * self.dt_h * SECONDS_PER_HOUR)
            .collect()
    }
}

pub(crate) fn check_stability(params: &ModelParams, volume_l: f64, dt_h: f64) -> Result<()> {
    let lambda = params.lambda(volume_l);
    if lambda > 0.0 && dt_h > 2.0 / lambda {
        return Err(Error::UnstableStep {
            dt_h,
            limit_h: 2.0 / lambda,
        });
    }
    Ok(())
}

/// Forward-Euler trajectory from `c0` over `horizon_h` hours.
pub fn simulate_ode(c0: f64, params: &ModelParams, volume_l: f64, horizon_h: f64, dt_h: f64) -> Result<Co2Series> {
    check_volume(volume_l)?;
    ensure_finite("initial concentration", &[c0])?;
    let grid = Grid::new(horizon_h, dt_h)?;
    check_stability(params, volume_l, dt_h)?;
    let mut values = Vec::with_capacity(grid.steps + 1);
    let mut c = c0;
    values.push(c);
    for _ in 0..grid.steps {
        c += drift_unchecked(c, params, volume_l) * dt_h;
        values.push(c);
    }
    Ok(Co2Series::simulated(grid.times_s(), values))
}

/// Euler-Maruyama trajectory. The seed fully determines the output.
pub fn simulate_sde(
    c0: f64,
    params: &ModelParams,
    volume_l: f64,
    horizon_h: f64,
    dt_h: f64,
    seed: u64,
) -> Result<Co2Series> {
    let mut rng = stream(seed, Domain::Ensemble, 0);
    simulate_sde_with(c0, params, volume_l, horizon_h, dt_h, &mut rng)
}

pub fn simulate_sde_with<R: Rng + ?Sized>(
    c0: f64,
    params: &ModelParams,
    volume_l: f64,
    horizon_h: f64,
    dt_h: f64,
    rng: &mut R,
) -> Result<Co2Series> {
    check_volume(volume_l)?;
    ensure_finite("initial concentration", &[c0])?;
    let grid = Grid::new(horizon_h, dt_h)?;
    check_stability(params, volume_l, dt_h)?;
    let values = em_path(c0, params, volume_l, dt_h, grid.steps, rng);
    Ok(Co2Series::simulated(grid.times_s(), values))
}

pub(crate) fn em_path<R: Rng + ?Sized>(
    c0: f64,
    params: &ModelParams,
    volume_l: f64,
    dt_h: f64,
    steps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut values = Vec::with_capacity(steps + 1);
    let mut c = c0;
    values.push(c);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        c = em_step_unchecked(c, params, volume_l, dt_h, z);
        values.push(c);
    }
    values
}

/// Euler-Maruyama path on an arbitrary increasing time grid (seconds),
/// one step per interval, starting from `c0` at `times_s[0]`.
pub fn simulate_sde_on_grid<R: Rng + ?Sized>(
    c0: f64,
    params: &ModelParams,
    volume_l: f64,
    times_s: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut values = Vec::with_capacity(times_s.len());
    let mut c = c0;
    values.push(c);
    for w in times_s.windows(2) {
        let dt_h = (w[1] - w[0]) / SECONDS_PER_HOUR;
        let z: f64 = rng.sample(StandardNormal);
        c = em_step_unchecked(c, params, volume_l, dt_h, z);
        values.push(c);
    }
    values
}

/// Run `n` independent jobs, each with its own stream; output order is by index.
pub fn par_runs<T, F>(n: usize, seed: u64, domain: Domain, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, domain, i as u64);
            job(i, &mut rng)
        })
        .collect()
}

/// Many SDE trajectories on a shared uniform grid.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub times_s: Vec<f64>,
    pub runs: Vec<Vec<f64>>,
}

impl Ensemble {
    pub fn simulate(
        c0: f64,
        params: &ModelParams,
        volume_l: f64,
        horizon_h: f64,
        dt_h: f64,
        n_runs: usize,
        seed: u64,
    ) -> Result<Self> {
        check_volume(volume_l)?;
        let grid = Grid::new(horizon_h, dt_h)?;
        check_stability(params, volume_l, dt_h)?;
        if n_runs == 0 {
            return invalid("ensemble needs at least one run");
        }
        let runs = par_runs(n_runs, seed, Domain::Ensemble, |_, rng| {
            em_path(c0, params, volume_l, dt_h, grid.steps, rng)
        });
        Ok(Self {
            times_s: grid.times_s(),
            runs,
        })
    }

    /// True when any trajectory went below zero at any step.
    pub fn went_negative(&self) -> bool {
        self.runs.iter().any(|r| r.iter().any(|c| *c < 0.0))
    }

    /// Per-time ensemble mean and standard error of the mean.
    pub fn mean_and_se(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.runs.len() as f64;
        let len = self.times_s.len();
        let mut mean = vec![0.0; len];
        let mut m2 = vec![0.0; len];
        for (k, run) in self.runs.iter().enumerate() {
            for (j, &c) in run.iter().enumerate() {
                let d = c - mean[j];
                mean[j] += d / (k + 1) as f64;
                m2[j] += d * (c - mean[j]);
            }
        }
        let se = m2
            .iter()
            .map(|m| if n > 1.0 { (m / (n - 1.0) / n).sqrt() } else { 0.0 })
            .collect();
        (mean, se)
    }

    /// Per-time quantiles across runs (linear interpolation).
    pub fn quantiles(&self, probs: &[f64]) -> Vec<Vec<f64>> {
        let mut column = vec![0.0; self.runs.len()];
        (0..self.times_s.len())
            .map(|j| {
                for (slot, run) in column.iter_mut().zip(&self.runs) {
                    *slot = run[j];
                }
                column.sort_by(f64::total_cmp);
                probs.iter().map(|&p| quantile_sorted(&column, p)).collect()
            })
            .collect()
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room::RoomGeometry;
    use approx::assert_relative_eq;

    const V: f64 = 19320.0;

    fn test4(c_out: f64) -> ModelParams {
        ModelParams::from_ach(1.9, V, c_out, 0.013, 0.0).unwrap()
    }

    #[test]
    fn drift_examples() {
        let eq = ModelParams::new(10.0, 400.0, 0.0, 0.0).unwrap();
        assert_eq!(drift(400.0, &eq, V).unwrap(), 0.0);

        let closed = ModelParams::new(0.0, 400.0, 0.013, 0.0).unwrap();
        // 0.013 * 1e6 * 3600 / 19320
        assert_relative_eq!(drift(400.0, &closed, V).unwrap(), 2422.360248447205, max_relative = 1e-12);

        let decay = ModelParams::new(10.195, 400.0, 0.0, 0.0).unwrap();
        // (400 - 1000) * 10.195 * 3600 / 19320
        assert_relative_eq!(drift(1000.0, &decay, V).unwrap(), -1139.8136645962734, max_relative = 1e-12);
        assert!((drift(1000.0, &decay, V).unwrap() + 1139.6).abs() < 0.5);
    }

    #[test]
    fn drift_rejects_bad_input() {
        let p = test4(400.0);
        assert!(drift(f64::NAN, &p, V).is_err());
        assert!(drift(400.0, &p, 0.0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let p = ModelParams::new(10.195, 400.0, 0.013, 0.0).unwrap();
        assert_eq!(closed_form_ode(400.0, &p, V, 0.0).unwrap(), 400.0);
        let c_ss = steady_state(&p, V).unwrap();
        let lambda = p.lambda(V);
        let late = closed_form_ode(400.0, &p, V, 21.0 / lambda).unwrap();
        assert!((late - c_ss).abs() / c_ss < 1e-6);
        // 400 + 1275.1 (1 - exp(-lambda)) with lambda = 10.195*3600/19320 ~ 1.8997
        let expected = 400.0 + 0.013e6 / 10.195 * (1.0 - (-10.195 * 3600.0 / V).exp());
        assert_relative_eq!(closed_form_ode(400.0, &p, V, 1.0).unwrap(), expected, max_relative = 1e-12);
        assert!((expected - 1484.36).abs() < 0.01);
    }

    #[test]
    fn zero_ventilation_is_an_error_with_linear_branch() {
        let p = ModelParams::new(0.0, 400.0, 0.013, 0.0).unwrap();
        assert!(matches!(steady_state(&p, V), Err(Error::NoVentilation)));
        assert!(matches!(closed_form_ode(400.0, &p, V, 1.0), Err(Error::NoVentilation)));
        let c = linear_growth(400.0, &p, V, 1.0).unwrap();
        assert_relative_eq!(c, 400.0 + 2422.360248447205, max_relative = 1e-12);
        // forward Euler is exact on a linear trajectory
        let sim = simulate_ode(400.0, &p, V, 1.0, 1.0 / 180.0).unwrap();
        assert_relative_eq!(*sim.values().last().unwrap(), c, max_relative = 1e-10);
    }

    #[test]
    fn steady_state_examples() {
        let p = ModelParams::new(10.0, 420.0, 0.0, 0.0).unwrap();
        assert_eq!(steady_state(&p, V).unwrap(), 420.0);
        let p = test4(420.0);
        let ss = steady_state(&p, V).unwrap();
        assert!((ss - 1695.1).abs() < 0.5, "{ss}");
        let p = ModelParams::new(7.4 * 18.0, 420.0, 18.0 * 0.0047, 0.0).unwrap();
        let ss = steady_state(&p, V).unwrap();
        assert!((ss - 1055.1).abs() < 0.5, "{ss}");
    }

    #[test]
    fn em_step_examples() {
        let p = ModelParams::new(10.195, 400.0, 0.0, 72.7).unwrap();
        let dt = 1.0 / 180.0;
        let det = 1000.0 + drift(1000.0, &p, V).unwrap() * dt;
        assert_eq!(em_step(1000.0, &p, V, dt, 0.0).unwrap(), det);
        let quiet = p.with_sigma(0.0).unwrap();
        assert_eq!(em_step(1000.0, &quiet, V, dt, 3.7).unwrap(), det);
        let c = em_step(1000.0, &p, V, dt, 1.0).unwrap();
        assert!((c - 999.09).abs() < 0.02, "{c}");
        assert!(em_step(1000.0, &p, V, 0.0, 0.0).is_err());
    }

    #[test]
    fn ode_constant_at_equilibrium() {
        let p = ModelParams::new(10.0, 420.0, 0.0, 5.0).unwrap();
        let s = simulate_ode(420.0, &p, V, 1.0, 1.0 / 180.0).unwrap();
        assert!(s.values().iter().all(|c| *c == 420.0));
        assert_eq!(s.len(), 181);
    }

    #[test]
    fn ode_matches_closed_form_test4_analog() {
        let p = test4(420.0);
        let dt = 1.0 / 3600.0;
        let s = simulate_ode(420.0, &p, V, 3.0, dt).unwrap();
        let exact = closed_form_ode(420.0, &p, V, 3.0).unwrap();
        let last = *s.values().last().unwrap();
        assert!((last - exact).abs() / exact < 0.005);
    }

    #[test]
    fn ode_decay_log_slope() {
        let p = ModelParams::from_ach(1.9, V, 420.0, 0.0, 0.0).unwrap();
        let s = simulate_ode(2000.0, &p, V, 3.0, 1.0 / 3600.0).unwrap();
        let x = s.times_h();
        let y: Vec<f64> = s.values().iter().map(|c| ((c - 420.0) / 1580.0).ln()).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope + 1.9).abs() / 1.9 < 0.001, "{slope}");
    }

    #[test]
    fn ode_stability_guard() {
        let p = test4(420.0);
        assert!(matches!(
            simulate_ode(420.0, &p, V, 10.0, 1.2),
            Err(Error::UnstableStep { .. })
        ));
        assert!(simulate_ode(420.0, &p, V, 0.5, 1.0).is_err());
    }

    #[test]
    fn ode_monotone_toward_steady_state() {
        for (c0, q) in [(420.0, 1.9), (3000.0, 0.5), (1000.0, 4.0)] {
            let p = ModelParams::from_ach(q, V, 420.0, 0.013, 0.0).unwrap();
            let ss = steady_state(&p, V).unwrap();
            let s = simulate_ode(c0, &p, V, 6.0, 1.0 / 180.0).unwrap();
            let sign = (ss - c0).signum();
            for w in s.values().windows(2) {
                assert!((w[1] - w[0]) * sign >= 0.0);
                assert!((ss - w[1]) * sign >= 0.0);
            }
        }
    }

    #[test]
    fn sde_zero_sigma_equals_ode_bitwise() {
        let p = test4(420.0);
        let ode = simulate_ode(420.0, &p, V, 3.0, 1.0 / 180.0).unwrap();
        let sde = simulate_sde(420.0, &p, V, 3.0, 1.0 / 180.0, 99).unwrap();
        assert_eq!(ode, sde);
    }

    #[test]
    fn sde_same_seed_same_bytes() {
        let p = test4(420.0).with_sigma(72.7).unwrap();
        let a = simulate_sde(420.0, &p, V, 3.0, 1.0 / 180.0, 5).unwrap();
        let b = simulate_sde(420.0, &p, V, 3.0, 1.0 / 180.0, 5).unwrap();
        let c = simulate_sde(420.0, &p, V, 3.0, 1.0 / 180.0, 6).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_ne!(a, c);
    }

    #[test]
    fn quantile_sorted_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
    }

    #[test]
    fn chamber_geometry_volume_used_in_examples() {
        assert_relative_eq!(RoomGeometry::chamber().volume_l(), V, max_relative = 1e-12);
    }
}
