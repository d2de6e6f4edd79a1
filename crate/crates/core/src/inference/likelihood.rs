//! Euler-Maruyama transition likelihood.
//!
//! Each consecutive observation pair contributes
//! `log N(dC_i; drift(C_i) dt_i, sigma^2 dt_i)`, conditioning on the first
//! observation. With the ventilation expressed in ACH the drift is
//! `lambda (c_out - C) + k e` with `k = C_E * 3600 / V`, so the residual is
//! linear in `(lambda, a = lambda c_out + k e)`. [`EmStats`] exploits that to
//! evaluate the likelihood and its gradient in O(1) after one pass.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::drift_unchecked;
use crate::room::{check_volume, ModelParams, C_E, SECONDS_PER_HOUR};
use crate::series::Co2Series;

use super::prior::{ParamDraw, PriorSet};

/// Physical parameters for a draw; `None` if the draw is outside the model domain.
pub fn draw_to_params(draw: &ParamDraw, volume_l: f64) -> Option<ModelParams> {
    ModelParams::from_ach(draw.q_ach, volume_l, draw.c_out_ppm, draw.e_lps, draw.sigma).ok()
}

fn check_data(data: &Co2Series) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: data.len(),
        });
    }
    Ok(())
}

/// Direct pairwise evaluation using the model drift.
pub fn log_likelihood_em(draw: &ParamDraw, data: &Co2Series, volume_l: f64) -> Result<f64> {
    check_volume(volume_l)?;
    check_data(data)?;
    let Some(params) = draw_to_params(draw, volume_l) else {
        return Ok(f64::NEG_INFINITY);
    };
    let t = data.times_s();
    let c = data.values();
    let sigma = params.sigma();

    if sigma == 0.0 {
        let all_zero = (1..c.len()).all(|i| {
            let dt = (t[i] - t[i - 1]) / SECONDS_PER_HOUR;
            c[i] - c[i - 1] - drift_unchecked(c[i - 1], &params, volume_l) * dt == 0.0
        });
        return if all_zero {
            Err(Error::DegenerateData)
        } else {
            Ok(f64::NEG_INFINITY)
        };
    }

    let var_rate = sigma * sigma;
    let mut ll = 0.0;
    for i in 1..c.len() {
        let dt = (t[i] - t[i - 1]) / SECONDS_PER_HOUR;
        let r = c[i] - c[i - 1] - drift_unchecked(c[i - 1], &params, volume_l) * dt;
        let var = var_rate * dt;
        ll += -0.5 * (2.0 * PI * var).ln() - 0.5 * r * r / var;
    }
    Ok(ll)
}

/// Unnormalized log posterior: `log_prior + log_likelihood_em`.
pub fn log_posterior(draw: &ParamDraw, priors: &PriorSet, data: &Co2Series, volume_l: f64) -> Result<f64> {
    let lp = super::prior::log_prior(draw, priors);
    if lp == f64::NEG_INFINITY {
        check_volume(volume_l)?;
        check_data(data)?;
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lp + log_likelihood_em(draw, data, volume_l)?)
}

/// Sufficient statistics of a series for the Euler-Maruyama likelihood.
///
/// Concentrations are centered at their mean `m` so the quadratic form is
/// well conditioned: with `a' = a - lambda m` and `x_i = C_i - m`,
/// `sum r^2/dt = S_dd - 2 a' S_d + 2 lambda S_dx + a'^2 S_t - 2 a' lambda S_x + lambda^2 S_xx`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmStats {
    n: f64,
    half_sum_log_2pi_dt: f64,
    center: f64,
    s_dd: f64,
    s_d: f64,
    s_dx: f64,
    s_t: f64,
    s_x: f64,
    s_xx: f64,
    /// ppm/h produced by 1 L/s of emission.
    k: f64,
}

/// Log-likelihood with partial derivatives in constrained coordinates
/// (q_ach, c_out, e, sigma).
#[derive(Debug, Clone, Copy)]
pub struct LogLikGrad {
    pub value: f64,
    pub grad: [f64; 4],
}

impl EmStats {
    pub fn new(data: &Co2Series, volume_l: f64) -> Result<Self> {
        check_volume(volume_l)?;
        check_data(data)?;
        let t = data.times_s();
        let c = data.values();
        let n_pairs = c.len() - 1;
        let center = c[..n_pairs].iter().sum::<f64>() / n_pairs as f64;
        let mut s = Self {
            n: n_pairs as f64,
            half_sum_log_2pi_dt: 0.0,
            center,
            s_dd: 0.0,
            s_d: 0.0,
            s_dx: 0.0,
            s_t: 0.0,
            s_x: 0.0,
            s_xx: 0.0,
            k: C_E * SECONDS_PER_HOUR / volume_l,
        };
        for i in 1..c.len() {
            let dt = (t[i] - t[i - 1]) / SECONDS_PER_HOUR;
            let d = c[i] - c[i - 1];
            let x = c[i - 1] - center;
            s.half_sum_log_2pi_dt += 0.5 * (2.0 * PI * dt).ln();
            s.s_dd += d * d / dt;
            s.s_d += d;
            s.s_dx += d * x;
            s.s_t += dt;
            s.s_x += x * dt;
            s.s_xx += x * x * dt;
        }
        Ok(s)
    }

    pub fn pairs(&self) -> usize {
        self.n as usize
    }

    /// `sum r_i^2 / dt_i`, plus `sum r_i` and `sum r_i x_i`.
    fn residual_sums(&self, lambda: f64, a_c: f64) -> (f64, f64, f64) {
        let ssq = self.s_dd - 2.0 * a_c * self.s_d + 2.0 * lambda * self.s_dx + a_c * a_c * self.s_t
            - 2.0 * a_c * lambda * self.s_x
            + lambda * lambda * self.s_xx;
        let sum_r = self.s_d - a_c * self.s_t + lambda * self.s_x;
        let sum_rx = self.s_dx - a_c * self.s_x + lambda * self.s_xx;
        (ssq.max(0.0), sum_r, sum_rx)
    }

    pub fn log_likelihood(&self, draw: &ParamDraw) -> f64 {
        self.log_likelihood_grad(draw).value
    }

    pub fn log_likelihood_grad(&self, draw: &ParamDraw) -> LogLikGrad {
        let ParamDraw {
            q_ach: lambda,
            c_out_ppm: c_out,
            e_lps: e,
            sigma,
        } = *draw;
        if !(sigma > 0.0) {
            return LogLikGrad {
                value: f64::NEG_INFINITY,
                grad: [0.0; 4],
            };
        }
        let a_c = lambda * (c_out - self.center) + self.k * e;
        let (ssq, sum_r, sum_rx) = self.residual_sums(lambda, a_c);
        let inv_s2 = 1.0 / (sigma * sigma);
        let value = -self.n * sigma.ln() - self.half_sum_log_2pi_dt - 0.5 * ssq * inv_s2;
        // d(ssq)/d(a') = -2 sum r, d(ssq)/d(lambda)|a' = 2 sum r x
        // a' depends on lambda through (c_out - m), on c_out through lambda, on e through k
        let d_ll_da = sum_r * inv_s2;
        let d_ll_dlambda = -sum_rx * inv_s2 + d_ll_da * (c_out - self.center);
        let d_ll_dcout = d_ll_da * lambda;
        let d_ll_de = d_ll_da * self.k;
        let d_ll_dsigma = -self.n / sigma + ssq / (sigma * sigma * sigma);
        LogLikGrad {
            value,
            grad: [d_ll_dlambda, d_ll_dcout, d_ll_de, d_ll_dsigma],
        }
    }
}
