use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::room::AchRate;
use crate::series::Co2Series;

/// Ventilation rate from the log-linear decay of the excess concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    /// Negated fitted slope, 1/h.
    pub ach: f64,
    pub std_error: f64,
    /// Fitted `ln(C(0) - c_out)`.
    pub intercept: f64,
    pub n: usize,
    /// Set when the fitted slope is not negative, i.e. the data do not decay.
    pub non_decaying: bool,
}

impl DecayEstimate {
    /// The estimate as a rate; `None` when the data do not decay.
    pub fn rate(&self) -> Option<AchRate> {
        AchRate::new(self.ach).ok().filter(|_| !self.non_decaying)
    }
}

/// Least-squares slope of `ln(C(t) - c_out)` against time in hours, negated,
/// with its standard error.
pub fn decay_reference_ach(data: &Co2Series, c_out: f64) -> Result<DecayEstimate> {
    ensure_finite("c_out", &[c_out])?;
    if data.len() < 3 {
        return Err(Error::SeriesTooShort {
            needed: 3,
            got: data.len(),
        });
    }
    if let Some((i, c)) = data.values().iter().enumerate().find(|(_, &c)| c <= c_out) {
        return invalid(format!("sample {i} ({c} ppm) is not above c_out = {c_out} ppm"));
    }
    let t = data.times_h();
    let y: Vec<f64> = data.values().iter().map(|c| (c - c_out).ln()).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&y).map(|(x, y)| (x - tm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let sse: f64 = t.iter().zip(&y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let std_error = (sse / (n - 2.0) / sxx).sqrt();
    let non_decaying = slope >= 0.0;
    if non_decaying {
        log::warn!("decay fit slope {slope} is not negative");
    }
    Ok(DecayEstimate {
        ach: -slope,
        std_error,
        intercept,
        n: t.len(),
        non_decaying,
    })
}
