//! Timestamped CO2 observations.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::room::SECONDS_PER_HOUR;

/// CSV header of the canonical series format.
pub const SERIES_CSV_HEADER: &str = "t_seconds,co2_ppm";

/// Ordered CO2 samples. Times are seconds (since epoch or since series start).
///
/// Observed series are built with [`Co2Series::new`], which enforces strictly
/// increasing times and non-negative values. Simulated trajectories may dip
/// below zero under large noise draws and are not clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Co2Series {
    t_seconds: Vec<f64>,
    co2_ppm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interval_hint_s: Option<f64>,
}

impl Co2Series {
    pub fn new(t_seconds: Vec<f64>, co2_ppm: Vec<f64>) -> Result<Self> {
        validate_times(&t_seconds, &co2_ppm)?;
        if let Some(v) = co2_ppm.iter().find(|v| **v < 0.0) {
            return invalid(format!("negative CO2 value {v}"));
        }
        Ok(Self {
            t_seconds,
            co2_ppm,
            interval_hint_s: None,
        })
    }

    /// Simulator output: times are checked, values may be negative.
    pub(crate) fn simulated(t_seconds: Vec<f64>, co2_ppm: Vec<f64>) -> Self {
        debug_assert!(validate_times(&t_seconds, &co2_ppm).is_ok());
        Self {
            t_seconds,
            co2_ppm,
            interval_hint_s: None,
        }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (t, c) = pairs.iter().copied().unzip();
        Self::new(t, c)
    }

    pub fn with_interval_hint(mut self, seconds: f64) -> Self {
        self.interval_hint_s = Some(seconds);
        self
    }

    pub fn interval_hint_s(&self) -> Option<f64> {
        self.interval_hint_s
    }

    pub fn len(&self) -> usize {
        self.t_seconds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_seconds.is_empty()
    }

    pub fn times_s(&self) -> &[f64] {
        &self.t_seconds
    }

    pub fn values(&self) -> &[f64] {
        &self.co2_ppm
    }

    pub fn times_h(&self) -> Vec<f64> {
        self.t_seconds.iter().map(|t| t / SECONDS_PER_HOUR).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t_seconds.iter().copied().zip(self.co2_ppm.iter().copied())
    }

    pub fn min_value(&self) -> f64 {
        self.co2_ppm.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_value(&self) -> f64 {
        self.co2_ppm.iter().sum::<f64>() / self.co2_ppm.len() as f64
    }

    /// Median sampling interval in seconds, falling back to the hint.
    pub fn typical_interval_s(&self) -> Option<f64> {
        if self.len() < 2 {
            return self.interval_hint_s;
        }
        let mut d: Vec<f64> = self.t_seconds.windows(2).map(|w| w[1] - w[0]).collect();
        d.sort_by(f64::total_cmp);
        Some(d[d.len() / 2])
    }

    /// Sub-series over `[start, end)` sample indices.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return invalid(format!("bad slice [{start}, {end}) of series with {} samples", self.len()));
        }
        Ok(Self {
            t_seconds: self.t_seconds[start..end].to_vec(),
            co2_ppm: self.co2_ppm[start..end].to_vec(),
            interval_hint_s: self.interval_hint_s,
        })
    }

    /// Shift every concentration by `offset_ppm`.
    pub fn shifted(&self, offset_ppm: f64) -> Self {
        Self {
            t_seconds: self.t_seconds.clone(),
            co2_ppm: self.co2_ppm.iter().map(|c| c + offset_ppm).collect(),
            interval_hint_s: self.interval_hint_s,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SERIES_CSV_HEADER}")?;
        for (t, c) in self.iter() {
            writeln!(w, "{t},{c}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Strict reader for the canonical `t_seconds,co2_ppm` format.
    ///
    /// Negative values are accepted here so simulated traces round-trip;
    /// use `ingest::parse_csv` for sensor files.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim_end_matches('\r') == SERIES_CSV_HEADER => {}
            Some((_, Ok(h))) => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header '{SERIES_CSV_HEADER}', found '{h}'"),
                })
            }
            Some((_, Err(e))) => return Err(e.into()),
            None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
        }
        let mut t = Vec::new();
        let mut c = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let parse = |s: Option<&str>, what: &str| -> Result<f64> {
                s.and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: i + 1,
                        message: format!("bad {what} in '{line}'"),
                    })
            };
            let mut parts = line.split(',');
            t.push(parse(parts.next(), "t_seconds")?);
            c.push(parse(parts.next(), "co2_ppm")?);
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "too many columns".into(),
                });
            }
        }
        validate_times(&t, &c)?;
        Ok(Self::simulated(t, c))
    }
}

fn validate_times(t: &[f64], c: &[f64]) -> Result<()> {
    if t.len() != c.len() {
        return invalid("time and value columns differ in length");
    }
    crate::error::ensure_finite("timestamps", t)?;
    crate::error::ensure_finite("CO2 values", c)?;
    if let Some(w) = t.windows(2).find(|w| w[1] <= w[0]) {
        return invalid(format!("timestamps not strictly increasing at {} -> {}", w[0], w[1]));
    }
    Ok(())
}
