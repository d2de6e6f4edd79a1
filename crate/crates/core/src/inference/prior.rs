use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::room::C_OUT_MAX;

/// The four inferred quantities, in draw column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Q,
    COut,
    E,
    Sigma,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Q, Param::COut, Param::E, Param::Sigma];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in JSON and tables.
    pub fn column(self) -> &'static str {
        match self {
            Param::Q => "q_ach",
            Param::COut => "c_out_ppm",
            Param::E => "e_lps",
            Param::Sigma => "sigma",
        }
    }

    /// Physically admissible range, independent of any prior.
    pub fn hard_bounds(self) -> (f64, f64) {
        match self {
            Param::COut => (0.0, C_OUT_MAX),
            _ => (0.0, f64::INFINITY),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// Prior of one parameter, in its canonical unit
/// (Q in ACH, C_out in ppm, E in L/s, sigma in ppm/sqrt(h)).
///
/// `fixed` pins a parameter to a known value and removes it from sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform { lower: f64, upper: f64 },
    Normal { mean: f64, sd: f64 },
    Fixed { value: f64 },
}

impl PriorSpec {
    pub fn uniform(lower: f64, upper: f64) -> Self {
        PriorSpec::Uniform { lower, upper }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        PriorSpec::Normal { mean, sd }
    }

    pub fn fixed(value: f64) -> Self {
        PriorSpec::Fixed { value }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, PriorSpec::Fixed { .. })
    }

    fn validate(&self, param: Param) -> Result<()> {
        let (hlo, hhi) = param.hard_bounds();
        match *self {
            PriorSpec::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return invalid(format!("{param}: uniform prior needs finite lower < upper, got ({lower}, {upper})"));
                }
                if upper <= hlo || lower >= hhi {
                    return invalid(format!("{param}: uniform prior ({lower}, {upper}) lies outside [{hlo}, {hhi}]"));
                }
                if param == Param::Sigma && lower < 0.0 {
                    return invalid("sigma prior must not put mass on negative values");
                }
            }
            PriorSpec::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return invalid(format!("{param}: normal prior needs finite mean and sd > 0, got ({mean}, {sd})"));
                }
                if param == Param::Sigma {
                    return invalid("sigma prior must not put mass on negative values; use a uniform prior with lower >= 0");
                }
            }
            PriorSpec::Fixed { value } => {
                if !(value.is_finite() && value >= hlo && value <= hhi) {
                    return invalid(format!("{param}: fixed value {value} outside [{hlo}, {hhi}]"));
                }
            }
        }
        Ok(())
    }

    /// Support intersected with the parameter's admissible range.
    pub fn support(&self, param: Param) -> (f64, f64) {
        let (hlo, hhi) = param.hard_bounds();
        match *self {
            PriorSpec::Uniform { lower, upper } => (lower.max(hlo), upper.min(hhi)),
            PriorSpec::Normal { .. } => (hlo, hhi),
            PriorSpec::Fixed { value } => (value, value),
        }
    }

    /// Log density (unnormalized for truncation) and its derivative.
    pub fn log_density_grad(&self, param: Param, x: f64) -> (f64, f64) {
        let (lo, hi) = self.support(param);
        if !(x >= lo && x <= hi) {
            return (f64::NEG_INFINITY, 0.0);
        }
        match *self {
            PriorSpec::Uniform { lower, upper } => (-(upper - lower).ln(), 0.0),
            PriorSpec::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-(sd * (2.0 * PI).sqrt()).ln() - 0.5 * z * z, -z / sd)
            }
            PriorSpec::Fixed { .. } => (0.0, 0.0),
        }
    }

    pub fn log_density(&self, param: Param, x: f64) -> f64 {
        self.log_density_grad(param, x).0
    }

    /// Draw from the prior restricted to the admissible range.
    pub fn sample<R: Rng + ?Sized>(&self, param: Param, rng: &mut R) -> f64 {
        let (lo, hi) = self.support(param);
        match *self {
            PriorSpec::Uniform { .. } => lo + (hi - lo) * rng.random::<f64>(),
            PriorSpec::Normal { mean, sd } => {
                for _ in 0..1000 {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = mean + sd * z;
                    if x >= lo && x <= hi {
                        return x;
                    }
                }
                mean.clamp(lo, hi)
            }
            PriorSpec::Fixed { value } => value,
        }
    }
}

/// Priors for all four parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSet {
    pub q: PriorSpec,
    pub c_out: PriorSpec,
    pub e: PriorSpec,
    pub sigma: PriorSpec,
}

impl Default for PriorSet {
    fn default() -> Self {
        Self {
            q: PriorSpec::uniform(0.0, 3.0),
            c_out: PriorSpec::uniform(350.0, 550.0),
            e: PriorSpec::uniform(0.0, 0.05),
            sigma: PriorSpec::uniform(0.0, DEFAULT_SIGMA_UPPER),
        }
    }
}

/// Upper bound of the default sigma prior, ppm/sqrt(h).
pub const DEFAULT_SIGMA_UPPER: f64 = 500.0;

impl PriorSet {
    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            self.get(p).validate(p)?;
        }
        Ok(())
    }

    pub fn get(&self, p: Param) -> &PriorSpec {
        match p {
            Param::Q => &self.q,
            Param::COut => &self.c_out,
            Param::E => &self.e,
            Param::Sigma => &self.sigma,
        }
    }

    pub fn set(&mut self, p: Param, spec: PriorSpec) {
        match p {
            Param::Q => self.q = spec,
            Param::COut => self.c_out = spec,
            Param::E => self.e = spec,
            Param::Sigma => self.sigma = spec,
        }
    }

    pub fn with(mut self, p: Param, spec: PriorSpec) -> Self {
        self.set(p, spec);
        self
    }

    /// Parameters that are sampled (not fixed).
    pub fn free_params(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|p| !self.get(*p).is_fixed()).collect()
    }

    /// Draw one point from the joint prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamDraw {
        let mut v = [0.0; 4];
        for p in Param::ALL {
            v[p.index()] = self.get(p).sample(p, rng);
        }
        ParamDraw::from_array(v)
    }

    /// The sensitivity-study prior sets: default, vague and informative
    /// variants, each changing one parameter against the default.
    pub fn sensitivity_sets() -> Vec<(String, PriorSet)> {
        let d = PriorSet::default();
        vec![
            ("default".into(), d),
            ("vague_q".into(), d.with(Param::Q, PriorSpec::uniform(0.0, 10.0))),
            ("vague_e".into(), d.with(Param::E, PriorSpec::uniform(0.0, 0.1))),
            ("informative_q".into(), d.with(Param::Q, PriorSpec::normal(2.0, 0.2))),
            ("informative_c_out_uniform".into(), d.with(Param::COut, PriorSpec::uniform(396.0, 416.0))),
            ("informative_c_out_normal".into(), d.with(Param::COut, PriorSpec::normal(400.0, 20.0))),
            ("informative_e".into(), d.with(Param::E, PriorSpec::normal(0.013, 0.005))),
        ]
    }
}

/// One point in parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDraw {
    pub q_ach: f64,
    pub c_out_ppm: f64,
    pub e_lps: f64,
    pub sigma: f64,
}

impl ParamDraw {
    pub fn new(q_ach: f64, c_out_ppm: f64, e_lps: f64, sigma: f64) -> Self {
        Self {
            q_ach,
            c_out_ppm,
            e_lps,
            sigma,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q_ach, self.c_out_ppm, self.e_lps, self.sigma]
    }

    pub fn get(&self, p: Param) -> f64 {
        self.to_array()[p.index()]
    }
}

/// Sum of independent per-parameter log densities; `-inf` outside any support.
pub fn log_prior(draw: &ParamDraw, priors: &PriorSet) -> f64 {
    Param::ALL
        .iter()
        .map(|&p| priors.get(p).log_density(p, draw.get(p)))
        .sum()
}
