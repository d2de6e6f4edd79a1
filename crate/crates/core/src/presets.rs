//! Built-in chamber scenarios: three concentration-decay tests at different
//! ventilation rates and four constant-injection tests at 1.9 ACH.
//!
//! Noise levels of the injection tests follow the fitted sigma of each
//! configuration; the decay tests use moderate sensor-scale noise.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::simulate_sde;
use crate::room::{ModelParams, RoomGeometry};
use crate::series::Co2Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub geometry: RoomGeometry,
    pub q_ach: f64,
    pub c_out_ppm: f64,
    pub e_lps: f64,
    pub sigma: f64,
    pub c0_ppm: f64,
    pub horizon_h: f64,
    pub dt_s: f64,
}

impl Preset {
    pub fn volume_l(&self) -> f64 {
        self.geometry.volume_l()
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::from_ach(self.q_ach, self.volume_l(), self.c_out_ppm, self.e_lps, self.sigma)
    }

    /// True for the decay tests (no CO2 release).
    pub fn is_decay(&self) -> bool {
        self.e_lps == 0.0
    }

    pub fn simulate(&self, seed: u64) -> Result<Co2Series> {
        Ok(simulate_sde(
            self.c0_ppm,
            &self.params()?,
            self.volume_l(),
            self.horizon_h,
            self.dt_s / 3600.0,
            seed,
        )?
        .with_interval_hint(self.dt_s))
    }
}

fn decay(name: &str, description: &str, q_ach: f64, sigma: f64, horizon_h: f64) -> Preset {
    Preset {
        name: name.into(),
        description: description.into(),
        geometry: RoomGeometry::chamber(),
        q_ach,
        c_out_ppm: 420.0,
        e_lps: 0.0,
        sigma,
        c0_ppm: 2000.0,
        horizon_h,
        dt_s: 20.0,
    }
}

fn injection(name: &str, description: &str, e_lps: f64, sigma: f64) -> Preset {
    Preset {
        name: name.into(),
        description: description.into(),
        geometry: RoomGeometry::chamber(),
        q_ach: 1.9,
        c_out_ppm: 420.0,
        e_lps,
        sigma,
        c0_ppm: 420.0,
        horizon_h: 3.0,
        dt_s: 20.0,
    }
}

pub fn all() -> Vec<Preset> {
    vec![
        decay("test1", "decay, ventilation 1 (1.9 ACH)", 1.9, 20.0, 3.0),
        decay("test2", "decay, ventilation 2 (1.51 ACH)", 1.51, 20.0, 4.0),
        decay("test3", "decay, ventilation 3 (0.53 ACH)", 0.53, 10.0, 8.0),
        injection("test4", "injection 0.013 L/s at 1.9 ACH, fan off", 0.013, 72.7),
        injection("test5", "injection 0.013 L/s at 1.9 ACH, fan on", 0.013, 75.4),
        injection("test6", "injection 0.026 L/s at 1.9 ACH, fan off", 0.026, 157.3),
        injection("test7", "injection 0.026 L/s at 1.9 ACH, fan on", 0.026, 48.6),
    ]
}

pub fn names() -> Vec<String> {
    all().into_iter().map(|p| p.name).collect()
}

pub fn get(name: &str) -> Result<Preset> {
    all()
        .into_iter()
        .find(|p| p.name == name)
        .map_or_else(|| invalid(format!("unknown scenario '{name}'; known: {}", names().join(", "))), Ok)
}
