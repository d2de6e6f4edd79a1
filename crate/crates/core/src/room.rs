//! Room geometry, physical parameters and unit conversions.
//!
//! Canonical units: hours for time, ppm for concentration, liters for
//! volume, liters per second for flows, ppm/sqrt(h) for the noise scale.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Conversion from volume fraction to ppm.
pub const C_E: f64 = 1.0e6;

/// Seconds per hour.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Upper sanity bound on outdoor CO2 (sensor range).
pub const C_OUT_MAX: f64 = 5000.0;

/// Rectangular room. Dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryRepr", into = "GeometryRepr")]
pub struct RoomGeometry {
    width_m: f64,
    length_m: f64,
    height_m: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryRepr {
    width_m: f64,
    length_m: f64,
    height_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    volume_l: Option<f64>,
}

impl TryFrom<GeometryRepr> for RoomGeometry {
    type Error = Error;
    fn try_from(r: GeometryRepr) -> Result<Self> {
        let g = RoomGeometry::new(r.width_m, r.length_m, r.height_m)?;
        match r.volume_l {
            Some(v) if (v - g.volume_l()).abs() > 1e-9 * g.volume_l() => {
                invalid(format!("volume_l {v} does not match dimensions ({} L)", g.volume_l()))
            }
            _ => Ok(g),
        }
    }
}

impl From<RoomGeometry> for GeometryRepr {
    fn from(g: RoomGeometry) -> Self {
        GeometryRepr {
            width_m: g.width_m,
            length_m: g.length_m,
            height_m: g.height_m,
            volume_l: Some(g.volume_l()),
        }
    }
}

impl RoomGeometry {
    pub fn new(width_m: f64, length_m: f64, height_m: f64) -> Result<Self> {
        for (name, v) in [("width_m", width_m), ("length_m", length_m), ("height_m", height_m)] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        Ok(Self {
            width_m,
            length_m,
            height_m,
        })
    }

    /// The tracer-gas chamber, 2.3 x 3.5 x 2.4 m.
    pub fn chamber() -> Self {
        Self {
            width_m: 2.3,
            length_m: 3.5,
            height_m: 2.4,
        }
    }

    /// Classroom 1, 9.4 x 6.6 x 3.47 m.
    pub fn classroom1() -> Self {
        Self {
            width_m: 9.4,
            length_m: 6.6,
            height_m: 3.47,
        }
    }

    /// Classroom 2, 8.8 x 7.1 x 3.2 m.
    pub fn classroom2() -> Self {
        Self {
            width_m: 8.8,
            length_m: 7.1,
            height_m: 3.2,
        }
    }

    pub fn width_m(&self) -> f64 {
        self.width_m
    }

    pub fn length_m(&self) -> f64 {
        self.length_m
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn volume_l(&self) -> f64 {
        self.width_m * self.length_m * self.height_m * 1000.0
    }
}

/// Air changes per hour.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AchRate(f64);

impl AchRate {
    pub fn new(ach: f64) -> Result<Self> {
        if !(ach.is_finite() && ach >= 0.0) {
            return invalid(format!("ACH must be finite and >= 0, got {ach}"));
        }
        Ok(Self(ach))
    }

    pub fn from_lps(q_lps: f64, volume_l: f64) -> Result<Self> {
        check_volume(volume_l)?;
        Self::new(q_lps * SECONDS_PER_HOUR / volume_l)
    }

    pub fn ach(self) -> f64 {
        self.0
    }

    pub fn to_lps(self, volume_l: f64) -> f64 {
        self.0 * volume_l / SECONDS_PER_HOUR
    }
}

pub(crate) fn check_volume(volume_l: f64) -> Result<()> {
    if volume_l.is_finite() && volume_l > 0.0 {
        Ok(())
    } else {
        invalid(format!("volume must be finite and > 0 L, got {volume_l}"))
    }
}

/// Physical parameter vector of the mass-balance model.
///
/// `c_e` is fixed at 10^6 and is not part of the constructor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct ModelParams {
    q_vent: f64,
    c_out: f64,
    e_gen: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRepr {
    q_vent: f64,
    c_out: f64,
    e_gen: f64,
    sigma: f64,
    #[serde(default = "default_c_e")]
    c_e: f64,
}

fn default_c_e() -> f64 {
    C_E
}

impl TryFrom<ParamsRepr> for ModelParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        if r.c_e != C_E {
            return invalid(format!("c_e is fixed at 1e6 and cannot be set (got {})", r.c_e));
        }
        ModelParams::new(r.q_vent, r.c_out, r.e_gen, r.sigma)
    }
}

impl From<ModelParams> for ParamsRepr {
    fn from(p: ModelParams) -> Self {
        ParamsRepr {
            q_vent: p.q_vent,
            c_out: p.c_out,
            e_gen: p.e_gen,
            sigma: p.sigma,
            c_e: C_E,
        }
    }
}

impl ModelParams {
    /// `q_vent` and `e_gen` in L/s, `c_out` in ppm, `sigma` in ppm/sqrt(h).
    pub fn new(q_vent: f64, c_out: f64, e_gen: f64, sigma: f64) -> Result<Self> {
        crate::error::ensure_finite("model parameters", &[q_vent, c_out, e_gen, sigma])?;
        if q_vent < 0.0 {
            return invalid(format!("q_vent must be >= 0, got {q_vent}"));
        }
        if e_gen < 0.0 {
            return invalid(format!("e_gen must be >= 0, got {e_gen}"));
        }
        if sigma < 0.0 {
            return invalid(format!("sigma must be >= 0, got {sigma}"));
        }
        if !(0.0..=C_OUT_MAX).contains(&c_out) {
            return invalid(format!("c_out must lie in [0, {C_OUT_MAX}] ppm, got {c_out}"));
        }
        Ok(Self {
            q_vent,
            c_out,
            e_gen,
            sigma,
        })
    }

    /// Same as [`ModelParams::new`] with the ventilation given in ACH.
    pub fn from_ach(q_ach: f64, volume_l: f64, c_out: f64, e_gen: f64, sigma: f64) -> Result<Self> {
        let q = AchRate::new(q_ach)?.to_lps(volume_l);
        Self::new(q, c_out, e_gen, sigma)
    }

    pub fn q_vent(&self) -> f64 {
        self.q_vent
    }

    pub fn c_out(&self) -> f64 {
        self.c_out
    }

    pub fn e_gen(&self) -> f64 {
        self.e_gen
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c_e(&self) -> f64 {
        C_E
    }

    /// Air-exchange rate lambda in 1/h.
    pub fn lambda(&self, volume_l: f64) -> f64 {
        self.q_vent * SECONDS_PER_HOUR / volume_l
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return invalid(format!("sigma must be finite and >= 0, got {sigma}"));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_q_vent(self, q_vent: f64) -> Result<Self> {
        Self::new(q_vent, self.c_out, self.e_gen, self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chamber_volume() {
        let g = RoomGeometry::chamber();
        assert!((g.volume_l() - 19320.0).abs() < 19320.0 * 1e-9);
    }

    #[test]
    fn geometry_rejects_nonpositive() {
        assert!(RoomGeometry::new(0.0, 1.0, 1.0).is_err());
        assert!(RoomGeometry::new(1.0, -1.0, 1.0).is_err());
        assert!(RoomGeometry::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn params_reject_out_of_range() {
        assert!(ModelParams::new(-1.0, 400.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 400.0, -0.1, 0.0).is_err());
        assert!(ModelParams::new(1.0, 400.0, 0.0, -1.0).is_err());
        assert!(ModelParams::new(1.0, 5001.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, f64::INFINITY, 0.0, 0.0).is_err());
    }

    #[test]
    fn params_json_uses_field_names_and_pins_c_e() {
        let p = ModelParams::new(10.195, 420.0, 0.013, 72.7).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"q_vent\"") && s.contains("\"c_e\":1000000.0"));
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"q_vent":1,"c_out":400,"e_gen":0,"sigma":0,"c_e":2}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
        let unknown = r#"{"q_vent":1,"c_out":400,"e_gen":0,"sigma":0,"extra":1}"#;
        assert!(serde_json::from_str::<ModelParams>(unknown).is_err());
    }

    #[test]
    fn geometry_json() {
        let g = RoomGeometry::chamber();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"volume_l\""));
        let back: RoomGeometry = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    proptest! {
        #[test]
        fn ach_lps_round_trip(ach in 0.0f64..50.0, vol in 1.0e3f64..1.0e6) {
            let q = AchRate::new(ach).unwrap().to_lps(vol);
            let back = AchRate::from_lps(q, vol).unwrap().ach();
            prop_assert!((back - ach).abs() <= 1e-12 * ach.max(1e-300));
        }
    }
}
