//! Shared fixtures for the benchmarks.

use co2bayes_core::{presets, Co2Series, ModelParams};

/// A simulated chamber injection run and its volume.
pub fn injection_twin() -> (Co2Series, f64) {
    let p = presets::get("test4").expect("preset exists");
    (p.simulate(1).expect("simulation succeeds"), p.volume_l())
}

pub fn injection_params() -> (ModelParams, f64) {
    let p = presets::get("test4").expect("preset exists");
    (p.params().expect("valid preset"), p.volume_l())
}
