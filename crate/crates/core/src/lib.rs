//! Stochastic grey-box CO2 model of a ventilated room, Bayesian inference of
//! its ventilation, outdoor level and emission parameters, and indoor air
//! quality assessment built on top.

pub mod assessment;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod ingest;
pub mod model;
pub mod presets;
pub mod rng;
pub mod room;
pub mod series;

pub use assessment::{
    compute_ecai, design_target_curve, estimate_occupancy, fit_threshold_curve, required_outdoor_q, threshold_empirical,
    threshold_ensemble, AssessmentReport, EcaPolicy, MitigationScenario, ThresholdTriple,
};
pub use diagnostics::{posterior_predictive, trend_compare, PpcResult, TestStatistic};
pub use error::{Error, Result};
pub use ingest::{parse_csv, resample, school_hours_cdf, segment_occupied, Season, Segment};
pub use inference::{
    decay_reference_ach, log_likelihood_em, log_posterior, log_prior, prior_sensitivity, sample_posterior, summarize,
    Param, ParamDraw, PosteriorSamples, PosteriorSummary, PriorSet, PriorSpec, SamplerConfig,
};
pub use model::{closed_form_ode, drift, em_step, simulate_ode, simulate_sde, steady_state, Ensemble};
pub use room::{AchRate, ModelParams, RoomGeometry};
pub use series::Co2Series;
