//! Bayesian estimation of (Q, C_out, E, sigma) from a CO2 series.

pub mod convergence;
pub mod decay;
pub mod likelihood;
pub mod nuts;
pub mod prior;
pub mod sampler;
pub mod sensitivity;
pub mod summary;
pub mod target;

pub use decay::{decay_reference_ach, DecayEstimate};
pub use likelihood::{log_likelihood_em, log_posterior, EmStats};
pub use prior::{log_prior, Param, ParamDraw, PriorSet, PriorSpec};
pub use sampler::{sample_posterior, Diagnostics, ParamDiagnostics, PosteriorSamples, SamplerConfig, SamplerRecord};
pub use sensitivity::{prior_sensitivity, SensitivityReport};
pub use summary::{hdi, summarize, ParamSummary, PosteriorSummary, DEFAULT_HDI_MASS};
pub use target::PosteriorTarget;
