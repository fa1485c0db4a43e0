//! Volatility estimation in the time domain (moving average, exponential
//! smoothing), the state domain (local-linear kernel smoothing of squared
//! residuals against the level) and their dynamic integration, with
//! diffusion simulators, forecast-evaluation measures and a replication
//! harness.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`).
//! The harness works in `f64`; the aliases below name the `f64`
//! instantiations.

pub mod error;
pub mod evaluation;
pub mod harness;
pub mod integration;
pub mod scalar;
pub mod sde_models;
pub mod state_domain;
pub mod time_domain;

pub use error::{Result, VolError};
pub use scalar::Scalar;

pub type Path64 = sde_models::Path<f64>;
pub type ReturnSeries64 = sde_models::ReturnSeries<f64>;
pub type CirParams64 = sde_models::CirParams<f64>;
pub type SvParams64 = sde_models::SvParams<f64>;
pub type GbmParams64 = sde_models::GbmParams<f64>;
pub type EsConfig64 = time_domain::EsConfig<f64>;
pub type StateDomainFit64 = state_domain::StateDomainFit<f64>;
pub type StatePairs64 = state_domain::StatePairs<f64>;
pub type IgPrior64 = integration::IgPrior<f64>;
pub type ForecastTrack64 = evaluation::ForecastTrack<f64>;

pub type Path32 = sde_models::Path<f32>;
pub type ReturnSeries32 = sde_models::ReturnSeries<f32>;
pub type EsConfig32 = time_domain::EsConfig<f32>;
