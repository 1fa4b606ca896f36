//! Hidden reciprocal chain (HRC), hidden Markov chain (HMC) and hidden
//! Schrödinger chain (HSC) target models on a finite cellular state space,
//! with clutter observation models, normalized filters, likelihood-ratio
//! track-extraction detectors and a Monte Carlo experiment harness.
//!
//! All probability kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common case.

pub mod chain;
pub mod detect;
pub mod filter;
pub mod gridworld;
pub mod harness;
mod linalg;
pub mod observation;
pub mod scalar;

pub use scalar::Real;

pub type TransitionMatrixF64 = chain::TransitionMatrix<f64>;
pub type TransitionMatrixF32 = chain::TransitionMatrix<f32>;
pub type EndpointDistributionF64 = chain::EndpointDistribution<f64>;
pub type EndpointDistributionF32 = chain::EndpointDistribution<f32>;
pub type BridgeFamilyF64 = chain::BridgeFamily<f64>;
pub type BridgeFamilyF32 = chain::BridgeFamily<f32>;
pub type SchrodingerBridgeF64 = chain::SchrodingerBridge<f64>;
pub type SchrodingerBridgeF32 = chain::SchrodingerBridge<f32>;
pub type ChainModelF64 = chain::ChainModel<f64>;
pub type FilterOutputF64 = filter::FilterOutput<f64>;
pub type FilterOutputF32 = filter::FilterOutput<f32>;
pub type SingleObsModelF64 = observation::SingleObsModel<f64>;
pub type MultiObsModelF64 = observation::MultiObsModel<f64>;
pub type TrackerModelsF64 = detect::TrackerModels<f64>;
