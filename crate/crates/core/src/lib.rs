//! Training-free conditional diffusion sampling for unnormalized densities.
//!
//! The sampler draws from a target `pi` (known up to normalization, with
//! analytic scores) by conditioning a linear interpolation path on an anchor
//! point `z`: a contracted version of the target near `z` is sampled with
//! non-reversible parallel tempering, then transported to `t = 1` by
//! integrating the exact conditional diffusion. No score networks are
//! trained anywhere; every drift comes from the target's own score.
//!
//! Module map:
//! - [`targets`]: benchmark densities, the evaluation ledger, mode finding
//! - [`interpolant`]: the conditional path (densities, scores, velocity, drift)
//! - [`kernels`]: MALA / HMC / random-walk steps with step-size adaptation
//! - [`tempering`]: non-reversible parallel tempering with round-trip and
//!   communication-barrier diagnostics
//! - [`cds`]: the two-stage sampler and anchor-time tuning
//! - [`metrics`]: sample-quality metrics and cost/quality Pareto tooling
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! pin the `f64` instantiations used by the benchmark harness.

pub mod cds;
pub mod interpolant;
pub mod kernels;
pub mod math;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod targets;
pub mod tempering;

pub use scalar::Scalar;

pub type Target64 = targets::Target<f64>;
pub type GaussianMixture64 = targets::GaussianMixture<f64>;
pub type LennardJones64 = targets::LennardJones<f64>;
pub type GaussianReference64 = targets::GaussianReference<f64>;
pub type LinearInterpolant64 = interpolant::LinearInterpolant<f64>;
pub type ConditionalPath64<'a> = interpolant::ConditionalPath<'a, f64>;
pub type KernelConfig64 = kernels::KernelConfig<f64>;
pub type AnnealingSchedule64 = tempering::AnnealingSchedule<f64>;
pub type ReplicaEnsemble64<'a> = tempering::ReplicaEnsemble<'a, f64>;
pub type CdsConfig64 = cds::CdsConfig<f64>;
pub type SampleSet64 = metrics::SampleSet<f64>;
