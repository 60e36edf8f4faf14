//! Two-colour bicircular RABBIT toolkit.
//!
//! A sideband in an XUV + IR photoionization experiment with co- or
//! counter-rotating circular fields is a coherent sum of three partial waves
//! (d2, d0, s) whose interference beats at twice the IR frequency as a
//! function of the XUV/IR delay.  This crate provides:
//!
//! * [`model`]    - the three-wave interference forward model on a (theta, tau) grid
//! * [`synth`]    - configurable ground truth (Coulomb/linear Wigner phase,
//!   parametric continuum-continuum phase, per-sideband amplitudes) and
//!   deterministic campaign generation with optional Poisson noise
//! * [`extract`]  - per-angle lock-in extraction of the 2-omega beat
//!   (offset, amplitude, phase, uncertainty) and circular-dichroism spectra
//! * [`fit`]      - simultaneous Levenberg-Marquardt fit of a co/counter trace
//!   pair with analytic Jacobians, multi-start, gauge bookkeeping and
//!   covariance-based confidence intervals
//! * [`separate`] - half-sum / half-difference algebra turning calibrated
//!   phases into Wigner and continuum-continuum phases and delays with
//!   first-order error propagation
//!
//! All numerics are generic over the scalar type via [`real::Real`]
//! (`f32` or `f64`); file formats are fixed to `f64`.

// `!(x > 0.0)` rejects NaN along with the out-of-range values, physical
// constants keep every digit of their published precision, and the matrix
// kernels index several arrays in lockstep.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

pub mod error;
pub mod extract;
pub mod fit;
pub mod model;
pub mod optim;
pub mod real;
pub mod separate;
pub mod special;
pub mod synth;
pub mod trace;
pub mod units;

pub use error::{Error, Result};

/// Concrete `f64` aliases for the main types.
pub type PartialWave64 = model::PartialWave<f64>;
pub type SidebandModel64 = model::SidebandModel<f64>;
pub type TraceGrid64 = trace::TraceGrid<f64>;
pub type GroundTruth64 = synth::GroundTruth<f64>;
pub type Campaign64 = synth::Campaign<f64>;
pub type AngularPhaseProfile64 = extract::AngularPhaseProfile<f64>;
pub type FitResult64 = fit::FitResult<f64>;
pub type DelayTable64 = separate::DelayTable<f64>;

/// Concrete `f32` aliases for the scalar-generic math types.
pub type PartialWave32 = model::PartialWave<f32>;
pub type SidebandModel32 = model::SidebandModel<f32>;
