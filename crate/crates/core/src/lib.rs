//! Core physics for a deterministic single-photon-train source: a
//! four-level atom in a driven optical cavity, pumped by two delayed
//! pulse trains so that photon generation alternates between the two
//! ground states without repumping.
//!
//! Module map:
//! - [`params`]: raw rates, derived effective rates, regime checks.
//! - [`pulse`]: the dimensionless pump envelopes and their integrals.
//! - [`ode`]: adaptive embedded Runge-Kutta stepping (real or complex).
//! - [`dynamics`]: the reduced two-ground-state model, flux and photon
//!   bookkeeping, the closed-form single-pulse oracle.
//! - [`correlation`]: train-integrated two-time intensity correlation.
//! - [`lindblad`]: the full master-equation oracle on the truncated
//!   atom (x) Fock space.
//!
//! All numerics are generic over the scalar type through
//! [`scalar::Real`]; the aliases below fix `f64`, the precision the CLI
//! and the validation suites use.

pub mod correlation;
pub mod dynamics;
pub mod lindblad;
pub mod ode;
pub mod params;
pub mod pulse;
pub mod quad;
pub mod scalar;

pub use scalar::Real;

pub type RawParams = params::RawParams<f64>;
pub type DerivedRates = params::DerivedRates<f64>;
pub type RegimeWarning = params::RegimeWarning<f64>;
pub type SubpulseShape = pulse::SubpulseShape<f64>;
pub type PulseTrain = pulse::PulseTrain<f64>;
pub type AtomState = dynamics::AtomState<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
pub type SimOptions = dynamics::SimOptions<f64>;
pub type CorrelationResult = correlation::CorrelationResult<f64>;
pub type G2Options = correlation::G2Options<f64>;
pub type DensityMatrix = lindblad::DensityMatrix<f64>;
pub type OracleOutput = lindblad::OracleOutput<f64>;
pub type EvolveOptions = lindblad::EvolveOptions<f64>;
pub type FluxComparison = lindblad::FluxComparison<f64>;
