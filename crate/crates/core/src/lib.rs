//! Equilibrium proportional-reinsurance and investment strategies for an
//! insurer whose exponential-utility risk aversion is itself random
//! (an n-point distribution), in a market where the risky asset follows
//! Heston's stochastic-volatility model.
//!
//! The crate is `no_std` (it needs `alloc`) and is organised bottom-up:
//!
//! * [`model`] validated market, insurance and risk-aversion inputs;
//! * [`odes`] the exponents `g1`, `g2`, `g3` of the value-function ansatz,
//!   with the coupled `g2` system integrated by a predictor-corrector scheme;
//! * [`strategy`] equilibrium retention `q̂(t)` and risky position `π̂(t)`,
//!   admissibility checks, the value function and regime analysis;
//! * [`montecarlo`] full-truncation simulation of the wealth/variance SDEs
//!   and estimators of expected utilities, certainty equivalents and the
//!   reward functional.
//!
//! File formats, the CLI and multi-threaded batch execution live in the
//! companion `reinsure` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod math;
pub mod model;
pub mod montecarlo;
pub mod odes;
pub mod strategy;

pub use model::{
    derive_diffusion, validate_config, Atom, AversionCase, AversionDistribution,
    DiffusionCoefficients, HestonParams, Horizon, InsuranceParams, ValidatedModel,
    ValidationReport, Violation,
};
pub use montecarlo::{
    estimate_reward, simulate_path, simulate_paths, Control, PathBatch, PathOutcome, Perturbation,
    SimulationError, SimulationResult, SpotCheck,
};
pub use odes::{solve, GSolution, RiccatiConstants, SolveError};
pub use strategy::{
    check_admissibility, equilibrium_strategy, regime_classification, sensitivity_signs,
    value_function, AdmissibilityReport, Regime, RegimeReport, SensitivityReport, StrategyPath,
    ValueSurface,
};
