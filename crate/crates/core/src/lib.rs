//! Identification and adaptive tracking of FIR systems from binary-valued
//! observations that pass through a bit-flipping tampering channel.
//!
//! The crate contains the plant/sensor/channel simulator, first-order and
//! Newton-type recursive projection estimators, the periodic probe defense
//! that estimates the flip probabilities online, a certainty-equivalence
//! tracking controller and a Monte Carlo experiment harness.

pub mod control;
pub mod defense;
pub mod error;
pub mod gradient;
pub mod harness;
pub mod newton;
pub mod noise;
pub mod plant;
pub mod projection;
pub mod rng;

pub use control::{tracking_cost, ControlAction, Controller, Reference};
pub use defense::{lil_envelope, DefenseState, InsertionSchedule, ProbePlan};
pub use error::{Error, Result};
pub use gradient::{rate_gain_threshold, GradientEstimator};
pub use newton::{NewtonEstimator, NewtonStep};
pub use noise::{NoiseModel, NoiseSchedule};
pub use plant::{
    tampered_zero_prob, BinarySensor, FirPlant, FirWindow, FlipProbabilities, InputLaw, RegressorKind,
    RegressorSource, TamperChannel,
};
pub use projection::{ConstraintSet, WeightMatrix};
