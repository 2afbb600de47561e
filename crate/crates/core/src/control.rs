//! Certainty-equivalence tracking controller for FIR plants.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;

/// Bounded reference trajectory `y*_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Sinusoid { amplitude: f64, period: f64 },
    Constant(f64),
}

impl Reference {
    pub fn sinusoid(amplitude: f64, period: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::invalid("control.reference.amplitude", "must be finite"));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid("control.reference.period", "must be finite and > 0"));
        }
        Ok(Reference::Sinusoid { amplitude, period })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid("control.reference.amplitude", "must be finite"));
        }
        Ok(Reference::Constant(value))
    }

    pub fn value(&self, k: u64) -> f64 {
        match *self {
            Reference::Sinusoid { amplitude, period } => {
                amplitude * (std::f64::consts::TAU * k as f64 / period).sin()
            }
            Reference::Constant(c) => c,
        }
    }
}

/// Output of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    pub input: f64,
    pub regressor: DVector<f64>,
    /// The divisor floor or the input clamp was engaged.
    pub guarded: bool,
}

/// Chooses `u_k` so that `theta_hat^T phi_k + E[w] = y*_{k+1}` with
/// `phi_k = [u_k, u_{k-1}, ..., u_{k-p+1}]`.
#[derive(Debug, Clone)]
pub struct Controller {
    /// `u_{k-1}, ..., u_{k-p+1}`, most recent first.
    history: VecDeque<f64>,
    input_clamp: f64,
    theta1_floor: f64,
    guarded_steps: u64,
}

impl Controller {
    /// `past_inputs` holds `u_0, u_{-1}, ...` (length `p - 1`).
    pub fn new(past_inputs: &[f64], input_clamp: f64, theta1_floor: f64) -> Result<Self> {
        if !(input_clamp.is_finite() && input_clamp > 0.0) {
            return Err(Error::invalid("control.input_clamp", "must be finite and > 0"));
        }
        if !(theta1_floor.is_finite() && theta1_floor > 0.0) {
            return Err(Error::invalid("control.theta1_floor", "must be finite and > 0"));
        }
        Ok(Controller {
            history: past_inputs
                .iter()
                .map(|u| u.clamp(-input_clamp, input_clamp))
                .collect(),
            input_clamp,
            theta1_floor,
            guarded_steps: 0,
        })
    }

    pub fn guarded_steps(&self) -> u64 {
        self.guarded_steps
    }

    pub fn input_clamp(&self) -> f64 {
        self.input_clamp
    }

    pub fn control(&mut self, theta_hat: &DVector<f64>, noise: &NoiseModel, y_star_next: f64) -> Result<ControlAction> {
        let dim = self.history.len() + 1;
        if theta_hat.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: theta_hat.len(),
            });
        }
        let lagged: f64 = self
            .history
            .iter()
            .zip(theta_hat.iter().skip(1))
            .map(|(u, t)| u * t)
            .sum();
        let lead = theta_hat[0];
        let mut guarded = false;
        let divisor = if lead.abs() < self.theta1_floor {
            guarded = true;
            // sign(0) is taken as +1
            if lead < 0.0 {
                -self.theta1_floor
            } else {
                self.theta1_floor
            }
        } else {
            lead
        };
        let mut input = (y_star_next - noise.mean() - lagged) / divisor;
        if !(input.abs() <= self.input_clamp) {
            guarded = true;
            input = if input.is_nan() {
                0.0
            } else {
                input.clamp(-self.input_clamp, self.input_clamp)
            };
        }
        if guarded {
            self.guarded_steps += 1;
        }

        let regressor = DVector::from_iterator(dim, std::iter::once(input).chain(self.history.iter().copied()));
        if !self.history.is_empty() {
            self.history.pop_back();
            self.history.push_front(input);
        }
        Ok(ControlAction {
            input,
            regressor,
            guarded,
        })
    }
}

/// `J_n = (1/n) sum (y_k - y*_k)^2`.
pub fn tracking_cost(outputs: &[f64], references: &[f64]) -> Result<f64> {
    if outputs.len() != references.len() {
        return Err(Error::DimensionMismatch {
            expected: references.len(),
            found: outputs.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::invalid("outputs", "need at least one sample"));
    }
    let sum: f64 = outputs
        .iter()
        .zip(references)
        .map(|(y, r)| (y - r) * (y - r))
        .sum();
    Ok(sum / outputs.len() as f64)
}
