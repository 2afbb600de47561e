//! First-order recursive projection estimator with step sizes `b_k = k^{-gamma}`.
//!
//! With known flip probabilities this is the GRP-TB-KP recursion; feeding it
//! the defense estimates `(p_hat_k, q_hat_k)` at every call gives GRP-TB-UP.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseSchedule};
use crate::plant::{bit, FlipProbabilities};
use crate::projection::ConstraintSet;

#[derive(Debug, Clone)]
pub struct GradientEstimator<N = NoiseModel> {
    theta_hat: DVector<f64>,
    step_index: u64,
    beta: f64,
    gamma: f64,
    set: ConstraintSet,
    noise: N,
    threshold: f64,
}

impl<N: NoiseSchedule> GradientEstimator<N> {
    pub fn new(
        theta0: DVector<f64>,
        beta: f64,
        gamma: f64,
        set: ConstraintSet,
        noise: N,
        threshold: f64,
    ) -> Result<Self> {
        if theta0.len() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                found: theta0.len(),
            });
        }
        if !set.contains(&theta0) {
            return Err(Error::invalid("grad.theta0", "must lie in theta_set"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("grad.beta", "must be finite and > 0"));
        }
        if !(gamma > 0.5 && gamma <= 1.0) {
            return Err(Error::invalid("grad.gamma", "must lie in (1/2, 1]"));
        }
        if !threshold.is_finite() {
            return Err(Error::invalid("sensor.C", "must be finite"));
        }
        Ok(GradientEstimator {
            theta_hat: theta0,
            step_index: 1,
            beta,
            gamma,
            set,
            noise,
            threshold,
        })
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// Index `k` of the next update.
    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn step_size(&self, k: u64) -> f64 {
        (k as f64).powf(-self.gamma)
    }

    /// `beta (1 - (p+q)) [ (1 - (p+q)) F(C - theta_hat^T phi) + q - s ]`,
    /// bounded by `beta` in absolute value.
    pub fn innovation(&self, phi: &DVector<f64>, received: bool, flips: FlipProbabilities) -> Result<f64> {
        self.check_dim(phi)?;
        let contrast = flips.require_identifiable()?;
        let margin = self.threshold - self.theta_hat.dot(phi);
        let predicted = flips.one_probability(self.noise.at(self.step_index).cdf(margin));
        Ok(self.beta * contrast * (predicted - bit(received)))
    }

    /// `theta_hat <- Pi(theta_hat + b_k phi s_tilde)`. Returns the innovation.
    pub fn update(&mut self, phi: &DVector<f64>, received: bool, flips: FlipProbabilities) -> Result<f64> {
        let innovation = self.innovation(phi, received, flips)?;
        let b = self.step_size(self.step_index);
        if innovation != 0.0 {
            let candidate = &self.theta_hat + phi * (b * innovation);
            self.theta_hat = self.set.project(&candidate)?;
        }
        self.step_index += 1;
        Ok(innovation)
    }

    /// Advance the step index without touching the estimate.
    pub fn hold(&mut self) {
        self.step_index += 1;
    }

    fn check_dim(&self, phi: &DVector<f64>) -> Result<()> {
        if phi.len() != self.theta_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_hat.len(),
                found: phi.len(),
            });
        }
        Ok(())
    }
}

/// Smallest gain giving the `ln k / k` rate at `gamma = 1`:
/// `1 / (2 (1-p-q)^2 f_lower delta)`.
pub fn rate_gain_threshold(flips: FlipProbabilities, density_lower: f64, excitation_delta: f64) -> f64 {
    let c = flips.contrast();
    1.0 / (2.0 * c * c * density_lower * excitation_delta)
}
