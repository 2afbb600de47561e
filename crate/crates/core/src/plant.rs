//! FIR plant, threshold sensor, bit-flip channel and regressor sources.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;

/// Tolerance of the identifiability check `p + q != 1`.
pub const IDENTIFIABILITY_TOL: f64 = 1e-9;

#[inline]
pub(crate) fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Flip probabilities of the tampering channel: `p` flips 1 to 0, `q`
/// flips 0 to 1. Used both for the true attack and for its online estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipProbabilities {
    pub p: f64,
    pub q: f64,
}

impl FlipProbabilities {
    pub const NONE: FlipProbabilities = FlipProbabilities { p: 0.0, q: 0.0 };

    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("channel.p", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid("channel.q", "must lie in [0, 1]"));
        }
        Ok(FlipProbabilities { p, q })
    }

    /// `1 - (p + q)`, the factor by which tampering scales the information
    /// carried by a bit.
    pub fn contrast(&self) -> f64 {
        1.0 - (self.p + self.q)
    }

    pub fn is_identifiable(&self) -> bool {
        self.contrast().abs() > IDENTIFIABILITY_TOL
    }

    pub(crate) fn require_identifiable(&self) -> Result<f64> {
        let c = self.contrast();
        if c.abs() <= IDENTIFIABILITY_TOL {
            return Err(Error::Degenerate { sum: self.p + self.q });
        }
        Ok(c)
    }

    /// `P(s = 1 | F)` when the untampered bit is 1 with probability `cdf_value`.
    pub fn one_probability(&self, cdf_value: f64) -> f64 {
        self.contrast() * cdf_value + self.q
    }
}

/// Exact conditional probability of receiving a 0 given the margin
/// `C - theta^T phi`: `(p + q - 1) F(margin) + 1 - q`.
pub fn tampered_zero_prob(flips: FlipProbabilities, noise: &NoiseModel, margin: f64) -> f64 {
    (flips.p + flips.q - 1.0) * noise.cdf(margin) + 1.0 - flips.q
}

/// `y_{k+1} = phi^T theta + w_{k+1}`.
#[derive(Debug, Clone)]
pub struct FirPlant {
    theta: DVector<f64>,
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl FirPlant {
    pub fn new(theta: DVector<f64>, noise: NoiseModel, rng: ChaCha8Rng) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("plant.theta", "needs at least one entry"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("plant.theta", "entries must be finite"));
        }
        Ok(FirPlant { theta, noise, rng })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Output for an explicit noise realisation.
    pub fn response(&self, phi: &DVector<f64>, w: f64) -> Result<f64> {
        check_dim(self.theta.len(), phi.len())?;
        Ok(phi.dot(&self.theta) + w)
    }

    pub fn step(&mut self, phi: &DVector<f64>) -> Result<f64> {
        check_dim(self.theta.len(), phi.len())?;
        let w = self.noise.sample(&mut self.rng);
        self.response(phi, w)
    }
}

/// `s = 1{y <= C}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarySensor {
    pub threshold: f64,
}

impl BinarySensor {
    pub fn new(threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::invalid("sensor.C", "must be finite"));
        }
        Ok(BinarySensor { threshold })
    }

    pub fn sense(&self, y: f64) -> bool {
        y <= self.threshold
    }
}

/// Memoryless bit-flip channel controlled by the attacker.
#[derive(Debug, Clone)]
pub struct TamperChannel {
    flips: FlipProbabilities,
    rng: ChaCha8Rng,
}

impl TamperChannel {
    pub fn new(flips: FlipProbabilities, rng: ChaCha8Rng) -> Result<Self> {
        if flips.p >= 1.0 {
            return Err(Error::invalid("channel.p", "must lie in [0, 1)"));
        }
        if flips.q >= 1.0 {
            return Err(Error::invalid("channel.q", "must lie in [0, 1)"));
        }
        if !flips.is_identifiable() {
            return Err(Error::invalid(
                "channel.p+channel.q",
                format!("p + q = {} makes the parameter unidentifiable", flips.p + flips.q),
            ));
        }
        Ok(TamperChannel { flips, rng })
    }

    pub fn flips(&self) -> FlipProbabilities {
        self.flips
    }

    /// Transmit one bit. One uniform draw is consumed per call whatever the
    /// bit, so the stream position depends only on the number of bits sent.
    pub fn tamper(&mut self, sent: bool) -> bool {
        let u: f64 = self.rng.random();
        if sent {
            u >= self.flips.p
        } else {
            u < self.flips.q
        }
    }
}

/// Law of the exogenous input `u_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputLaw {
    /// `u_k ~ N(0, variance * k^{-variance_decay})`.
    Gaussian { variance: f64, variance_decay: f64 },
}

impl InputLaw {
    pub fn variance_at(&self, k: u64) -> f64 {
        match *self {
            InputLaw::Gaussian {
                variance,
                variance_decay,
            } => variance * (k.max(1) as f64).powf(-variance_decay),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.variance_at(k).sqrt() * z
    }
}

/// Tapped delay line `phi_k = [u_k, u_{k-1}, ..., u_{k-p+1}]` fed by an
/// input law.
#[derive(Debug, Clone)]
pub struct FirWindow {
    law: InputLaw,
    taps: VecDeque<f64>,
    rng: ChaCha8Rng,
}

impl FirWindow {
    /// The `p - 1` pre-sample inputs are drawn from the law at `k = 1`.
    pub fn new(law: InputLaw, dim: usize, mut rng: ChaCha8Rng) -> Self {
        let mut taps = VecDeque::with_capacity(dim);
        for _ in 1..dim {
            taps.push_back(law.sample(1, &mut rng));
        }
        FirWindow { law, taps, rng }
    }

    pub fn next(&mut self, k: u64) -> DVector<f64> {
        let u = self.law.sample(k, &mut self.rng);
        self.taps.push_front(u);
        let dim = self.taps.len();
        let phi = DVector::from_iterator(dim, self.taps.iter().copied());
        self.taps.pop_back();
        phi
    }
}

#[derive(Debug, Clone)]
pub enum RegressorKind {
    FirWindow(FirWindow),
    External { stream: Vec<DVector<f64>>, cursor: usize },
}

/// Regressor generator with the `||phi_k|| <= M` bound monitored.
/// Violations are counted, not fatal.
#[derive(Debug, Clone)]
pub struct RegressorSource {
    kind: RegressorKind,
    bound: f64,
    violations: u64,
}

impl RegressorSource {
    pub fn new(kind: RegressorKind, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid("input.bound_M", "must be finite and > 0"));
        }
        Ok(RegressorSource {
            kind,
            bound,
            violations: 0,
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn next(&mut self, k: u64) -> Result<DVector<f64>> {
        let phi = match &mut self.kind {
            RegressorKind::FirWindow(w) => w.next(k),
            RegressorKind::External { stream, cursor } => {
                let phi = stream.get(*cursor).cloned().ok_or_else(|| {
                    Error::Config(format!("external regressor stream exhausted at step {k}"))
                })?;
                *cursor += 1;
                phi
            }
        };
        self.observe(&phi);
        Ok(phi)
    }

    /// Record a regressor produced elsewhere (e.g. by a controller).
    pub fn observe(&mut self, phi: &DVector<f64>) {
        if phi.norm() > self.bound {
            self.violations += 1;
        }
    }
}
