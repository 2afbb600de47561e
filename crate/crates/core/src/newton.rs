//! Quasi-Newton recursive projection estimator (NRP-TB-KP / NRP-TB-UP).
//!
//! The gain matrix `P_k` is downdated by a rank-one term each step while a
//! shadow copy of `P_k^{-1}` is updated by the matching rank-one increment
//! `beta_k^2 phi phi^T`. The shadow inverse is the weight of the projection
//! and carries `log det P^{-1}` through the matrix determinant lemma.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseSchedule};
use crate::plant::{bit, FlipProbabilities};
use crate::projection::{ConstraintSet, WeightMatrix};

/// Quantities produced by one update, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    pub beta: f64,
    pub gain_scalar: f64,
    pub innovation: f64,
    /// The rank-one downdate of `P` lost definiteness and `P` was rebuilt
    /// from the shadow inverse.
    pub refactored: bool,
}

#[derive(Debug, Clone)]
pub struct NewtonEstimator<N = NoiseModel> {
    theta_hat: DVector<f64>,
    gain: DMatrix<f64>,
    gain_inv: DMatrix<f64>,
    gain_inv_logdet: f64,
    /// `|beta_{k-1}|`; `None` before the first step, where the cap is 1.
    beta_cap: Option<f64>,
    last_beta: f64,
    ratchet: bool,
    step_index: u64,
    set: ConstraintSet,
    noise: N,
    threshold: f64,
    density_radius: f64,
}

impl<N: NoiseSchedule> NewtonEstimator<N> {
    /// `density_radius` is the half-width of the interval over which the
    /// noise density infimum bounds `|beta_k|`; `P_1 = p1_scale * I`.
    pub fn new(
        theta0: DVector<f64>,
        p1_scale: f64,
        set: ConstraintSet,
        noise: N,
        threshold: f64,
        density_radius: f64,
    ) -> Result<Self> {
        let dim = set.dim();
        if theta0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: theta0.len(),
            });
        }
        if !set.contains(&theta0) {
            return Err(Error::invalid("newton.theta0", "must lie in theta_set"));
        }
        if !(p1_scale.is_finite() && p1_scale > 0.0) {
            return Err(Error::invalid("newton.P1_scale", "must be finite and > 0"));
        }
        if !threshold.is_finite() {
            return Err(Error::invalid("sensor.C", "must be finite"));
        }
        // Fails early when the density vanishes on the interval.
        noise.at(1).density_inf(density_radius)?;
        Ok(NewtonEstimator {
            theta_hat: theta0,
            gain: DMatrix::identity(dim, dim) * p1_scale,
            gain_inv: DMatrix::identity(dim, dim) / p1_scale,
            gain_inv_logdet: -(dim as f64) * p1_scale.ln(),
            beta_cap: None,
            last_beta: 0.0,
            ratchet: true,
            step_index: 1,
            set,
            noise,
            threshold,
            density_radius,
        })
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Shadow `P^{-1}`.
    pub fn gain_inverse(&self) -> &DMatrix<f64> {
        &self.gain_inv
    }

    /// Accumulated `log det P^{-1}`.
    pub fn gain_inverse_logdet(&self) -> f64 {
        self.gain_inv_logdet
    }

    /// `beta` used by the most recent update (0 before the first).
    pub fn last_beta(&self) -> f64 {
        self.last_beta
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn density_radius(&self) -> f64 {
        self.density_radius
    }

    /// While disabled, `beta_k` is still capped by the current bound but
    /// does not lower it. Used while flip estimates are too noisy to be
    /// allowed to shrink the gain for the rest of the run.
    pub fn set_ratchet(&mut self, enabled: bool) {
        self.ratchet = enabled;
    }

    /// `sign(1-(p+q)) min{|beta_{k-1}|, |1-(p+q)| inf_{|x|<=r} f_{k+1}(x)}`,
    /// with the previous value replaced by 1 at the first step.
    pub fn beta_step(&self, flips: FlipProbabilities) -> Result<f64> {
        let contrast = flips.require_identifiable()?;
        let density = self.noise.at(self.step_index + 1).density_inf(self.density_radius)?;
        let cap = self.beta_cap.unwrap_or(1.0);
        Ok(contrast.signum() * cap.min(contrast.abs() * density))
    }

    /// `a_k = 1 / (1 + beta^2 phi^T P phi)`.
    pub fn gain_scalar(&self, beta: f64, phi: &DVector<f64>) -> Result<f64> {
        self.check_dim(phi)?;
        Ok(1.0 / (1.0 + beta * beta * phi.dot(&(&self.gain * phi))))
    }

    /// Unscaled innovation `(1-(p+q)) F(C - theta_hat^T phi) + q - s`, in [-1, 1].
    pub fn innovation(&self, phi: &DVector<f64>, received: bool, flips: FlipProbabilities) -> Result<f64> {
        self.check_dim(phi)?;
        flips.require_identifiable()?;
        let margin = self.threshold - self.theta_hat.dot(phi);
        Ok(flips.one_probability(self.noise.at(self.step_index).cdf(margin)) - bit(received))
    }

    pub fn update(&mut self, phi: &DVector<f64>, received: bool, flips: FlipProbabilities) -> Result<NewtonStep> {
        self.check_dim(phi)?;
        let beta = self.beta_step(flips)?;
        let innovation = self.innovation(phi, received, flips)?;

        let p_phi = &self.gain * phi;
        let quad = phi.dot(&p_phi);
        let a = 1.0 / (1.0 + beta * beta * quad);
        let candidate = &self.theta_hat + &p_phi * (a * beta * innovation);

        let mut gain = &self.gain - (&p_phi * p_phi.transpose()) * (beta * beta * a);
        let gain_inv = &self.gain_inv + (phi * phi.transpose()) * (beta * beta);
        let mut refactored = false;
        if gain.clone().cholesky().is_none() {
            gain = gain_inv
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NumericalBreakdown {
                    step: self.step_index,
                    reason: "P^{-1} lost positive definiteness".into(),
                })?
                .inverse();
            refactored = true;
        }

        let weight = WeightMatrix::new(gain_inv).map_err(|_| Error::NumericalBreakdown {
            step: self.step_index,
            reason: "projection weight P^{-1} is not symmetric positive definite".into(),
        })?;
        self.theta_hat = self.set.project_weighted(&weight, &candidate)?;
        self.gain_inv = weight.matrix().clone();
        self.gain = gain;
        self.gain_inv_logdet += (beta * beta * quad).ln_1p();
        if self.ratchet || self.beta_cap.is_none() {
            self.beta_cap = Some(beta.abs());
        }
        self.last_beta = beta;
        self.step_index += 1;
        Ok(NewtonStep {
            beta,
            gain_scalar: a,
            innovation,
            refactored,
        })
    }

    /// `(||P P^{-1} - I||_inf, |accumulated logdet - direct logdet|)`.
    pub fn consistency(&self) -> Result<(f64, f64)> {
        let dim = self.gain.nrows();
        let prod = &self.gain * &self.gain_inv - DMatrix::<f64>::identity(dim, dim);
        let inf_norm = prod
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let chol = self.gain_inv.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let direct: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        Ok((inf_norm, (self.gain_inv_logdet - direct).abs()))
    }

    /// Extreme eigenvalues `(lambda_min, lambda_max)` of `P^{-1}`.
    pub fn inverse_eigen_extremes(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.gain_inv.clone());
        (eig.eigenvalues.min(), eig.eigenvalues.max())
    }

    /// Advance the step index without an update.
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;

    const PDF_THREE: f64 = 0.004_431_848_411_938_007;

    fn estimator(radius: f64) -> NewtonEstimator {
        NewtonEstimator::new(
            dvector![1.0, 1.0],
            1.0,
            ConstraintSet::cube(2, 6.0).unwrap(),
            NoiseModel::standard_normal(),
            1.0,
            radius,
        )
        .unwrap()
    }

    #[test]
    fn beta_values() {
        let est = estimator(3.0);
        let beta = est.beta_step(FlipProbabilities::NONE).unwrap();
        assert!((beta - PDF_THREE).abs() < 1e-17);
        let neg = est.beta_step(FlipProbabilities::new(0.8, 0.9).unwrap()).unwrap();
        assert!(neg < 0.0);
        assert!((neg + 0.7 * PDF_THREE).abs() < 1e-17);
        assert!(est.beta_step(FlipProbabilities::new(0.5, 0.5).unwrap()).is_err());
    }

    #[test]
    fn first_beta_capped_at_one() {
        // density at 0 for variance 0.01 is ~3.99 > 1
        let est = NewtonEstimator::new(
            dvector![0.0],
            1.0,
            ConstraintSet::cube(1, 1.0).unwrap(),
            NoiseModel::gaussian(0.0, 0.01).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!(est.beta_step(FlipProbabilities::NONE).unwrap(), 1.0);
    }

    #[test]
    fn vanishing_density_rejected() {
        let r = NewtonEstimator::new(
            dvector![1.0, 1.0],
            1.0,
            ConstraintSet::cube(2, 6.0).unwrap(),
            NoiseModel::standard_normal(),
            1.0,
            52.0,
        );
        assert!(matches!(r, Err(Error::DensityVanishes { .. })));
    }

    #[test]
    fn beta_constant_for_stationary_noise() {
        let mut est = estimator(1.0);
        let flips = FlipProbabilities::new(0.2, 0.3).unwrap();
        let mut rng = stream_rng(1, Stream::Input);
        let first = est.update(&dvector![0.5, -0.2], true, flips).unwrap().beta;
        for _ in 0..100 {
            let phi = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert_eq!(est.update(&phi, rng.random(), flips).unwrap().beta, first);
        }
    }

    #[test]
    fn ratchet_keeps_smallest_beta() {
        let mut est = estimator(1.0);
        let strong = FlipProbabilities::NONE;
        let weak = FlipProbabilities::new(0.4, 0.4).unwrap();
        let b0 = est.update(&dvector![0.1, 0.1], true, strong).unwrap().beta;
        let b1 = est.update(&dvector![0.1, 0.1], true, weak).unwrap().beta;
        let b2 = est.update(&dvector![0.1, 0.1], true, strong).unwrap().beta;
        assert!(b1 < b0);
        assert_eq!(b2, b1);

        let mut free = estimator(1.0);
        free.set_ratchet(false);
        let c0 = free.update(&dvector![0.1, 0.1], true, strong).unwrap().beta;
        free.update(&dvector![0.1, 0.1], true, weak).unwrap();
        assert_eq!(free.update(&dvector![0.1, 0.1], true, strong).unwrap().beta, c0);
    }

    #[test]
    fn gain_scalar_values() {
        let est = estimator(1.0);
        assert_eq!(est.gain_scalar(0.7, &dvector![0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(est.gain_scalar(0.0, &dvector![2.0, 1.0]).unwrap(), 1.0);
        assert!((est.gain_scalar(1.0, &dvector![1.0, 1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gain_scalar_identity_random_spd() {
        let mut rng = stream_rng(9, Stream::Input);
        for _ in 0..100 {
            let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let spd = &m * m.transpose() + DMatrix::identity(3, 3) * 0.1;
            let mut est = NewtonEstimator::new(
                dvector![0.0, 0.0, 0.0],
                1.0,
                ConstraintSet::cube(3, 1.0).unwrap(),
                NoiseModel::standard_normal(),
                0.0,
                1.0,
            )
            .unwrap();
            est.gain = spd.clone();
            let phi = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let beta: f64 = rng.random_range(-1.0..1.0);
            let a = est.gain_scalar(beta, &phi).unwrap();
            assert!((a * (1.0 + beta * beta * phi.dot(&(&spd * &phi))) - 1.0).abs() < 1e-12);
            assert!(a > 0.0 && a <= 1.0);
        }
    }

    #[test]
    fn innovation_values() {
        let mut est = estimator(1.0);
        est.theta_hat = dvector![2.0, 0.0];
        let phi = dvector![1.0, 0.0];
        let f = FlipProbabilities::new(0.2, 0.3).unwrap();
        let s = est.innovation(&phi, false, f).unwrap();
        assert!((s - 0.379_327_626_965_728_5).abs() < 1e-14);
        // margin -> +inf with a received one
        let s = est.innovation(&dvector![-1e3, 0.0], true, FlipProbabilities::NONE).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn zero_regressor_changes_nothing() {
        let mut est = estimator(1.0);
        let before = (est.theta_hat().clone(), est.gain().clone(), est.gain_inverse_logdet());
        est.update(&dvector![0.0, 0.0], false, FlipProbabilities::NONE).unwrap();
        assert_eq!(est.theta_hat(), &before.0);
        assert_eq!(est.gain(), &before.1);
        assert_eq!(est.gain_inverse_logdet(), before.2);
    }

    #[test]
    fn one_step_rank_one_update() {
        // beta = 1 requires a density of at least 1 on the interval
        let mut est = NewtonEstimator::new(
            dvector![0.0, 0.0],
            1.0,
            ConstraintSet::cube(2, 6.0).unwrap(),
            NoiseModel::gaussian(0.0, 0.01).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        let step = est.update(&dvector![1.0, 0.0], true, FlipProbabilities::NONE).unwrap();
        assert_eq!(step.beta, 1.0);
        assert!((est.gain() - dmatrix![0.5, 0.0; 0.0, 1.0]).amax() < 1e-15);
        assert!((est.gain_inverse() - dmatrix![2.0, 0.0; 0.0, 1.0]).amax() < 1e-15);
        let direct = est.gain().clone().try_inverse().unwrap();
        assert!((direct - est.gain_inverse()).amax() < 1e-14);
        assert!((est.gain_inverse_logdet() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn estimates_stay_in_set_and_logdet_tracks() {
        let mut est = estimator(0.5);
        let mut rng = stream_rng(21, Stream::Input);
        let flips = FlipProbabilities::new(0.8, 0.9).unwrap();
        let mut prev_logdet = est.gain_inverse_logdet();
        for _ in 0..2000 {
            let phi = dvector![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let step = est.update(&phi, rng.random(), flips).unwrap();
            assert!(step.innovation.abs() <= 1.0);
            assert!(ConstraintSet::cube(2, 6.0).unwrap().contains(est.theta_hat()));
            assert!(est.gain_inverse_logdet() >= prev_logdet);
            prev_logdet = est.gain_inverse_logdet();
        }
        let (inv_err, logdet_err) = est.consistency().unwrap();
        assert!(inv_err < 1e-8, "{inv_err}");
        assert!(logdet_err < 1e-6, "{logdet_err}");
        let (lo, hi) = est.inverse_eigen_extremes();
        assert!(lo > 0.0 && hi >= lo);
    }
}
