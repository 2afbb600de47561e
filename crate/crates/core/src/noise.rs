//! Conditional noise laws `F_k`, `f_k` consumed by the estimators.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Density values below this are treated as vanishing.
///
/// A Gaussian density at 13 standard deviations is about 8e-38; any gain
/// built from such a value is numerically meaningless.
pub const DENSITY_FLOOR: f64 = 1e-36;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// An absolutely continuous noise law with known distribution and density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { mean: f64, variance: f64 },
}

impl NoiseModel {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid("noise.mean", "must be finite"));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid("noise.variance", "must be finite and > 0"));
        }
        Ok(NoiseModel::Gaussian { mean, variance })
    }

    pub fn standard_normal() -> Self {
        NoiseModel::Gaussian {
            mean: 0.0,
            variance: 1.0,
        }
    }

    /// Distribution function `F(x) = P(w <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { mean, variance } => {
                let z = (x - mean) / (variance.sqrt() * std::f64::consts::SQRT_2);
                // erfc keeps full relative accuracy in the lower tail.
                0.5 * libm::erfc(-z)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let z = (x - mean) / sd;
                FRAC_1_SQRT_2PI / sd * (-0.5 * z * z).exp()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { variance, .. } => variance,
        }
    }

    /// Infimum of the density over the closed interval `[-radius, radius]`.
    ///
    /// Fails when the infimum falls below [`DENSITY_FLOOR`], i.e. the density
    /// effectively vanishes somewhere on the interval.
    pub fn density_inf(&self, radius: f64) -> Result<f64> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::invalid("radius", "must be finite and >= 0"));
        }
        let value = match *self {
            // Unimodal about the mean: the minimum sits at the endpoint
            // farthest from the mode.
            NoiseModel::Gaussian { mean, .. } => {
                let far = if mean >= 0.0 { -radius } else { radius };
                self.pdf(far)
            }
        };
        if !(value > DENSITY_FLOOR) {
            return Err(Error::DensityVanishes { radius, value });
        }
        Ok(value)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
        }
    }
}

/// Per-step noise law. Time-varying laws implement this directly; a plain
/// [`NoiseModel`] is the stationary case.
pub trait NoiseSchedule {
    fn at(&self, k: u64) -> &NoiseModel;
}

impl NoiseSchedule for NoiseModel {
    fn at(&self, _k: u64) -> &NoiseModel {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Frozen from a 40-digit evaluation of the normal distribution.
    const CDF_MINUS_ONE: f64 = 0.158_655_253_931_457_05;
    const PDF_ZERO: f64 = 0.398_942_280_401_432_7;
    const PDF_THREE: f64 = 0.004_431_848_411_938_007;

    /// Independent erf oracle: Maclaurin series for small arguments,
    /// Lentz continued fraction for erfc in the tail.
    fn oracle_cdf(x: f64) -> f64 {
        let z = x / std::f64::consts::SQRT_2;
        if z.abs() < 1.0 {
            let mut term = z;
            let mut sum = z;
            let mut n = 0.0;
            loop {
                n += 1.0;
                term *= -z * z / n;
                let add = term / (2.0 * n + 1.0);
                sum += add;
                if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                    break;
                }
            }
            0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
        } else {
            let a = z.abs();
            // erfc(a) = exp(-a^2)/sqrt(pi) * 1/(a + 1/2/(a + 1/(a + 3/2/(a + ...))))
            let mut f = a;
            let mut c = a;
            let mut d = 0.0;
            for i in 1..5000 {
                let an = i as f64 / 2.0;
                d = a + an * d;
                d = 1.0 / d;
                c = a + an / c;
                let delta = c * d;
                f *= delta;
                if (delta - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            let erfc = (-a * a).exp() / std::f64::consts::PI.sqrt() / f;
            if z > 0.0 {
                1.0 - 0.5 * erfc
            } else {
                0.5 * erfc
            }
        }
    }

    #[test]
    fn standard_normal_values() {
        let n = NoiseModel::standard_normal();
        assert_eq!(n.cdf(0.0), 0.5);
        assert!((n.cdf(-1.0) - 0.158_655_25).abs() < 1e-8);
        assert!((n.cdf(-1.0) - CDF_MINUS_ONE).abs() < 1e-15);
        assert_eq!(n.cdf(f64::INFINITY), 1.0);
        assert_eq!(n.cdf(f64::NEG_INFINITY), 0.0);
        assert!((n.pdf(0.0) - 0.398_942_28).abs() < 1e-8);
        assert!((n.pdf(0.0) - PDF_ZERO).abs() < 1e-16);
        assert_eq!(n.pdf(5.0), n.pdf(-5.0));
    }

    #[test]
    fn cdf_matches_series_oracle() {
        let n = NoiseModel::standard_normal();
        let mut x = -8.0;
        while x <= 8.0 {
            let want = oracle_cdf(x);
            let got = n.cdf(x);
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-13, "x={x} got={got} want={want}");
            x += 0.125;
        }
        // lower tail keeps relative accuracy
        let tail = 6.220_960_574_271_784e-16;
        assert!(((n.cdf(-8.0) - tail) / tail).abs() < 1e-13);
    }

    #[test]
    fn scale_family() {
        let wide = NoiseModel::gaussian(0.0, 4.0).unwrap();
        let unit = NoiseModel::standard_normal();
        assert!((wide.pdf(0.0) - 0.5 * unit.pdf(0.0)).abs() < 1e-16);
    }

    #[test]
    fn means() {
        assert_eq!(NoiseModel::standard_normal().mean(), 0.0);
        assert_eq!(NoiseModel::gaussian(0.3, 1.0).unwrap().mean(), 0.3);
        assert_eq!(NoiseModel::gaussian(0.0, 2.0).unwrap().mean(), 0.0);
    }

    #[test]
    fn rejects_bad_variance() {
        assert!(NoiseModel::gaussian(0.0, 0.0).is_err());
        assert!(NoiseModel::gaussian(0.0, -1.0).is_err());
        assert!(NoiseModel::gaussian(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn density_infimum() {
        let n = NoiseModel::standard_normal();
        assert!((n.density_inf(0.0).unwrap() - PDF_ZERO).abs() < 1e-16);
        assert_eq!(n.density_inf(1.0).unwrap(), n.pdf(1.0));
        assert!((n.density_inf(3.0).unwrap() - PDF_THREE).abs() < 1e-17);
        // pdf(13) ~ 8e-38: representable, but flagged as vanishing
        match n.density_inf(13.0) {
            Err(Error::DensityVanishes { value, .. }) => assert!(value < 1e-36 && value > 0.0),
            other => panic!("expected vanishing density, got {other:?}"),
        }
        assert!(n.density_inf(f64::NAN).is_err());
    }

    #[test]
    fn density_infimum_off_center() {
        let n = NoiseModel::gaussian(0.5, 1.0).unwrap();
        assert_eq!(n.density_inf(1.0).unwrap(), n.pdf(-1.0));
        let n = NoiseModel::gaussian(-0.5, 1.0).unwrap();
        assert_eq!(n.density_inf(1.0).unwrap(), n.pdf(1.0));
    }

    #[test]
    fn pdf_integrates_to_one() {
        // composite Simpson on [-12, 12]
        let n = NoiseModel::gaussian(0.4, 1.7).unwrap();
        let (a, b, m) = (-12.0, 12.0, 24_000);
        let h = (b - a) / m as f64;
        let mut s = n.pdf(a) + n.pdf(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * n.pdf(a + i as f64 * h);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn derivative_of_cdf_is_pdf() {
        let n = NoiseModel::standard_normal();
        let h = 1e-5;
        let mut x = -5.0;
        while x <= 5.0 {
            let fd = (n.cdf(x + h) - n.cdf(x - h)) / (2.0 * h);
            assert!((fd - n.pdf(x)).abs() < 1e-6, "x={x}");
            x += 0.05;
        }
    }

    proptest! {
        #[test]
        fn cdf_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0, var in 0.01f64..10.0) {
            let n = NoiseModel::gaussian(0.0, var).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(n.cdf(lo) <= n.cdf(hi));
            prop_assert!((0.0..=1.0).contains(&n.cdf(lo)));
        }

        #[test]
        fn density_inf_nonincreasing(r1 in 0.0f64..8.0, dr in 0.0f64..4.0) {
            let n = NoiseModel::standard_normal();
            prop_assert!(n.density_inf(r1).unwrap() >= n.density_inf(r1 + dr).unwrap());
        }
    }
}
