//! Flat `section.key=value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::control::Reference;
use crate::defense::InsertionSchedule;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::plant::{FlipProbabilities, InputLaw, IDENTIFIABILITY_TOL};
use crate::projection::ConstraintSet;

/// Every recognised key with its default. Defaults describe the
/// low-tamper GRP-TB-KP run of the first experiment.
const DEFAULTS: &[(&str, &str)] = &[
    ("experiment.algorithm", "grp-kp"),
    ("experiment.horizon", "100000"),
    ("experiment.replicas", "50"),
    ("experiment.metrics_stride", "10"),
    ("experiment.full_resolution", "1000"),
    ("experiment.check_stride", "1000"),
    ("seeds.base", "20250711"),
    ("noise.kind", "gaussian"),
    ("noise.mean", "0"),
    ("noise.variance", "1"),
    ("plant.theta", "3,-1"),
    ("sensor.C", "1"),
    ("channel.p", "0.2"),
    ("channel.q", "0.3"),
    ("input.kind", "gaussian"),
    ("input.variance", "2"),
    ("input.variance_decay", "0"),
    ("input.bound_M", "6"),
    ("theta_set.shape", "box"),
    ("theta_set.lower", "-6,-6"),
    ("theta_set.upper", "6,6"),
    ("theta_set.center", "0,0"),
    ("theta_set.radius", "6"),
    ("grad.beta", "80"),
    ("grad.gamma", "1"),
    ("grad.theta0", "1,1"),
    ("grad.excitation_delta", "2"),
    ("newton.P1_scale", "1"),
    ("newton.theta0", "1,1"),
    ("newton.eig_stride", "100"),
    ("newton.density_radius", "auto"),
    ("defense.T", "20"),
    ("defense.slots_zero", "1,3,5,7,9"),
    ("defense.slots_one", "2,4,6,8,10"),
    ("defense.warmup_probes", "1"),
    ("defense.hold_until_warm", "false"),
    ("control.reference.kind", "none"),
    ("control.reference.amplitude", "4"),
    ("control.reference.period", "18000"),
    ("control.theta1_floor", "1e-3"),
    ("control.input_clamp", "50"),
    ("envelope.kind", "auto"),
    ("envelope.exponent", "auto"),
];

/// Raw key/value view of a configuration. Only known keys are accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl Default for ConfigMap {
    fn default() -> Self {
        ConfigMap {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl ConfigMap {
    pub fn known_keys() -> impl Iterator<Item = &'static str> {
        DEFAULTS.iter().map(|(k, _)| *k)
    }

    /// Parse `key=value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            map.set(key.trim(), value.trim())?;
        }
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::invalid(key, "unknown config key")),
        }
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("config key `{key}` missing from defaults"))
    }

    fn parse_value<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| Error::invalid(key, format!("cannot parse `{}`", self.get(key))))
    }

    fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::invalid(key, format!("cannot parse list entry `{s}`")))
            })
            .collect()
    }

    fn parse_vector(&self, key: &str) -> Result<DVector<f64>> {
        let v: Vec<f64> = self.parse_list(key)?;
        if v.is_empty() {
            return Err(Error::invalid(key, "must not be empty"));
        }
        Ok(DVector::from_vec(v))
    }

    pub fn to_text(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    GradientKnown,
    GradientUnknown,
    NewtonKnown,
    NewtonUnknown,
}

impl Algorithm {
    pub fn is_newton(self) -> bool {
        matches!(self, Algorithm::NewtonKnown | Algorithm::NewtonUnknown)
    }

    pub fn estimates_attack(self) -> bool {
        matches!(self, Algorithm::GradientUnknown | Algorithm::NewtonUnknown)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grp-kp" => Ok(Algorithm::GradientKnown),
            "grp-up" => Ok(Algorithm::GradientUnknown),
            "nrp-kp" => Ok(Algorithm::NewtonKnown),
            "nrp-up" => Ok(Algorithm::NewtonUnknown),
            _ => Err(Error::invalid(
                "experiment.algorithm",
                format!("`{s}` is not one of grp-kp, grp-up, nrp-kp, nrp-up"),
            )),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::GradientKnown => "grp-kp",
            Algorithm::GradientUnknown => "grp-up",
            Algorithm::NewtonKnown => "nrp-kp",
            Algorithm::NewtonUnknown => "nrp-up",
        })
    }
}

/// Theoretical rate the averaged metric is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeKind {
    /// `1 / k^a`, fitted to the squared error.
    PowerRate(f64),
    /// `ln k / k^a`, fitted to the squared error.
    LogOverPower(f64),
    /// `log det P_{k+1}^{-1} / beta_k^2`, fitted to the cumulative regret.
    RegretRate,
    /// `sqrt(ln ln k / k)`, fitted to `|J_k - sigma^2|`.
    LilRate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSettings {
    pub beta: f64,
    pub gamma: f64,
    pub theta0: DVector<f64>,
    pub excitation_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSettings {
    pub p1_scale: f64,
    pub theta0: DVector<f64>,
    pub eig_stride: u64,
    pub density_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseSettings {
    pub schedule: InsertionSchedule,
    pub warmup_probes: u64,
    /// Skip estimator updates until both probe kinds reach `warmup_probes`.
    pub hold_until_warm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSettings {
    pub reference: Reference,
    pub theta1_floor: f64,
    pub input_clamp: f64,
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub replicas: u64,
    pub metrics_stride: u64,
    pub full_resolution: u64,
    pub check_stride: u64,
    pub base_seed: u64,
    pub noise: NoiseModel,
    pub theta: DVector<f64>,
    pub threshold: f64,
    pub flips: FlipProbabilities,
    pub input: InputLaw,
    pub input_bound: f64,
    pub theta_set: ConstraintSet,
    pub grad: GradientSettings,
    pub newton: NewtonSettings,
    pub defense: DefenseSettings,
    pub control: Option<ControlSettings>,
    pub envelope: EnvelopeKind,
    source: ConfigMap,
}

fn positive<T: PartialOrd + Default>(key: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(Error::invalid(key, "must be positive"))
    }
}

fn positive_real(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(key, "must be finite and > 0"))
    }
}

impl ExperimentConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let algorithm: Algorithm = map.get("experiment.algorithm").parse()?;
        let horizon: u64 = map.parse_value("experiment.horizon")?;
        let replicas = positive("experiment.replicas", map.parse_value::<u64>("experiment.replicas")?)?;
        let metrics_stride = positive(
            "experiment.metrics_stride",
            map.parse_value::<u64>("experiment.metrics_stride")?,
        )?;
        let full_resolution: u64 = map.parse_value("experiment.full_resolution")?;
        let check_stride = positive(
            "experiment.check_stride",
            map.parse_value::<u64>("experiment.check_stride")?,
        )?;
        let base_seed: u64 = map.parse_value("seeds.base")?;

        let noise = match map.get("noise.kind") {
            "gaussian" => NoiseModel::gaussian(
                map.parse_value("noise.mean")?,
                map.parse_value("noise.variance")?,
            )?,
            other => return Err(Error::invalid("noise.kind", format!("unsupported kind `{other}`"))),
        };

        let theta = map.parse_vector("plant.theta")?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("plant.theta", "entries must be finite"));
        }
        let dim = theta.len();
        let threshold: f64 = map.parse_value("sensor.C")?;
        if !threshold.is_finite() {
            return Err(Error::invalid("sensor.C", "must be finite"));
        }

        let p: f64 = map.parse_value("channel.p")?;
        let q: f64 = map.parse_value("channel.q")?;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid("channel.p", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&q) {
            return Err(Error::invalid("channel.q", "must lie in [0, 1)"));
        }
        if (1.0 - (p + q)).abs() <= IDENTIFIABILITY_TOL {
            return Err(Error::invalid(
                "channel.p+channel.q",
                format!("p + q = {} makes the parameter unidentifiable", p + q),
            ));
        }
        let flips = FlipProbabilities::new(p, q)?;

        let input = match map.get("input.kind") {
            "gaussian" => InputLaw::Gaussian {
                variance: positive_real("input.variance", map.parse_value("input.variance")?)?,
                variance_decay: {
                    let d: f64 = map.parse_value("input.variance_decay")?;
                    if !(d.is_finite() && d >= 0.0) {
                        return Err(Error::invalid("input.variance_decay", "must be finite and >= 0"));
                    }
                    d
                },
            },
            other => return Err(Error::invalid("input.kind", format!("unsupported kind `{other}`"))),
        };
        let input_bound = positive_real("input.bound_M", map.parse_value("input.bound_M")?)?;

        let theta_set = match map.get("theta_set.shape") {
            "box" => {
                ConstraintSet::new_box(map.parse_vector("theta_set.lower")?, map.parse_vector("theta_set.upper")?)
                    .map_err(|e| match e {
                        Error::DimensionMismatch { .. } => {
                            Error::invalid("theta_set.upper", "length differs from theta_set.lower")
                        }
                        other => other,
                    })?
            }
            "ball" => ConstraintSet::new_ball(
                map.parse_vector("theta_set.center")?,
                map.parse_value("theta_set.radius")?,
            )?,
            other => return Err(Error::invalid("theta_set.shape", format!("unsupported shape `{other}`"))),
        };
        if theta_set.dim() != dim {
            return Err(Error::invalid("theta_set", format!("dimension must equal len(plant.theta) = {dim}")));
        }
        if !theta_set.contains(&theta) {
            return Err(Error::invalid("plant.theta", "true parameter must lie in theta_set"));
        }

        let grad = GradientSettings {
            beta: positive_real("grad.beta", map.parse_value("grad.beta")?)?,
            gamma: {
                let g: f64 = map.parse_value("grad.gamma")?;
                if !(g > 0.5 && g <= 1.0) {
                    return Err(Error::invalid("grad.gamma", "must lie in (1/2, 1]"));
                }
                g
            },
            theta0: map.parse_vector("grad.theta0")?,
            excitation_delta: positive_real("grad.excitation_delta", map.parse_value("grad.excitation_delta")?)?,
        };
        if grad.theta0.len() != dim || !theta_set.contains(&grad.theta0) {
            return Err(Error::invalid("grad.theta0", "must have the parameter dimension and lie in theta_set"));
        }

        let density_radius = match map.get("newton.density_radius") {
            "auto" => theta_set.norm_bound() * input_bound + threshold.abs(),
            _ => {
                let r: f64 = map.parse_value("newton.density_radius")?;
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::invalid("newton.density_radius", "must be finite and >= 0"));
                }
                r
            }
        };
        let newton = NewtonSettings {
            p1_scale: positive_real("newton.P1_scale", map.parse_value("newton.P1_scale")?)?,
            theta0: map.parse_vector("newton.theta0")?,
            eig_stride: positive("newton.eig_stride", map.parse_value::<u64>("newton.eig_stride")?)?,
            density_radius,
        };
        if newton.theta0.len() != dim || !theta_set.contains(&newton.theta0) {
            return Err(Error::invalid(
                "newton.theta0",
                "must have the parameter dimension and lie in theta_set",
            ));
        }
        if algorithm.is_newton() {
            noise.density_inf(density_radius).map_err(|e| Error::invalid("newton.density_radius", e.to_string()))?;
        }

        let schedule = InsertionSchedule::new(
            positive("defense.T", map.parse_value::<u64>("defense.T")?)?,
            map.parse_list::<u64>("defense.slots_zero")?,
            map.parse_list::<u64>("defense.slots_one")?,
        )?;
        let defense = DefenseSettings {
            schedule,
            warmup_probes: positive(
                "defense.warmup_probes",
                map.parse_value::<u64>("defense.warmup_probes")?,
            )?,
            hold_until_warm: map.parse_value("defense.hold_until_warm")?,
        };

        let reference = match map.get("control.reference.kind") {
            "none" => None,
            "sinusoid" => Some(Reference::sinusoid(
                map.parse_value("control.reference.amplitude")?,
                map.parse_value("control.reference.period")?,
            )?),
            "constant" => Some(Reference::constant(map.parse_value("control.reference.amplitude")?)?),
            other => {
                return Err(Error::invalid(
                    "control.reference.kind",
                    format!("`{other}` is not one of none, sinusoid, constant"),
                ))
            }
        };
        let control = match reference {
            None => None,
            Some(reference) => Some(ControlSettings {
                reference,
                theta1_floor: positive_real("control.theta1_floor", map.parse_value("control.theta1_floor")?)?,
                input_clamp: positive_real("control.input_clamp", map.parse_value("control.input_clamp")?)?,
            }),
        };

        let exponent = |default: f64| -> Result<f64> {
            match map.get("envelope.exponent") {
                "auto" => Ok(default),
                _ => positive_real("envelope.exponent", map.parse_value("envelope.exponent")?),
            }
        };
        let envelope = match map.get("envelope.kind") {
            "auto" => {
                if control.is_some() {
                    EnvelopeKind::LilRate
                } else if algorithm.is_newton() {
                    EnvelopeKind::LogOverPower(exponent(0.75)?)
                } else {
                    EnvelopeKind::PowerRate(exponent(grad.gamma)?)
                }
            }
            "power_rate" => EnvelopeKind::PowerRate(exponent(grad.gamma)?),
            "log_over_power" => EnvelopeKind::LogOverPower(exponent(0.75)?),
            "regret_rate" => EnvelopeKind::RegretRate,
            "lil_rate" => EnvelopeKind::LilRate,
            other => return Err(Error::invalid("envelope.kind", format!("unknown envelope `{other}`"))),
        };
        if envelope == EnvelopeKind::RegretRate && !algorithm.is_newton() {
            return Err(Error::invalid("envelope.kind", "regret_rate needs a Newton algorithm"));
        }
        if envelope == EnvelopeKind::LilRate && control.is_none() {
            return Err(Error::invalid("envelope.kind", "lil_rate needs a control reference"));
        }

        Ok(ExperimentConfig {
            algorithm,
            horizon,
            replicas,
            metrics_stride,
            full_resolution,
            check_stride,
            base_seed,
            noise,
            theta,
            threshold,
            flips,
            input,
            input_bound,
            theta_set,
            grad,
            newton,
            defense,
            control,
            envelope,
            source: map.clone(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&ConfigMap::parse(text)?)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// The key/value form this configuration was built from.
    pub fn source(&self) -> &ConfigMap {
        &self.source
    }

    /// Whether step `k` produces a stored record.
    pub fn records_step(&self, k: u64) -> bool {
        k <= self.full_resolution || k.is_multiple_of(self.metrics_stride) || k == self.horizon
    }
}
