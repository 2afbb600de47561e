//! Configurations of the three reference experiments.

use super::config::ConfigMap;

/// A named configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preset {
    pub name: String,
    pub config: ConfigMap,
}

/// Attack pairs `(p, q)` used throughout.
pub const ATTACKS: [(f64, f64); 2] = [(0.2, 0.3), (0.8, 0.9)];

// Practical density radius for the Newton gain. The literal bound
// `B M + |C|` makes the density infimum vanish for the Gaussian noise.
const NEWTON_RADIUS: &str = "1";
const NEWTON_P1_SCALE: &str = "1";
const NEWTON_WARMUP: &str = "20";

fn build(pairs: &[(&str, String)]) -> ConfigMap {
    let mut map = ConfigMap::default();
    for (k, v) in pairs {
        map.set(k, v).expect("preset keys are known");
    }
    map
}

/// First experiment: gradient estimator, `(p, q)` attack, step exponent
/// `gamma`, with the flip probabilities known or estimated online.
pub fn example1(attack: (f64, f64), gamma: f64, known: bool) -> Preset {
    let algorithm = if known { "grp-kp" } else { "grp-up" };
    let name = format!("example1_{algorithm}_p{}_q{}_gamma{}", attack.0, attack.1, gamma);
    Preset {
        name,
        config: build(&[
            ("experiment.algorithm", algorithm.into()),
            ("experiment.horizon", "100000".into()),
            ("experiment.replicas", "50".into()),
            ("channel.p", attack.0.to_string()),
            ("channel.q", attack.1.to_string()),
            ("grad.gamma", gamma.to_string()),
            ("grad.beta", "80".into()),
            ("grad.theta0", "1,1".into()),
            ("input.variance", "2".into()),
        ]),
    }
}

/// Known-attack runs for both pairs and both exponents, then the
/// unknown-attack runs for both pairs.
pub fn example1_suite() -> Vec<Preset> {
    let mut out = Vec::new();
    for attack in ATTACKS {
        for gamma in [1.0, 0.8] {
            out.push(example1(attack, gamma, true));
        }
    }
    for attack in ATTACKS {
        out.push(example1(attack, 1.0, false));
    }
    out
}

/// Second experiment: Newton estimator with online flip estimates and a
/// decaying input variance `sigma_k^2 = k^{-1/4}`.
pub fn example2() -> Preset {
    Preset {
        name: "example2_nrp-up_p0.1_q0.2".into(),
        config: build(&[
            ("experiment.algorithm", "nrp-up".into()),
            ("experiment.horizon", "20000".into()),
            ("experiment.replicas", "50".into()),
            ("channel.p", "0.1".into()),
            ("channel.q", "0.2".into()),
            ("input.variance", "1".into()),
            ("input.variance_decay", "0.25".into()),
            ("newton.theta0", "1,1".into()),
            ("newton.P1_scale", NEWTON_P1_SCALE.into()),
            ("newton.density_radius", NEWTON_RADIUS.into()),
            ("defense.warmup_probes", NEWTON_WARMUP.into()),
        ]),
    }
}

pub fn example2_suite() -> Vec<Preset> {
    vec![example2()]
}

/// Third experiment: adaptive tracking of `4 sin(2 pi k / 18000)`.
pub fn example3(attack: (f64, f64)) -> Preset {
    Preset {
        name: format!("example3_nrp-up_p{}_q{}", attack.0, attack.1),
        config: build(&[
            ("experiment.algorithm", "nrp-up".into()),
            ("experiment.horizon", "20000".into()),
            ("experiment.replicas", "20".into()),
            ("channel.p", attack.0.to_string()),
            ("channel.q", attack.1.to_string()),
            ("newton.theta0", "1,1".into()),
            ("newton.P1_scale", NEWTON_P1_SCALE.into()),
            ("newton.density_radius", NEWTON_RADIUS.into()),
            ("defense.warmup_probes", NEWTON_WARMUP.into()),
            ("control.reference.kind", "sinusoid".into()),
            ("control.reference.amplitude", "4".into()),
            ("control.reference.period", "18000".into()),
        ]),
    }
}

pub fn example3_suite() -> Vec<Preset> {
    ATTACKS.iter().map(|&a| example3(a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Algorithm, EnvelopeKind, ExperimentConfig};

    #[test]
    fn every_preset_validates() {
        let all: Vec<Preset> = example1_suite()
            .into_iter()
            .chain(example2_suite())
            .chain(example3_suite())
            .collect();
        assert_eq!(all.len(), 9);
        for p in &all {
            ExperimentConfig::from_map(&p.config).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
        let names: std::collections::BTreeSet<_> = all.iter().map(|p| &p.name).collect();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn preset_contents() {
        let e1 = ExperimentConfig::from_map(&example1((0.8, 0.9), 0.8, false).config).unwrap();
        assert_eq!(e1.algorithm, Algorithm::GradientUnknown);
        assert_eq!(e1.grad.gamma, 0.8);
        assert_eq!(e1.envelope, EnvelopeKind::PowerRate(0.8));
        let e2 = ExperimentConfig::from_map(&example2().config).unwrap();
        assert_eq!(e2.horizon, 20000);
        assert_eq!(e2.input.variance_at(256), 0.25);
        assert_eq!(e2.envelope, EnvelopeKind::LogOverPower(0.75));
        let e3 = ExperimentConfig::from_map(&example3((0.2, 0.3)).config).unwrap();
        assert_eq!(e3.replicas, 20);
        assert_eq!(e3.envelope, EnvelopeKind::LilRate);
    }
}
