use nalgebra::DVector;
use proptest::prelude::*;

use tamperid::rng::{stream_rng, Stream};
use tamperid::{
    lil_envelope, ConstraintSet, DefenseState, FlipProbabilities, GradientEstimator, InsertionSchedule, NoiseModel,
    TamperChannel,
};

fn flips() -> impl Strategy<Value = FlipProbabilities> {
    (0.0..1.0f64, 0.0..1.0f64)
        .prop_filter("identifiable", |(p, q)| (p + q - 1.0).abs() > 1e-3)
        .prop_map(|(p, q)| FlipProbabilities::new(p, q).unwrap())
}

fn vec2(range: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-range..range, 2).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gradient_innovation_bounded_by_beta(
        theta0 in vec2(6.0),
        phi in vec2(10.0),
        beta in 0.1..200.0f64,
        received: bool,
        f in flips(),
    ) {
        let est = GradientEstimator::new(
            theta0, beta, 1.0, ConstraintSet::cube(2, 6.0).unwrap(), NoiseModel::standard_normal(), 1.0,
        ).unwrap();
        let s = est.innovation(&phi, received, f).unwrap();
        prop_assert!(s.abs() <= beta * (1.0 + 1e-12));
    }

    #[test]
    fn gradient_step_displacement_bounded(
        theta0 in vec2(6.0),
        phis in prop::collection::vec((vec2(6.0), any::<bool>()), 1..40),
        beta in 0.1..100.0f64,
        gamma in 0.51..1.0f64,
        f in flips(),
    ) {
        let mut est = GradientEstimator::new(
            theta0, beta, gamma, ConstraintSet::cube(2, 6.0).unwrap(), NoiseModel::standard_normal(), 1.0,
        ).unwrap();
        for (phi, received) in phis {
            let before = est.theta_hat().clone();
            let b = est.step_size(est.step_index());
            est.update(&phi, received, f).unwrap();
            let moved = (est.theta_hat() - before).norm();
            prop_assert!(moved <= b * beta * phi.norm() * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn probe_estimates_ignore_data_bits(
        data_a in prop::collection::vec(any::<bool>(), 200),
        data_b in prop::collection::vec(any::<bool>(), 200),
        seed: u64,
    ) {
        // the channel draws one uniform per bit whatever its value, so the
        // probe outcomes cannot depend on the data sent between them
        let schedule = InsertionSchedule::new(20, [1, 3, 5, 7, 9], [2, 4, 6, 8, 10]).unwrap();
        let f = FlipProbabilities::new(0.2, 0.3).unwrap();
        let mut estimates = Vec::new();
        for data in [&data_a, &data_b] {
            let mut channel = TamperChannel::new(f, stream_rng(seed, Stream::Channel)).unwrap();
            let mut defense = DefenseState::new(1);
            for (k, &bit) in (1..).zip(data.iter()) {
                channel.tamper(bit);
                if let Some(sent) = schedule.probe_plan(k).bit() {
                    defense.ingest_probe(sent, channel.tamper(sent));
                }
            }
            estimates.push((defense.p_hat(), defense.q_hat()));
        }
        prop_assert_eq!(estimates[0], estimates[1]);
    }
}

#[test]
fn flip_estimates_follow_iterated_log_envelope() {
    let schedule = InsertionSchedule::new(20, [1, 3, 5, 7, 9], [2, 4, 6, 8, 10]).unwrap();
    let f = FlipProbabilities::new(0.2, 0.3).unwrap();
    let replicas = 50;
    let mut inside = 0;
    let mut final_p_ok = 0;
    for r in 0..replicas {
        let mut channel = TamperChannel::new(f, stream_rng(1000 + r, Stream::Channel)).unwrap();
        let mut defense = DefenseState::new(1);
        let mut ok = true;
        for k in 1..=100_000u64 {
            channel.tamper(false);
            if let Some(sent) = schedule.probe_plan(k).bit() {
                defense.ingest_probe(sent, channel.tamper(sent));
            }
            if k >= 1000 {
                let probes = (k / 20 * 5) as f64;
                if (defense.q_hat() - f.q).abs() > 5.0 * lil_envelope(probes).unwrap() {
                    ok = false;
                }
            }
        }
        inside += usize::from(ok);
        final_p_ok += usize::from((defense.p_hat() - f.p).abs() <= 0.02);
    }
    assert!(inside * 10 >= replicas as usize * 9, "{inside}/{replicas} inside the envelope");
    assert!(final_p_ok * 100 >= replicas as usize * 95, "{final_p_ok}/{replicas} with |p_hat - p| <= 0.02");
}
