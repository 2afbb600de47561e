//! One Monte Carlo replica: plant, sensor, channel, defense, estimator and
//! (optionally) controller wired together for `horizon` steps.

use nalgebra::DVector;

use crate::control::Controller;
use crate::defense::DefenseState;
use crate::error::{Error, Result};
use crate::gradient::GradientEstimator;
use crate::newton::NewtonEstimator;
use crate::plant::{BinarySensor, FirPlant, FirWindow, RegressorKind, RegressorSource, TamperChannel};
use crate::rng::{replica_seed, stream_rng, Stream};

use super::config::{Algorithm, ExperimentConfig};

/// Tolerances of the periodic Newton self-check.
const INVERSE_TOL: f64 = 1e-6;
const LOGDET_TOL: f64 = 1e-6;

/// A probe bit inserted after the data bit of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeEvent {
    pub sent: bool,
    pub received: bool,
}

/// Trace of step `k`. `theta_hat` and `sq_error` refer to the estimate
/// after the update of step `k`; `regret_cum` includes `(theta_tilde_k^T phi_k)^2`
/// computed with the estimate before it. Columns that do not apply to the
/// configured algorithm are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    pub phi: DVector<f64>,
    pub y: f64,
    pub s0: bool,
    pub s: bool,
    pub probe: Option<ProbeEvent>,
    pub theta_hat: DVector<f64>,
    pub sq_error: f64,
    pub regret_cum: f64,
    pub p_hat: f64,
    pub q_hat: f64,
    pub beta: f64,
    pub logdet_pinv: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub u: f64,
    pub y_star: f64,
    pub j_running: f64,
    /// The update was skipped: warm-up, or degenerate flip estimates.
    pub held: bool,
}

/// Counters gathered along a replica.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplicaDiagnostics {
    pub seed: u64,
    pub regressor_bound_violations: u64,
    pub guarded_control_steps: u64,
    pub held_updates: u64,
    pub warmup_holds: u64,
    pub refactorizations: u64,
    pub max_inverse_residual: f64,
    pub max_logdet_drift: f64,
    pub final_theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRun {
    pub replica: u64,
    pub records: Vec<StepRecord>,
    pub diagnostics: ReplicaDiagnostics,
}

enum Estimator {
    Gradient(GradientEstimator),
    Newton(NewtonEstimator),
}

impl Estimator {
    fn theta_hat(&self) -> &DVector<f64> {
        match self {
            Estimator::Gradient(e) => e.theta_hat(),
            Estimator::Newton(e) => e.theta_hat(),
        }
    }

    fn hold(&mut self) {
        match self {
            Estimator::Gradient(e) => e.hold(),
            Estimator::Newton(e) => e.hold(),
        }
    }
}

enum Drive {
    Open(RegressorSource),
    Closed { controller: Controller, monitor: RegressorSource },
}

fn breakdown(step: u64, err: Error) -> Error {
    match err {
        Error::NumericalBreakdown { .. } => err,
        other => Error::NumericalBreakdown {
            step,
            reason: other.to_string(),
        },
    }
}

pub fn run_replica(cfg: &ExperimentConfig, replica: u64) -> Result<ReplicaRun> {
    let seed = replica_seed(cfg.base_seed, replica);
    let dim = cfg.dim();
    let mut plant = FirPlant::new(cfg.theta.clone(), cfg.noise, stream_rng(seed, Stream::PlantNoise))?;
    let sensor = BinarySensor::new(cfg.threshold)?;
    let mut channel = TamperChannel::new(cfg.flips, stream_rng(seed, Stream::Channel))?;

    let mut drive = match cfg.control {
        None => Drive::Open(RegressorSource::new(
            RegressorKind::FirWindow(FirWindow::new(cfg.input, dim, stream_rng(seed, Stream::Input))),
            cfg.input_bound,
        )?),
        Some(ctrl) => {
            let mut rng = stream_rng(seed, Stream::Input);
            let past: Vec<f64> = (1..dim).map(|_| cfg.input.sample(1, &mut rng)).collect();
            Drive::Closed {
                controller: Controller::new(&past, ctrl.input_clamp, ctrl.theta1_floor)?,
                monitor: RegressorSource::new(
                    RegressorKind::External {
                        stream: Vec::new(),
                        cursor: 0,
                    },
                    cfg.input_bound,
                )?,
            }
        }
    };

    let mut estimator = if cfg.algorithm.is_newton() {
        let mut e = NewtonEstimator::new(
            cfg.newton.theta0.clone(),
            cfg.newton.p1_scale,
            cfg.theta_set.clone(),
            cfg.noise,
            cfg.threshold,
            cfg.newton.density_radius,
        )?;
        if cfg.algorithm == Algorithm::NewtonUnknown {
            e.set_ratchet(false);
        }
        Estimator::Newton(e)
    } else {
        Estimator::Gradient(GradientEstimator::new(
            cfg.grad.theta0.clone(),
            cfg.grad.beta,
            cfg.grad.gamma,
            cfg.theta_set.clone(),
            cfg.noise,
            cfg.threshold,
        )?)
    };

    let mut defense = cfg
        .algorithm
        .estimates_attack()
        .then(|| DefenseState::new(cfg.defense.warmup_probes));

    let capacity = cfg.horizon.min(cfg.full_resolution) + cfg.horizon / cfg.metrics_stride + 1;
    let mut records = Vec::with_capacity(capacity as usize);
    let mut diag = ReplicaDiagnostics {
        seed,
        ..Default::default()
    };
    let mut regret = 0.0;
    let mut track_sum = 0.0;
    let (mut lambda_min, mut lambda_max) = match &estimator {
        Estimator::Newton(e) => e.inverse_eigen_extremes(),
        Estimator::Gradient(_) => (f64::NAN, f64::NAN),
    };
    let mut beta = f64::NAN;

    for k in 1..=cfg.horizon {
        let (phi, y_star) = match &mut drive {
            Drive::Open(source) => (source.next(k)?, f64::NAN),
            Drive::Closed { controller, monitor } => {
                let reference = cfg.control.map(|c| c.reference).expect("closed loop has a reference");
                let target = reference.value(k + 1);
                let action = controller.control(estimator.theta_hat(), &cfg.noise, target)?;
                monitor.observe(&action.regressor);
                (action.regressor, target)
            }
        };

        let prior_error = estimator.theta_hat().dot(&phi) - cfg.theta.dot(&phi);
        regret += prior_error * prior_error;

        let y = plant.step(&phi)?;
        let s0 = sensor.sense(y);
        let s = channel.tamper(s0);

        let mut probe = None;
        if let Some(state) = defense.as_mut() {
            if let Some(sent) = cfg.defense.schedule.probe_plan(k).bit() {
                let received = channel.tamper(sent);
                state.ingest_probe(sent, received);
                probe = Some(ProbeEvent { sent, received });
            }
        }
        let flips = match &defense {
            Some(state) => state.estimates(),
            None => cfg.flips,
        };

        let mut held = false;
        let warming = cfg.defense.hold_until_warm && defense.as_ref().is_some_and(|d| !d.is_warmed_up());
        let outcome = match &mut estimator {
            _ if warming => {
                estimator.hold();
                diag.warmup_holds += 1;
                held = true;
                Ok(())
            }
            Estimator::Gradient(e) => e.update(&phi, s, flips).map(|_| ()),
            Estimator::Newton(e) => {
                if let Some(state) = &defense {
                    if state.is_warmed_up() {
                        e.set_ratchet(true);
                    }
                }
                e.update(&phi, s, flips).map(|step| {
                    beta = step.beta;
                    if step.refactored {
                        diag.refactorizations += 1;
                    }
                })
            }
        };
        match outcome {
            Ok(()) => {}
            Err(Error::Degenerate { .. }) if defense.is_some() => {
                estimator.hold();
                diag.held_updates += 1;
                held = true;
            }
            Err(err) => return Err(breakdown(k, err)),
        }

        if let Estimator::Newton(e) = &estimator {
            if k % cfg.check_stride == 0 || k == cfg.horizon {
                let (inv, drift) = e.consistency().map_err(|err| breakdown(k, err))?;
                diag.max_inverse_residual = diag.max_inverse_residual.max(inv);
                diag.max_logdet_drift = diag.max_logdet_drift.max(drift);
                if !(inv < INVERSE_TOL && drift < LOGDET_TOL) {
                    return Err(Error::NumericalBreakdown {
                        step: k,
                        reason: format!("gain/inverse drift: residual {inv:e}, logdet {drift:e}"),
                    });
                }
            }
            if k % cfg.newton.eig_stride == 0 || k == cfg.horizon {
                (lambda_min, lambda_max) = e.inverse_eigen_extremes();
            }
        }

        let deviation = y - y_star;
        if cfg.control.is_some() {
            track_sum += deviation * deviation;
        }

        if cfg.records_step(k) {
            let theta_hat = estimator.theta_hat().clone();
            let sq_error = (&theta_hat - &cfg.theta).norm_squared();
            let (p_hat, q_hat) = match &defense {
                Some(state) => (state.p_hat(), state.q_hat()),
                None => (f64::NAN, f64::NAN),
            };
            let logdet_pinv = match &estimator {
                Estimator::Newton(e) => e.gain_inverse_logdet(),
                Estimator::Gradient(_) => f64::NAN,
            };
            records.push(StepRecord {
                k,
                u: phi[0],
                phi,
                y,
                s0,
                s,
                probe,
                theta_hat,
                sq_error,
                regret_cum: regret,
                p_hat,
                q_hat,
                beta,
                logdet_pinv,
                lambda_min,
                lambda_max,
                y_star,
                j_running: if cfg.control.is_some() {
                    track_sum / k as f64
                } else {
                    f64::NAN
                },
                held,
            });
        }
    }

    diag.final_theta = estimator.theta_hat().iter().copied().collect();
    match &drive {
        Drive::Open(source) => diag.regressor_bound_violations = source.violations(),
        Drive::Closed { controller, monitor } => {
            diag.regressor_bound_violations = monitor.violations();
            diag.guarded_control_steps = controller.guarded_steps();
        }
    }
    Ok(ReplicaRun {
        replica,
        records,
        diagnostics: diag,
    })
}
