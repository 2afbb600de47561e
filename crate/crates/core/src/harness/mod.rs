//! Monte Carlo experiment runner.

mod aggregate;
mod config;
mod output;
mod presets;
mod run;

use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use aggregate::{envelope_series, fit_envelope, AggregateSeries, FittedEnvelope, ReplicaTrace, Stat};
pub use config::{
    Algorithm, ConfigMap, ControlSettings, DefenseSettings, EnvelopeKind, ExperimentConfig, GradientSettings,
    NewtonSettings,
};
pub use output::{csv_text, manifest_text, write_outputs, OutputFiles, CSV_HEADER};
pub use presets::{example1, example1_suite, ATTACKS, example2, example2_suite, example3, example3_suite, Preset};
pub use run::{run_replica, ProbeEvent, ReplicaDiagnostics, ReplicaRun, StepRecord};

use crate::error::{Error, Result};
use crate::gradient::rate_gain_threshold;

/// Environment variable capping the number of replicas run concurrently.
pub const THREADS_ENV: &str = "TAMPERID_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaFailure {
    pub replica: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub series: AggregateSeries,
    pub envelope: FittedEnvelope,
    /// Per-replica traces of the successful replicas, in replica order.
    pub traces: Vec<ReplicaTrace>,
    pub diagnostics: Vec<ReplicaDiagnostics>,
    pub failures: Vec<ReplicaFailure>,
    /// Derived quantities reported in the manifest.
    pub notes: Vec<(String, String)>,
    pub wall_time: Duration,
    pub threads: usize,
}

impl ExperimentResult {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Thread cap from [`THREADS_ENV`]; `None` lets rayon decide.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::invalid(THREADS_ENV, format!("`{v}` is not a positive integer"))),
        },
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_threads(cfg, threads_from_env()?)
}

pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let outcomes: Vec<(u64, Result<(ReplicaTrace, ReplicaDiagnostics)>)> = pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|i| {
                let out = run_replica(cfg, i).map(|run| (ReplicaTrace::from_run(cfg, &run), run.diagnostics));
                (i, out)
            })
            .collect()
    });

    let mut traces = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failures = Vec::new();
    for (replica, outcome) in outcomes {
        match outcome {
            Ok((trace, diag)) => {
                traces.push(trace);
                diagnostics.push(diag);
            }
            Err(err) => failures.push(ReplicaFailure {
                replica,
                message: err.to_string(),
            }),
        }
    }

    let series = AggregateSeries::from_traces(&traces)?;
    let raw = series.raw_envelope(cfg.envelope)?;
    let envelope = fit_envelope(cfg.envelope, &series.ks, series.envelope_metric(cfg.envelope), &raw);

    Ok(ExperimentResult {
        notes: derived_notes(cfg),
        config: cfg.clone(),
        series,
        envelope,
        traces,
        diagnostics,
        failures,
        wall_time: start.elapsed(),
        threads: pool.current_num_threads(),
    })
}

/// Gain threshold for the gradient rate and the density bounds behind it.
fn derived_notes(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let mut notes = Vec::new();
    if cfg.algorithm.is_newton() {
        notes.push(("newton.density_radius".into(), cfg.newton.density_radius.to_string()));
        if let Ok(f) = cfg.noise.density_inf(cfg.newton.density_radius) {
            notes.push((
                "newton.beta_bound".into(),
                (cfg.flips.contrast().abs() * f).min(1.0).to_string(),
            ));
        }
    } else {
        let radius = cfg.threshold.abs() + cfg.input_bound * cfg.theta_set.norm_bound();
        notes.push(("grad.density_radius".into(), radius.to_string()));
        match cfg.noise.density_inf(radius) {
            Ok(f) => {
                let threshold = rate_gain_threshold(cfg.flips, f, cfg.grad.excitation_delta);
                notes.push(("grad.density_lower".into(), f.to_string()));
                notes.push(("grad.rate_gain_threshold".into(), threshold.to_string()));
                notes.push(("grad.beta_exceeds_threshold".into(), (cfg.grad.beta > threshold).to_string()));
            }
            Err(err) => {
                notes.push(("grad.density_lower".into(), "unavailable".into()));
                notes.push(("grad.rate_gain_threshold".into(), format!("unavailable ({err})")));
            }
        }
    }
    notes
}
