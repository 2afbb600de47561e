//! Cross-replica statistics and the theoretical envelopes they are compared with.

use crate::defense::lil_envelope;
use crate::error::{Error, Result};

use super::config::{EnvelopeKind, ExperimentConfig};
use super::run::ReplicaRun;

/// Scalar metrics of one replica at its recorded steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplicaTrace {
    pub ks: Vec<u64>,
    pub sq_error: Vec<f64>,
    /// `k^gamma ||theta_tilde||^2` for `gamma < 1`, `k ||theta_tilde||^2 / ln k`
    /// at `gamma = 1`; for Newton runs `||theta_tilde||^2 lambda_min / ln lambda_max`.
    pub rate_stat: Vec<f64>,
    /// `k ||theta_tilde||^2 / ln k` regardless of the algorithm.
    pub log_rate_stat: Vec<f64>,
    pub regret: Vec<f64>,
    pub logdet: Vec<f64>,
    /// `logdet / beta_k^2`, the raw regret envelope.
    pub regret_scale: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub j: Vec<f64>,
    /// `|J_k - sigma^2|`.
    pub tracking_dev: Vec<f64>,
}

impl ReplicaTrace {
    pub fn from_run(cfg: &ExperimentConfig, run: &ReplicaRun) -> Self {
        let variance = cfg.noise.variance();
        let newton = cfg.algorithm.is_newton();
        let gamma = cfg.grad.gamma;
        let mut t = ReplicaTrace::default();
        for r in &run.records {
            let k = r.k as f64;
            let log_rate = if r.k >= 2 { k * r.sq_error / k.ln() } else { f64::NAN };
            let rate = if newton {
                if r.lambda_max > 1.0 {
                    r.sq_error * r.lambda_min / r.lambda_max.ln()
                } else {
                    f64::NAN
                }
            } else if gamma < 1.0 {
                k.powf(gamma) * r.sq_error
            } else {
                log_rate
            };
            t.ks.push(r.k);
            t.sq_error.push(r.sq_error);
            t.rate_stat.push(rate);
            t.log_rate_stat.push(log_rate);
            t.regret.push(r.regret_cum);
            t.logdet.push(r.logdet_pinv);
            t.regret_scale.push(r.logdet_pinv / (r.beta * r.beta));
            t.p_hat.push(r.p_hat);
            t.q_hat.push(r.q_hat);
            t.j.push(r.j_running);
            t.tracking_dev.push((r.j_running - variance).abs());
        }
        t
    }

    /// Value of a metric at step `k`, if recorded.
    pub fn at(&self, metric: fn(&ReplicaTrace) -> &Vec<f64>, k: u64) -> Option<f64> {
        self.ks.binary_search(&k).ok().map(|i| metric(self)[i])
    }
}

/// Mean and sample standard deviation across replicas at each recorded step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stat {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Stat {
    fn over(traces: &[ReplicaTrace], metric: fn(&ReplicaTrace) -> &Vec<f64>) -> Stat {
        let len = traces.first().map_or(0, |t| t.ks.len());
        let n = traces.len() as f64;
        let mut stat = Stat {
            mean: Vec::with_capacity(len),
            sd: Vec::with_capacity(len),
        };
        for i in 0..len {
            // summed in replica order for a reproducible reduction
            let mean = traces.iter().map(|t| metric(t)[i]).sum::<f64>() / n;
            let var = if traces.len() > 1 {
                traces.iter().map(|t| (metric(t)[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            stat.mean.push(mean);
            stat.sd.push(var.sqrt());
        }
        stat
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateSeries {
    pub replicas: usize,
    pub ks: Vec<u64>,
    pub sq_error: Stat,
    pub rate_stat: Stat,
    pub log_rate_stat: Stat,
    pub regret: Stat,
    pub logdet: Stat,
    pub regret_scale: Stat,
    pub p_hat: Stat,
    pub q_hat: Stat,
    pub j: Stat,
    pub tracking_dev: Stat,
}

impl AggregateSeries {
    pub fn from_traces(traces: &[ReplicaTrace]) -> Result<Self> {
        let ks = traces.first().map(|t| t.ks.clone()).unwrap_or_default();
        if traces.iter().any(|t| t.ks != ks) {
            return Err(Error::Config("replicas recorded different step sets".into()));
        }
        Ok(AggregateSeries {
            replicas: traces.len(),
            sq_error: Stat::over(traces, |t| &t.sq_error),
            rate_stat: Stat::over(traces, |t| &t.rate_stat),
            log_rate_stat: Stat::over(traces, |t| &t.log_rate_stat),
            regret: Stat::over(traces, |t| &t.regret),
            logdet: Stat::over(traces, |t| &t.logdet),
            regret_scale: Stat::over(traces, |t| &t.regret_scale),
            p_hat: Stat::over(traces, |t| &t.p_hat),
            q_hat: Stat::over(traces, |t| &t.q_hat),
            j: Stat::over(traces, |t| &t.j),
            tracking_dev: Stat::over(traces, |t| &t.tracking_dev),
            ks,
        })
    }

    pub fn index_of(&self, k: u64) -> Option<usize> {
        self.ks.binary_search(&k).ok()
    }

    /// The averaged metric an envelope kind bounds.
    pub fn envelope_metric(&self, kind: EnvelopeKind) -> &[f64] {
        match kind {
            EnvelopeKind::PowerRate(_) | EnvelopeKind::LogOverPower(_) => &self.sq_error.mean,
            EnvelopeKind::RegretRate => &self.regret.mean,
            EnvelopeKind::LilRate => &self.tracking_dev.mean,
        }
    }

    /// Unscaled envelope at every recorded step.
    pub fn raw_envelope(&self, kind: EnvelopeKind) -> Result<Vec<f64>> {
        match kind {
            EnvelopeKind::RegretRate => Ok(self.regret_scale.mean.clone()),
            // undefined below k = 3; reported as NaN
            EnvelopeKind::LilRate => Ok(self
                .ks
                .iter()
                .map(|&k| lil_envelope(k as f64).unwrap_or(f64::NAN))
                .collect()),
            _ => envelope_series(kind, &self.ks),
        }
    }
}

/// Unscaled envelope values. The regret envelope depends on the run and is
/// taken from [`AggregateSeries::raw_envelope`] instead.
pub fn envelope_series(kind: EnvelopeKind, ks: &[u64]) -> Result<Vec<f64>> {
    ks.iter()
        .map(|&k| {
            let x = k as f64;
            match kind {
                EnvelopeKind::PowerRate(a) => Ok(x.powf(-a)),
                EnvelopeKind::LogOverPower(a) => Ok(x.ln() / x.powf(a)),
                EnvelopeKind::LilRate => lil_envelope(x),
                EnvelopeKind::RegretRate => Err(Error::invalid(
                    "envelope.kind",
                    "regret_rate depends on the run's log det and beta",
                )),
            }
        })
        .collect()
}

/// Envelope scaled by `c = max metric/raw` over the window `[N/10, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedEnvelope {
    pub kind: EnvelopeKind,
    pub constant: f64,
    pub window: (u64, u64),
    pub values: Vec<f64>,
}

impl FittedEnvelope {
    /// `metric / values` at each recorded step.
    pub fn ratio(&self, metric: &[f64]) -> Vec<f64> {
        metric.iter().zip(&self.values).map(|(m, e)| m / e).collect()
    }
}

pub fn fit_envelope(kind: EnvelopeKind, ks: &[u64], metric: &[f64], raw: &[f64]) -> FittedEnvelope {
    let horizon = ks.last().copied().unwrap_or(0);
    let window = (horizon / 10, horizon);
    let constant = ks
        .iter()
        .zip(metric.iter().zip(raw))
        .filter(|(&k, _)| k >= window.0 && k <= window.1)
        .map(|(_, (m, r))| m / r)
        .filter(|v| v.is_finite())
        .fold(f64::NAN, f64::max);
    FittedEnvelope {
        kind,
        constant,
        window,
        values: raw.iter().map(|r| constant * r).collect(),
    }
}
