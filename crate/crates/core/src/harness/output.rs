//! CSV, manifest and gnuplot files for a finished experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::config::EnvelopeKind;
use super::ExperimentResult;

pub const CSV_HEADER: &str = "k,mean_sq_error,sd_sq_error,mean_rate_stat,mean_regret,mean_logdet,\
mean_p_hat,mean_q_hat,mean_J,envelope_value,mean_log_rate_stat";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub gnuplot: Option<PathBuf>,
}

fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || (1e-4..1e7).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn envelope_label(kind: EnvelopeKind) -> String {
    match kind {
        EnvelopeKind::PowerRate(a) => format!("power_rate({a})"),
        EnvelopeKind::LogOverPower(a) => format!("log_over_power({a})"),
        EnvelopeKind::RegretRate => "regret_rate".into(),
        EnvelopeKind::LilRate => "lil_rate".into(),
    }
}

pub fn csv_text(result: &ExperimentResult) -> String {
    let s = &result.series;
    let mut out = String::with_capacity(s.ks.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, k) in s.ks.iter().enumerate() {
        let row = [
            s.sq_error.mean[i],
            s.sq_error.sd[i],
            s.rate_stat.mean[i],
            s.regret.mean[i],
            s.logdet.mean[i],
            s.p_hat.mean[i],
            s.q_hat.mean[i],
            s.j.mean[i],
            result.envelope.values[i],
            s.log_rate_stat.mean[i],
        ];
        out.push_str(&k.to_string());
        for v in row {
            out.push(',');
            out.push_str(&num(v));
        }
        out.push('\n');
    }
    out
}

pub fn manifest_text(result: &ExperimentResult, name: &str, csv_name: &str) -> String {
    let mut m = String::new();
    let cfg = &result.config;
    let _ = writeln!(m, "library={} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "run.name={name}");
    let _ = writeln!(m, "run.csv={csv_name}");
    let _ = writeln!(m, "run.status={}", if result.is_complete() { "complete" } else { "partial" });
    let _ = writeln!(m, "run.replicas_requested={}", cfg.replicas);
    let _ = writeln!(m, "run.replicas_completed={}", result.series.replicas);
    let _ = writeln!(m, "run.threads={}", result.threads);
    let _ = writeln!(m, "run.wall_time_s={:.3}", result.wall_time.as_secs_f64());
    let _ = writeln!(m, "envelope.kind={}", envelope_label(result.envelope.kind));
    let _ = writeln!(m, "envelope.constant={}", num(result.envelope.constant));
    let _ = writeln!(m, "envelope.window={}..{}", result.envelope.window.0, result.envelope.window.1);
    for (k, v) in &result.notes {
        let _ = writeln!(m, "derived.{k}={v}");
    }
    for f in &result.failures {
        let _ = writeln!(m, "failure.{}={}", f.replica, f.message.replace('\n', " "));
    }
    for (i, d) in result.diagnostics.iter().enumerate() {
        let _ = writeln!(
            m,
            "replica.{i}=seed:{} bound_violations:{} guarded_control:{} held_updates:{} refactorizations:{} max_inverse_residual:{} max_logdet_drift:{}",
            d.seed,
            d.regressor_bound_violations,
            d.guarded_control_steps,
            d.held_updates,
            d.refactorizations,
            num(d.max_inverse_residual),
            num(d.max_logdet_drift)
        );
    }
    for line in cfg.source().to_text().lines() {
        let _ = writeln!(m, "config.{line}");
    }
    m
}

pub fn gnuplot_text(result: &ExperimentResult, csv_name: &str) -> String {
    let metric = match result.envelope.kind {
        EnvelopeKind::PowerRate(_) | EnvelopeKind::LogOverPower(_) => (2, "mean squared error"),
        EnvelopeKind::RegretRate => (5, "mean cumulative regret"),
        EnvelopeKind::LilRate => (9, "mean J"),
    };
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale xy\n\
         set xlabel 'k'\n\
         set terminal pngcairo size 900,600\n\
         set output '{stem}.png'\n\
         plot '{csv}' using 1:{col} with lines title '{title}', \\\n     '{csv}' using 1:10 with lines dashtype 2 title 'envelope'\n",
        stem = csv_name.trim_end_matches(".csv"),
        csv = csv_name,
        col = metric.0,
        title = metric.1,
    )
}

/// Writes `<name>.csv`, `<name>.manifest` and optionally `<name>.gp` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path, name: &str, gnuplot: bool) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let csv_name = format!("{name}.csv");
    let csv = dir.join(&csv_name);
    fs::write(&csv, csv_text(result))?;
    let manifest = dir.join(format!("{name}.manifest"));
    fs::write(&manifest, manifest_text(result, name, &csv_name))?;
    let gnuplot = if gnuplot {
        let path = dir.join(format!("{name}.gp"));
        fs::write(&path, gnuplot_text(result, &csv_name))?;
        Some(path)
    } else {
        None
    };
    Ok(OutputFiles { csv, manifest, gnuplot })
}
