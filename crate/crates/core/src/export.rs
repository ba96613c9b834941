//! CSV writers with fixed column schemas.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which round-trips
//! `f64` exactly, and rows come out in a fixed order so repeated runs produce
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cascaded::NoCountTrajectory;
use crate::error::{Error, Result};
use crate::experiment::{CollapseTrace, JcTrace, RateReport};
use crate::fock::NumberDistribution;
use crate::scalar::Real;
use crate::wigner::PhaseSpaceGrid;

pub const COLLAPSE_HEADER: [&str; 17] = [
    "r",
    "t_r",
    "entropy",
    "variance",
    "argmax",
    "max_prob",
    "mean",
    "is_fock",
    "bimodal",
    "edge_mass",
    "restarts",
    "survival",
    "error_probability",
    "t_start",
    "t_end",
    "in_window_mass",
    "recursion_residual",
];

pub const RATE_HEADER: [&str; 10] = [
    "t",
    "rate",
    "survival",
    "source",
    "cavity",
    "interference",
    "loss_kappa1",
    "loss_kappa2_prime",
    "error_probability",
    "analytic",
];

pub const WIGNER_HEADER: [&str; 3] = ["x", "p", "w"];

pub const JC_SWEEP_HEADER: [&str; 2] = ["theta", "p1"];

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn f<T: Real>(x: T) -> String {
    fmt_float(x.to_f64_lossy())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        path: "<csv>".into(),
        reason: e.to_string(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Header `r,p0,...,p{n_max}`; one row per distribution, indexed from `first_r`.
pub fn write_distributions<T: Real, W: Write>(
    out: W,
    distributions: &[NumberDistribution<T>],
    first_r: usize,
) -> Result<()> {
    let keys: Vec<String> = (0..distributions.len())
        .map(|i| (first_r + i).to_string())
        .collect();
    write_keyed_distributions(out, "r", &keys, distributions)
}

/// Same layout as [`write_distributions`] with a caller-chosen first column.
/// Shorter distributions are padded with zeros.
pub fn write_keyed_distributions<T: Real, W: Write>(
    out: W,
    key: &str,
    keys: &[String],
    distributions: &[NumberDistribution<T>],
) -> Result<()> {
    let width = distributions
        .iter()
        .map(|d| d.probs().len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![key.to_string()];
    header.extend((0..width).map(|n| format!("p{n}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, d) in keys.iter().zip(distributions) {
        let mut row = vec![k.clone()];
        row.extend((0..width).map(|n| f(d.probs().get(n).copied().unwrap_or(T::zero()))));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// One row per measurement; row `r = 0` is the initial distribution and leaves
/// the detection columns empty.
pub fn write_collapse<T: Real, W: Write>(out: W, trace: &CollapseTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLLAPSE_HEADER).map_err(csv_err)?;
    for (r, m) in trace.metrics.iter().enumerate() {
        let mut row = vec![
            r.to_string(),
            String::new(),
            f(m.entropy),
            f(m.variance),
            m.argmax.to_string(),
            f(m.max_prob),
            f(m.mean),
            u8::from(m.is_fock).to_string(),
            u8::from(m.bimodal).to_string(),
            f(m.edge_mass),
        ];
        match r.checked_sub(1).and_then(|i| trace.records.get(i)) {
            Some(rec) => {
                row[1] = f(rec.t_r);
                row.extend([
                    rec.restarts.to_string(),
                    f(rec.survival),
                    f(rec.error_probability),
                    fmt_float(rec.window.t_start),
                    fmt_float(rec.window.t_end),
                    fmt_float(rec.window.in_window_mass),
                    f(rec.recursion_residual),
                ]);
            }
            None => row.extend(std::iter::repeat_n(String::new(), 7)),
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Long format, `x` outer and `p` inner.
pub fn write_wigner<T: Real, W: Write>(out: W, grid: &PhaseSpaceGrid<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WIGNER_HEADER).map_err(csv_err)?;
    for (ix, &x) in grid.x.iter().enumerate() {
        for (ip, &p) in grid.p.iter().enumerate() {
            w.write_record([f(x), f(p), f(grid.at(ix, ip))])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Rate table with its three-term split; `analytic` is empty without an overlay.
pub fn write_rate_profile<T: Real, W: Write>(out: W, report: &RateReport<T>) -> Result<()> {
    let tr: &NoCountTrajectory<T> = &report.trajectory;
    let perr = tr.error_probability();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATE_HEADER).map_err(csv_err)?;
    for i in 0..tr.times.len() {
        let analytic = report
            .analytic
            .as_ref()
            .map(|a| f(a[i]))
            .unwrap_or_default();
        w.write_record([
            f(tr.times[i]),
            f(tr.rate[i]),
            f(tr.survival[i]),
            f(tr.source_rate[i]),
            f(tr.cavity_rate[i]),
            f(tr.interference_rate[i]),
            f(tr.loss_kappa1[i]),
            f(tr.loss_kappa2_prime[i]),
            f(perr[i]),
            analytic,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub const SWEEP_SUMMARY_HEADER: [&str; 11] = [
    "gamma_m",
    "measurements",
    "final_argmax",
    "final_max_prob",
    "final_entropy",
    "final_mean",
    "final_variance",
    "first_fock",
    "ever_bimodal",
    "restarts",
    "failed",
];

/// One row per sweep trace; `first_fock` is empty when the run never collapsed.
pub fn write_sweep_summary<T: Real, W: Write>(out: W, traces: &[CollapseTrace<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_SUMMARY_HEADER).map_err(csv_err)?;
    for t in traces {
        let m = t.final_metrics();
        w.write_record([
            fmt_float(t.gamma_m),
            t.len().to_string(),
            m.argmax.to_string(),
            f(m.max_prob),
            f(m.entropy),
            f(m.mean),
            f(m.variance),
            t.first_fock().map(|r| r.to_string()).unwrap_or_default(),
            u8::from(t.ever_bimodal()).to_string(),
            t.total_restarts().to_string(),
            u8::from(t.failure.is_some()).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_jc_sweep<T: Real, W: Write>(out: W, thetas: &[T], p1: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(JC_SWEEP_HEADER).map_err(csv_err)?;
    for (&t, &p) in thetas.iter().zip(p1) {
        w.write_record([f(t), f(p)]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Header `r,theta,step_probability,entropy,variance,argmax,max_prob`.
pub fn write_jc_trace<T: Real, W: Write>(out: W, trace: &JcTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "r",
        "theta",
        "step_probability",
        "entropy",
        "variance",
        "argmax",
        "max_prob",
    ])
    .map_err(csv_err)?;
    for (r, m) in trace.metrics.iter().enumerate() {
        let (theta, p) = match r.checked_sub(1) {
            Some(i) => (f(trace.thetas[i]), f(trace.step_probabilities[i])),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.to_string(),
            theta,
            p,
            f(m.entropy),
            f(m.variance),
            m.argmax.to_string(),
            f(m.max_prob),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".into(),
    });
    {
        let mut file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        file.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        file.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Renders with `render` into memory, then writes atomically.
pub fn write_file(path: &Path, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    render(&mut buf).map_err(|e| match e {
        Error::Io { reason, .. } => Error::Io {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })?;
    write_atomic(path, &buf)
}
