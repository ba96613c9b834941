use std::fs;
use std::path::Path;

use phonon_collapse::experiment::{
    rate_profile_report, run_cascaded_collapse, run_damped_collapse, run_damped_sweep,
    run_jc_protocol, CollapseTrace,
};
use phonon_collapse::export::{
    fmt_float, write_atomic, write_collapse, write_distributions, write_file, write_jc_sweep,
    write_jc_trace, write_keyed_distributions, write_rate_profile, write_sweep_summary,
    write_wigner,
};
use phonon_collapse::jc::{outcome_probability_curve, repeated_conditional_distribution};
use phonon_collapse::{Distribution, InitialState};

use crate::config::Mode;
use crate::manifest::{
    unix_now, FailureRecord, JcSummary, RateSummary, RngLayout, RunManifest, RunSummary,
};
use crate::{CliError, Invocation};

/// Artifacts go straight to disk; the manifest is written last, also on failure.
pub fn execute(inv: &Invocation) -> Result<(), CliError> {
    preflight(inv)?;
    let started = unix_now();
    let mut warnings = Vec::new();
    let kappa2 = inv.config.params().kappa2;
    if inv.config.params.kappa2.is_some() && kappa2 != 1.0 {
        warnings.push(format!(
            "kappa2 = {kappa2}: rates are meant to be given in units of kappa2, so the reference values no longer apply"
        ));
    }
    if inv.mode == Mode::RateProfile && inv.config.params().gamma_m != 0.0 {
        warnings.push("rate-profile uses the undamped model; params.gamma_m is ignored".into());
    }
    for w in &warnings {
        eprintln!("phonon-sim: warning: {w}");
    }
    fs::create_dir_all(&inv.out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", inv.out_dir.display())))?;

    let mut manifest = RunManifest {
        tool: "phonon-sim",
        version: env!("CARGO_PKG_VERSION"),
        core_version: phonon_collapse::VERSION,
        command: inv.mode.name(),
        status: "ok",
        started_unix: started,
        finished_unix: started,
        threads: rayon::current_num_threads(),
        config: inv.config.clone(),
        rng: None,
        outputs: Vec::new(),
        warnings,
        failure: None,
        runs: Vec::new(),
        rate: None,
        jc: None,
    };
    let mut out = Emitter {
        dir: &inv.out_dir,
        manifest: &mut manifest,
    };
    let outcome = inv
        .config
        .to_toml()
        .and_then(|text| {
            out.emit("config.toml", |buf| {
                buf.extend_from_slice(text.as_bytes());
                Ok(())
            })
        })
        .and_then(|()| match inv.mode {
            Mode::JcSweep => jc_sweep(inv, &mut out),
            Mode::JcCollapse => jc_collapse(inv, &mut out),
            Mode::RateProfile => rate_profile(inv, &mut out),
            Mode::Collapse | Mode::Wigner => collapse(inv, &mut out),
            Mode::DampedSweep => damped_sweep(inv, &mut out),
        });
    let error = match outcome {
        Ok(None) => None,
        Ok(Some(failure)) => {
            let e = CliError::Numerical(failure.message.clone());
            manifest.failure = Some(failure);
            Some(e)
        }
        Err(e) => {
            manifest.failure = Some(FailureRecord {
                kind: match e {
                    CliError::Config(_) => "config",
                    CliError::Numerical(_) => "numerical",
                    CliError::Io(_) => "io",
                },
                message: e.to_string(),
                at_measurement: None,
                gamma_m: None,
            });
            Some(e)
        }
    };
    if manifest.failure.is_some() {
        manifest.status = "failed";
    }
    manifest.finished_unix = unix_now();
    let json =
        serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(format!("manifest: {e}")))?;
    write_atomic(&inv.out_dir.join("manifest.json"), &json)?;
    error.map_or(Ok(()), Err)
}

/// Checks that need no numerics, so a bad config leaves no directory behind.
fn preflight(inv: &Invocation) -> Result<(), CliError> {
    let c = &inv.config;
    c.cutoff()?;
    let tol = c.tail_tolerance.unwrap_or(0.0);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Config(format!(
            "key `tail_tolerance` must lie in (0, 1), got {tol}"
        )));
    }
    match inv.mode {
        Mode::JcSweep => {
            let (lo, hi, n) = theta_grid(inv);
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(CliError::Config(format!(
                    "keys `jc.theta_min`/`jc.theta_max` need 0 <= min < max, got {lo}, {hi}"
                )));
            }
            if n < 2 {
                return Err(CliError::Config(
                    "key `jc.theta_points` must be at least 2".into(),
                ));
            }
        }
        Mode::JcCollapse => {
            let schedule = c.jc.schedule.as_ref().expect("filled by complete");
            schedule
                .thetas()
                .map_err(|e| CliError::Config(format!("key `jc.schedule`: {e}")))?;
        }
        Mode::DampedSweep => {
            c.experiment().validate()?;
            let gms = c.sweep.gamma_m.as_deref().unwrap_or(&[]);
            if gms.is_empty() || gms.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(CliError::Config(
                    "key `sweep.gamma_m` needs at least one finite, non-negative value".into(),
                ));
            }
            if !matches!(c.initial, Some(InitialState::Thermal { .. })) {
                return Err(CliError::Config(
                    "key `initial` must be a thermal state for damped-sweep".into(),
                ));
            }
        }
        Mode::RateProfile | Mode::Collapse | Mode::Wigner => c.experiment().validate()?,
    }
    Ok(())
}

struct Emitter<'a> {
    dir: &'a Path,
    manifest: &'a mut RunManifest,
}

impl Emitter<'_> {
    fn emit(
        &mut self,
        name: &str,
        render: impl FnOnce(&mut Vec<u8>) -> phonon_collapse::Result<()>,
    ) -> Result<(), CliError> {
        write_file(&self.dir.join(name), render)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn trace(&mut self, trace: &CollapseTrace<f64>, suffix: &str) -> Result<(), CliError> {
        self.emit(&format!("collapse{suffix}.csv"), |b| {
            write_collapse(b, trace)
        })?;
        self.emit(&format!("dists{suffix}.csv"), |b| {
            write_distributions(b, &trace.distributions, 0)
        })?;
        for snap in &trace.wigner {
            self.emit(&format!("wigner{suffix}_r{}.csv", snap.r), |b| {
                write_wigner(b, &snap.grid)
            })?;
        }
        Ok(())
    }
}

fn theta_grid(inv: &Invocation) -> (f64, f64, usize) {
    let jc = &inv.config.jc;
    (
        jc.theta_min.unwrap_or(0.0),
        jc.theta_max.unwrap_or(0.0),
        jc.theta_points.unwrap_or(0),
    )
}

fn initial_distribution(inv: &Invocation) -> Result<Distribution, CliError> {
    let c = &inv.config;
    let initial = c.initial.expect("filled by defaults");
    Ok(initial.distribution::<f64>(c.cutoff()?, c.tail_tolerance.expect("filled by complete"))?)
}

fn trace_failure(trace: &CollapseTrace<f64>) -> Option<FailureRecord> {
    trace.failure.as_ref().map(|e| FailureRecord {
        kind: "numerical",
        message: e.to_string(),
        at_measurement: Some(trace.len() + 1),
        gamma_m: Some(trace.gamma_m),
    })
}

type Outcome = Result<Option<FailureRecord>, CliError>;

fn jc_sweep(inv: &Invocation, out: &mut Emitter) -> Outcome {
    let dist = initial_distribution(inv)?;
    let (lo, hi, n) = theta_grid(inv);
    let thetas: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let p1 = outcome_probability_curve(&dist, &thetas)?;
    out.emit("jc_sweep.csv", |b| write_jc_sweep(b, &thetas, &p1))?;

    let panels = inv.config.jc.panels.clone().unwrap_or_default();
    let mut posts = Vec::with_capacity(panels.len());
    for &theta in &panels {
        let h = repeated_conditional_distribution(&dist, &[theta])?;
        posts.push(h.distributions[1].clone());
    }
    let keys: Vec<String> = panels.iter().map(|&t| fmt_float(t)).collect();
    out.emit("panels.csv", |b| {
        write_keyed_distributions(b, "theta", &keys, &posts)
    })?;
    out.manifest.jc = Some(JcSummary {
        thetas: panels,
        history_probability: None,
        initial_tail_mass: dist.tail_mass(),
        final_argmax: None,
        final_max_prob: None,
    });
    Ok(None)
}

fn jc_collapse(inv: &Invocation, out: &mut Emitter) -> Outcome {
    let dist = initial_distribution(inv)?;
    let schedule = inv.config.jc.schedule.as_ref().expect("filled by complete");
    let threshold = inv
        .config
        .fock_threshold
        .unwrap_or(phonon_collapse::experiment::FOCK_THRESHOLD);
    let trace = run_jc_protocol(&dist, schedule, threshold)?;
    out.emit("jc_collapse.csv", |b| write_jc_trace(b, &trace))?;
    out.emit("dists.csv", |b| {
        write_distributions(b, &trace.distributions, 0)
    })?;
    let last = trace.metrics.last().expect("initial metrics");
    out.manifest.jc = Some(JcSummary {
        thetas: trace.thetas.clone(),
        history_probability: Some(trace.history_probability),
        initial_tail_mass: dist.tail_mass(),
        final_argmax: Some(last.argmax),
        final_max_prob: Some(last.max_prob),
    });
    Ok(None)
}

fn rate_profile(inv: &Invocation, out: &mut Emitter) -> Outcome {
    let exp = inv.config.experiment();
    let p = exp.params;
    let state = exp
        .initial
        .pure_state::<f64>(exp.cutoff()?, exp.tolerance())?;
    let report = rate_profile_report(
        &p,
        &state,
        &exp.sampling.trajectory_options(&p),
        &exp.sampling.rule(p.kappa2),
    )?;
    out.emit("rate.csv", |b| write_rate_profile(b, &report))?;
    let tr = &report.trajectory;
    out.manifest.rate = Some(RateSummary {
        points: tr.times.len(),
        t_end: tr.end(),
        rate_integral: tr.rate_integral(),
        error_probability: tr.error_probability_total(),
        final_survival: tr.final_survival(),
        dip: report.dip,
        analytic_dip: report.analytic_dip,
        analytic_max_error: report.analytic_max_error,
        window: report.window,
        initial_tail_mass: state.tail_mass(),
    });
    Ok(None)
}

fn collapse(inv: &Invocation, out: &mut Emitter) -> Outcome {
    let exp = inv.config.experiment();
    out.manifest.rng = Some(RngLayout::new(exp.seed, exp.trajectory));
    let trace = if exp.params.gamma_m == 0.0 {
        run_cascaded_collapse::<f64>(&exp)?
    } else {
        run_damped_collapse::<f64>(&exp)?
    };
    out.trace(&trace, "")?;
    out.manifest
        .runs
        .push(RunSummary::new(&trace, exp.tolerance()));
    Ok(trace_failure(&trace))
}

fn damped_sweep(inv: &Invocation, out: &mut Emitter) -> Outcome {
    let exp = inv.config.experiment();
    out.manifest.rng = Some(RngLayout::new(exp.seed, exp.trajectory));
    let gamma_ms = inv.config.sweep.gamma_m.clone().unwrap_or_default();
    let traces = run_damped_sweep::<f64>(&exp, &gamma_ms)?;
    for (gm, trace) in gamma_ms.iter().zip(&traces) {
        out.trace(trace, &format!("_gamma_m_{gm:e}"))?;
        out.manifest
            .runs
            .push(RunSummary::new(trace, exp.tolerance()));
    }
    out.emit("summary.csv", |b| write_sweep_summary(b, &traces))?;
    Ok(traces.iter().find_map(trace_failure))
}
