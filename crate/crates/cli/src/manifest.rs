use std::time::{SystemTime, UNIX_EPOCH};

use phonon_collapse::experiment::CollapseTrace;
use phonon_collapse::sampling::WindowDiagnostics;
use serde::Serialize;

use crate::config::RunConfig;

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Run record written last, atomically. Its `config` table fed back through
/// `--config manifest.json` reproduces every CSV byte for byte.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: &'static str,
    pub status: &'static str,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub threads: usize,
    pub config: RunConfig,
    pub rng: Option<RngLayout>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub failure: Option<FailureRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jc: Option<JcSummary>,
}

#[derive(Debug, Serialize)]
pub struct RngLayout {
    pub generator: &'static str,
    pub seed: u64,
    pub trajectory: u64,
    pub detection_time_stream: u64,
    pub restart_decision_stream: u64,
}

impl RngLayout {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        Self {
            generator: "ChaCha8 (rand_chacha), seed_from_u64 + set_stream",
            seed,
            trajectory,
            detection_time_stream: 2 * trajectory,
            restart_decision_stream: 2 * trajectory + 1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FailureRecord {
    pub kind: &'static str,
    pub message: String,
    /// Measurement index that failed, when the failure happened mid-run.
    pub at_measurement: Option<usize>,
    pub gamma_m: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TailAudit {
    pub n_max: usize,
    pub tail_tolerance: f64,
    pub initial_tail_mass: f64,
    pub final_tail_mass: f64,
    /// Largest population of the top kept level over the run.
    pub max_edge_mass: f64,
}

#[derive(Debug, Serialize)]
pub struct MeasurementRecord {
    pub r: usize,
    pub t_r: f64,
    pub restarts: usize,
    pub survival: f64,
    pub error_probability: f64,
    pub recursion_residual: f64,
    pub window: WindowDiagnostics,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub gamma_m: f64,
    pub measurements: usize,
    pub total_restarts: usize,
    pub first_fock: Option<usize>,
    pub final_argmax: usize,
    pub final_max_prob: f64,
    pub ever_bimodal: bool,
    pub tail: TailAudit,
    pub per_measurement: Vec<MeasurementRecord>,
}

impl RunSummary {
    pub fn new(trace: &CollapseTrace<f64>, tail_tolerance: f64) -> Self {
        let m = trace.final_metrics();
        Self {
            gamma_m: trace.gamma_m,
            measurements: trace.len(),
            total_restarts: trace.total_restarts(),
            first_fock: trace.first_fock(),
            final_argmax: m.argmax,
            final_max_prob: m.max_prob,
            ever_bimodal: trace.ever_bimodal(),
            tail: TailAudit {
                n_max: trace.n_max,
                tail_tolerance,
                initial_tail_mass: trace.distributions[0].tail_mass(),
                final_tail_mass: trace.last_distribution().tail_mass(),
                max_edge_mass: trace
                    .metrics
                    .iter()
                    .map(|m| m.edge_mass)
                    .fold(0.0, f64::max),
            },
            per_measurement: trace
                .records
                .iter()
                .map(|r| MeasurementRecord {
                    r: r.r,
                    t_r: r.t_r,
                    restarts: r.restarts,
                    survival: r.survival,
                    error_probability: r.error_probability,
                    recursion_residual: r.recursion_residual,
                    window: r.window,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RateSummary {
    pub points: usize,
    pub t_end: f64,
    pub rate_integral: f64,
    pub error_probability: f64,
    pub final_survival: f64,
    pub dip: Option<f64>,
    pub analytic_dip: Option<f64>,
    pub analytic_max_error: Option<f64>,
    pub window: Option<WindowDiagnostics>,
    pub initial_tail_mass: f64,
}

#[derive(Debug, Serialize)]
pub struct JcSummary {
    pub thetas: Vec<f64>,
    pub history_probability: Option<f64>,
    pub initial_tail_mass: f64,
    pub final_argmax: Option<usize>,
    pub final_max_prob: Option<f64>,
}
