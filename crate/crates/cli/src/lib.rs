//! `phonon-sim`: runs the simulations and writes CSV tables plus a JSON
//! manifest into one directory per run.

pub mod config;
mod manifest;
mod run;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{Mode, RunConfig};

/// Default parent directory for run outputs when `--out` is absent.
pub const OUT_DIR_ENV: &str = "PHONON_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numerical(m) => write!(f, "run failed: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<phonon_collapse::Error> for CliError {
    fn from(e: phonon_collapse::Error) -> Self {
        use phonon_collapse::Error as E;
        match e {
            E::InvalidParameter { .. }
            | E::Truncation { .. }
            | E::Dimension { .. }
            | E::DegenerateRates => Self::Config(e.to_string()),
            E::Io { .. } => Self::Io(e.to_string()),
            other => Self::Numerical(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "phonon-sim", version, arg_required_else_help = true)]
#[command(about = "Conditional phonon-number measurement simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Outcome probability p(1) against θ, and single-readout distributions.
    #[command(allow_negative_numbers = true)]
    JcSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta_min: Option<f64>,
        #[arg(long)]
        theta_max: Option<f64>,
        #[arg(long)]
        theta_points: Option<usize>,
        /// Comma-separated angles for the single-readout distributions.
        #[arg(long, value_delimiter = ',')]
        panels: Option<Vec<f64>>,
    },
    /// Repeated x=1 readouts along a θ schedule.
    #[command(allow_negative_numbers = true)]
    JcCollapse {
        #[command(flatten)]
        common: Common,
        /// Constant angle; replaces the seeded schedule.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, requires = "theta")]
        count: Option<usize>,
    },
    /// No-count detection rate of the first measurement.
    #[command(allow_negative_numbers = true)]
    RateProfile {
        #[command(flatten)]
        common: Common,
    },
    /// Repeated photon detections with random detection times.
    #[command(allow_negative_numbers = true)]
    Collapse {
        #[command(flatten)]
        common: Common,
    },
    /// Damped collapse runs over several mechanical damping rates.
    #[command(allow_negative_numbers = true)]
    DampedSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated γ_m values.
        #[arg(long, value_delimiter = ',')]
        gamma_ms: Option<Vec<f64>>,
    },
    /// Collapse run with Wigner grids at selected measurements.
    #[command(allow_negative_numbers = true)]
    Wigner {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run of the same subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $PHONON_OUT_DIR/<subcommand>, else runs/<subcommand>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: available cores]; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectory index; selects random streams 2k and 2k+1.
    #[arg(long)]
    trajectory: Option<u64>,
    #[arg(long)]
    r_max: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    tail_tolerance: Option<f64>,
    #[arg(long)]
    fock_threshold: Option<f64>,
    #[arg(long)]
    idle_dwell: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    kappa1: Option<f64>,
    /// Unit of all rates; values other than 1 trigger a warning.
    #[arg(long)]
    kappa2: Option<f64>,
    #[arg(long)]
    kappa2_prime: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_m: Option<f64>,
    /// Thermal occupation of the mechanical bath.
    #[arg(long)]
    bath_n_bar: Option<f64>,
    /// Coherent initial state with real amplitude β.
    #[arg(long, group = "init")]
    beta: Option<f64>,
    /// Thermal initial state with this mean.
    #[arg(long, group = "init")]
    thermal: Option<f64>,
    /// Number-state initial state.
    #[arg(long, group = "init")]
    fock: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    survival_floor: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    max_restarts: Option<usize>,
    #[arg(long)]
    wigner_points: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    wigner_at: Option<Vec<usize>>,
}

impl Common {
    fn to_config(&self) -> RunConfig {
        use phonon_collapse::InitialState;
        let mut c = RunConfig {
            seed: self.seed,
            trajectory: self.trajectory,
            r_max: self.r_max,
            n_max: self.n_max,
            tail_tolerance: self.tail_tolerance,
            fock_threshold: self.fock_threshold,
            idle_dwell: self.idle_dwell,
            ..Default::default()
        };
        c.initial = match (self.beta, self.thermal, self.fock) {
            (Some(beta), _, _) => Some(InitialState::Coherent { beta }),
            (_, Some(n_bar), _) => Some(InitialState::Thermal { n_bar }),
            (_, _, Some(n)) => Some(InitialState::Fock { n }),
            _ => None,
        };
        let p = &mut c.params;
        p.g = self.g;
        p.kappa1 = self.kappa1;
        p.kappa2 = self.kappa2;
        p.kappa2_prime = self.kappa2_prime;
        p.gamma = self.gamma;
        p.gamma_m = self.gamma_m;
        p.n_bar = self.bath_n_bar;
        let s = &mut c.sampling;
        s.delta = self.delta;
        s.epsilon = self.epsilon;
        s.survival_floor = self.survival_floor;
        s.step = self.step;
        s.max_restarts = self.max_restarts;
        c.wigner.points = self.wigner_points;
        c.wigner.at = self.wigner_at.clone();
        c
    }
}

/// Resolved invocation.
pub struct Invocation {
    pub mode: Mode,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

fn resolve(command: Command) -> Result<Invocation, CliError> {
    let (mode, common, flags) = match command {
        Command::JcSweep {
            common,
            theta_min,
            theta_max,
            theta_points,
            panels,
        } => {
            let mut f = common.to_config();
            f.jc.theta_min = theta_min;
            f.jc.theta_max = theta_max;
            f.jc.theta_points = theta_points;
            f.jc.panels = panels;
            (Mode::JcSweep, common, f)
        }
        Command::JcCollapse {
            common,
            theta,
            count,
        } => {
            let mut f = common.to_config();
            f.jc.schedule = theta.map(|theta| phonon_collapse::ThetaSchedule::Constant {
                theta,
                count: count.unwrap_or(50),
            });
            (Mode::JcCollapse, common, f)
        }
        Command::RateProfile { common } => {
            let f = common.to_config();
            (Mode::RateProfile, common, f)
        }
        Command::Collapse { common } => {
            let f = common.to_config();
            (Mode::Collapse, common, f)
        }
        Command::DampedSweep { common, gamma_ms } => {
            let mut f = common.to_config();
            f.sweep.gamma_m = gamma_ms;
            (Mode::DampedSweep, common, f)
        }
        Command::Wigner { common } => {
            let f = common.to_config();
            (Mode::Wigner, common, f)
        }
    };
    let mut config = RunConfig::defaults(mode);
    if let Some(path) = &common.config {
        config.overlay(&RunConfig::load(path, mode)?);
    }
    config.overlay(&flags);
    config.complete(mode)?;
    config.prune(mode);
    if common.threads == Some(0) {
        return Err(CliError::Config("`--threads` must be at least 1".into()));
    }
    let out_dir = match &common.out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(mode.name()),
    };
    Ok(Invocation {
        mode,
        config,
        out_dir,
        threads: common.threads,
    })
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = resolve(cli.command).and_then(|inv| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(inv.threads.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Config(format!("`--threads`: {e}")))?;
        pool.install(|| run::execute(&inv))
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("phonon-sim: {e}");
            e.exit_code()
        }
    }
}
