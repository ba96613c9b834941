mod common;

use phonon_collapse::cascaded::{
    apply_jump, detection_rate, filter_function, NoCountTrajectory, SubspaceAmplitudes,
    TrajectoryOptions,
};
use phonon_collapse::experiment::{run_batch, ExperimentConfig, InitialState};
use phonon_collapse::fock::coherent_state;
use phonon_collapse::jc::{apply_jc_measurement, InteractionAngle, Readout};
use phonon_collapse::sampling::{find_window, WindowRule, WindowedSampler};
use phonon_collapse::{FockCutoff, Params, State, C};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coherent(beta: f64, n_max: usize) -> State {
    let cutoff = FockCutoff::for_coherent(beta * beta, 1e-8);
    let cutoff = if cutoff.n_max() < n_max {
        FockCutoff::new(n_max).unwrap()
    } else {
        cutoff
    };
    coherent_state(C::new(beta, 0.0), cutoff).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn rate_and_posterior_ignore_mechanical_phases(
        phases in prop::collection::vec(-3.2f64..3.2, 13),
        t in 0.0f64..8.0,
    ) {
        let p = Params::reference();
        let s = coherent(1.5, 12);
        let a = SubspaceAmplitudes::initial(&s).evolved(&p, t);
        let b = SubspaceAmplitudes::initial(&s.with_phases(&phases)).evolved(&p, t);
        prop_assert!((detection_rate(&a, &p) - detection_rate(&b, &p)).abs() < 1e-13);
        if t > 0.05 {
            let da = apply_jump(&a, &p).unwrap().mech_state.number_distribution();
            let db = apply_jump(&b, &p).unwrap().mech_state.number_distribution();
            prop_assert!(da.max_abs_diff(&db) < 1e-12);
        }
    }

    #[test]
    fn no_count_evolution_is_a_semigroup(t1 in 0.0f64..4.0, t2 in 0.0f64..4.0) {
        let p = Params::reference();
        let s = SubspaceAmplitudes::initial(&coherent(2.0, 20));
        let two = s.evolved(&p, t1).evolved(&p, t2);
        let one = s.evolved(&p, t1 + t2);
        for (x, y) in two.blocks().iter().zip(one.blocks()) {
            for k in 0..3 {
                prop_assert!((x[k] - y[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn posterior_is_prior_times_filter(t in 0.05f64..10.0, beta in 0.5f64..2.5) {
        let p = Params::reference();
        let s = coherent(beta, 24);
        let prior = s.number_distribution();
        let psi = SubspaceAmplitudes::initial(&s).evolved(&p, t);
        let post = apply_jump(&psi, &p).unwrap().mech_state.number_distribution();
        let f = filter_function(&p, &prior, t).unwrap();
        for n in 0..prior.probs().len() {
            prop_assert!((prior.probs()[n] * f[n] - post.probs()[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn jc_outcomes_are_complete(theta in 0.0f64..4.0, beta in 0.0f64..3.0) {
        let s = coherent(beta, 64);
        let angle = InteractionAngle::new(theta).unwrap();
        let p1 = apply_jc_measurement(&s, angle, Readout::One).map(|m| m.probability).unwrap_or(0.0);
        let p0 = apply_jc_measurement(&s, angle, Readout::Zero).map(|m| m.probability).unwrap_or(0.0);
        prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
    }
}

fn beta2_trajectory(step: Option<f64>) -> NoCountTrajectory<f64> {
    let p = Params::reference();
    let mut opts = TrajectoryOptions::for_params(&p).with_survival_floor(1e-9);
    if let Some(h) = step {
        opts = opts.with_step(h);
    }
    NoCountTrajectory::simulate(&SubspaceAmplitudes::initial(&coherent(2.0, 24)), &p, &opts)
        .unwrap()
}

#[test]
fn sampled_mean_matches_quadrature_within_three_sigma() {
    let traj = beta2_trajectory(None);
    let profile = traj.profile().unwrap();
    let window = find_window(&profile, &WindowRule::for_kappa2(1.0)).unwrap();
    let sampler = WindowedSampler::new(&profile, &window).unwrap();

    // Moments of the density on the same piecewise-linear rate, from a fine
    // midpoint sum.
    let m = 200_000;
    let dt = (window.t_end - window.t_start) / m as f64;
    let (mut z, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for i in 0..m {
        let t = window.t_start + (i as f64 + 0.5) * dt;
        let r = profile.rate_at(t);
        z += r * dt;
        t1 += t * r * dt;
        t2 += t * t * r * dt;
    }
    let mean = t1 / z;
    let sd = (t2 / z - mean * mean).sqrt();

    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let avg = (0..n).map(|_| sampler.sample(&mut rng)).sum::<f64>() / n as f64;
    let sigma = sd / (n as f64).sqrt();
    assert!(
        (avg - mean).abs() < 3.0 * sigma,
        "{avg} vs {mean} (σ = {sigma})"
    );
}

#[test]
fn window_is_stable_under_grid_refinement() {
    let coarse = beta2_trajectory(Some(0.01));
    let fine = beta2_trajectory(Some(0.005));
    let rule = WindowRule::for_kappa2(1.0);
    let wc = find_window(&coarse.profile().unwrap(), &rule).unwrap();
    let wf = find_window(&fine.profile().unwrap(), &rule).unwrap();
    let h = coarse.step;
    assert!(
        (wc.t_start - wf.t_start).abs() < h,
        "{} vs {}",
        wc.t_start,
        wf.t_start
    );
    assert!(
        (wc.t_end - wf.t_end).abs() < h,
        "{} vs {}",
        wc.t_end,
        wf.t_end
    );
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Median number of detections to reach `max_prob ≥ 0.9` is consistent with
/// `N = c·n̄²` within a factor of 3 over `β ∈ {1, 1.5, 2}`, with `c` the
/// log-space least-squares fit. Runs that never collapse count as `r_max`.
#[test]
fn collapse_time_scales_with_mean_squared() {
    let r_max = 200;
    let seeds: Vec<u64> = (1..=40).collect();
    let mut points = Vec::new();
    for beta in [1.0f64, 1.5, 2.0] {
        let config = ExperimentConfig::new(
            Params::reference(),
            InitialState::Coherent { beta },
            r_max,
            0,
        );
        let traces = run_batch::<f64>(&config, &seeds).unwrap();
        let firsts: Vec<f64> = traces
            .iter()
            .map(|t| t.first_fock().unwrap_or(r_max) as f64)
            .collect();
        points.push((beta * beta, median(firsts)));
    }
    let log_c = points.iter().map(|(n, m)| (m / (n * n)).ln()).sum::<f64>() / points.len() as f64;
    let (x0, y0) = (points[0].0.ln(), points[0].1.ln());
    let (x1, y1) = (points[2].0.ln(), points[2].1.ln());
    eprintln!(
        "medians {points:?}; fitted c = {:.3}; end-to-end exponent {:.2}",
        log_c.exp(),
        (y1 - y0) / (x1 - x0)
    );
    for (n, m) in &points {
        let model = log_c.exp() * n * n;
        assert!(
            m / model <= 3.0 && model / m <= 3.0,
            "n̄ = {n}: median {m} vs {model}"
        );
    }
}
