mod common;

use common::*;
use num_complex::Complex64 as C64;
use phonon_collapse::cascaded::{apply_jump, SubspaceAmplitudes, TrajectoryOptions};
use phonon_collapse::damped::{
    apply_jump_damped, rearm_source, DampedOptions, DampedTrajectory, MechanicalDensity,
};
use phonon_collapse::wigner::{wigner_at, DensityMatrix};
use phonon_collapse::{Params, State};

fn test_amplitudes(n_max: usize) -> Vec<C64> {
    let raw: Vec<C64> = (0..=n_max)
        .map(|n| C64::from_polar(1.0 / (1.0 + n as f64), 0.7 * n as f64 + 0.3))
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    raw.into_iter().map(|a| a / norm).collect()
}

#[test]
fn jump_state_matches_full_space() {
    let p = Params::reference();
    let amps = test_amplitudes(5);
    let state = State::from_amplitudes(amps.clone()).unwrap();
    let t = 2.3;
    let ours = SubspaceAmplitudes::initial(&state).evolved(&p, t);
    let jump = apply_jump(&ours, &p).unwrap();

    let space = FullSpace::new(8);
    let psi = evolve_pure(&space.no_count_operator(&p), &space.initial(&amps), t, 4000);
    let after = space.jump(&p).apply(&psi);
    let mech: Vec<C64> = (0..space.d)
        .map(|m| after[space.index(0, 0, 0, m)])
        .collect();
    let norm = mech.iter().map(|a| a.norm_sqr()).sum::<f64>();
    assert!(
        (norm - jump.jump_norm).abs() < 1e-10,
        "{norm} vs {}",
        jump.jump_norm
    );
    let ours_amps = jump.mech_state.amplitudes();
    for (n, a) in ours_amps.iter().enumerate() {
        let b = mech[n] / norm.sqrt();
        assert!((a - b).norm() < 1e-9, "n={n}: {a} vs {b}");
    }
}

fn thermal_like(dim: usize, top: usize) -> Vec<C64> {
    let mut rho = vec![ZERO; dim * dim];
    let w: Vec<f64> = (0..=top).map(|n| 0.6f64.powi(n as i32)).collect();
    let z: f64 = w.iter().sum();
    for (n, x) in w.iter().enumerate() {
        rho[n * dim + n] = C64::new(x / z, 0.0);
    }
    // a little coherence so off-diagonal bands are exercised
    rho[1] = C64::new(0.05, 0.02);
    rho[dim] = C64::new(0.05, -0.02);
    rho
}

fn compare_damped(p: Params, crate_dim: usize, top: usize, tol_rate: f64, tol_mech: f64) {
    let oracle_d = crate_dim + 1;
    let mech0 = thermal_like(crate_dim, top);
    let mech = MechanicalDensity::new(crate_dim, mech0.clone()).unwrap();
    let options = DampedOptions::from_pure(&TrajectoryOptions::for_params(&p).with_step(0.01));
    let traj = DampedTrajectory::simulate(&rearm_source(&mech), &p, &options).unwrap();

    let oracle = DenseDamped::new(oracle_d, &p);
    let mut embedded = vec![ZERO; oracle_d * oracle_d];
    for n in 0..crate_dim {
        for m in 0..crate_dim {
            embedded[n * oracle_d + m] = mech0[n * crate_dim + m];
        }
    }
    let mut rho = oracle.space.initial_density(&embedded);
    let h = 0.0025;
    let substeps = 4;
    let mut worst = 0.0f64;
    for (i, &t) in traj.times.iter().enumerate().take(801) {
        if i > 0 {
            for _ in 0..substeps {
                rho = oracle.step(&rho, h);
            }
        }
        assert!((t - i as f64 * 0.01).abs() < 1e-12);
        worst = worst.max((oracle.detection_rate(&p, &rho) - traj.rate[i]).abs());
        if i == 400 {
            let ours = apply_jump_damped(&traj.state_at(t).unwrap(), &p)
                .unwrap()
                .mech_density;
            let theirs = oracle.jump_mechanics(&p, &rho);
            let mut diff = 0.0f64;
            for n in 0..crate_dim {
                for m in 0..crate_dim {
                    diff = diff.max((ours.get(n, m) - theirs[n * oracle_d + m]).norm());
                }
            }
            assert!(diff < tol_mech, "post-jump mechanics differ by {diff:e}");
        }
    }
    assert!(worst < tol_rate, "rate differs by {worst:e}");
}

#[test]
fn damped_matches_dense_liouvillian_at_zero_temperature() {
    let p = Params::reference().with_damping(0.02, 0.0);
    compare_damped(p, 8, 5, 1e-9, 1e-9);
}

#[test]
fn damped_matches_dense_liouvillian_with_heating() {
    // Heating lets a phonon return from |0,1,0,0>, which the block model drops;
    // the gap is second order in γ_m N̄ over the window.
    let p = Params::reference().with_damping(0.002, 0.5);
    compare_damped(p, 10, 5, 5e-6, 5e-6);
}

#[test]
fn wigner_matches_laguerre_kernel() {
    let dim = 7;
    let amps = test_amplitudes(dim - 1);
    let mut rho = vec![ZERO; dim * dim];
    for m in 0..dim {
        for n in 0..dim {
            rho[m * dim + n] = amps[m] * amps[n].conj();
        }
    }
    let ours = DensityMatrix::new(dim, rho.clone()).unwrap();
    for &(x, p) in &[
        (0.0, 0.0),
        (0.4, -1.1),
        (-2.0, 0.7),
        (1.5, 1.5),
        (3.0, -0.2),
    ] {
        let a = wigner_at(&ours, x, p);
        let b = wigner_laguerre(&rho, dim, x, p);
        assert!((a - b).abs() < 1e-12, "({x},{p}): {a} vs {b}");
    }
}

#[test]
fn wigner_of_coherent_state_is_a_gaussian() {
    let beta = C64::new(0.8, -0.5);
    let dim = 30;
    let mut amps = vec![C64::new((-beta.norm_sqr() / 2.0).exp(), 0.0)];
    for n in 1..dim {
        let prev = amps[n - 1];
        amps.push(prev * beta / (n as f64).sqrt());
    }
    let mut rho = vec![ZERO; dim * dim];
    for m in 0..dim {
        for n in 0..dim {
            rho[m * dim + n] = amps[m] * amps[n].conj();
        }
    }
    let ours = DensityMatrix::new(dim, rho).unwrap();
    let (x0, p0) = (beta.re * 2f64.sqrt(), beta.im * 2f64.sqrt());
    for &(x, p) in &[(0.0, 0.0), (1.1, -0.7), (-1.0, 1.0)] {
        let exact = (-(x - x0).powi(2) - (p - p0).powi(2)).exp() / std::f64::consts::PI;
        assert!((wigner_at(&ours, x, p) - exact).abs() < 1e-12);
    }
}

#[test]
fn analytic_oracle_zero_is_a_root() {
    let t = analytic_zero(0.9, 1.0);
    assert!(analytic_rate(t, 0.9, 1.0).abs() < 1e-14);
    assert!((t - 1.0259).abs() < 1e-3);
}
