//! Late-time regimes of `f = f1 eps^(sigma + 1)` on a dust-like background.

use flrw_perturb::background::{classify_regime, solve_background, tau_limit, BackgroundTrajectory, Regime};
use flrw_perturb::eos::EquationOfState;
use flrw_perturb::evolver::{sample, Dynamics, PerturbationState};
use flrw_perturb::fit::geomspace;
use flrw_perturb::latetime::{
    conjugate, general_latetime_extract, omega_damping, tau_frame, tau_potential, ExtractOptions, LateTimeResult,
};
use flrw_perturb::random::{band_limited, rng_from_seed};
use flrw_perturb::spectral::{laplacian, TorusGeometry};
use num_complex::Complex64;

const TOL: f64 = 1e-11;

fn background(sigma: f64, f1: f64, eta_max: f64) -> BackgroundTrajectory {
    let eos = EquationOfState::pure_power(f1, sigma).unwrap();
    solve_background(&eos, 1.0, 1.0, 1.0, (1.0, eta_max), 1e-12).unwrap()
}

fn data(seed: u64, band: i64) -> PerturbationState {
    let g = TorusGeometry::default();
    let mut rng = rng_from_seed(seed);
    let phi = band_limited(g, band, true, &mut rng).unwrap();
    let dphi = band_limited(g, band, true, &mut rng).unwrap();
    PerturbationState::new(1.0, phi, dphi).unwrap()
}

#[test]
fn regime_partition_on_a_grid() {
    for i in 0..20 {
        for j in 0..20 {
            let w = if i == 0 { 0.0 } else { i as f64 / 19.0 };
            let sigma = 0.05 + j as f64 * 0.05;
            let sigma = if j == 5 { 1.0 / 3.0 } else { sigma };
            let terms = vec![flrw_perturb::eos::PowerTerm {
                coeff: 0.1,
                exponent: sigma + 1.0,
            }];
            let eos = EquationOfState::power_law(w, terms).unwrap();
            let got = classify_regime(&eos).unwrap().regime;
            let expected = if w > 0.0 || sigma < 1.0 / 3.0 - 1e-9 {
                Regime::Underdamped
            } else if (sigma - 1.0 / 3.0).abs() < 1e-9 {
                Regime::Critical
            } else {
                Regime::Overdamped
            };
            assert_eq!(got, expected, "w {w} sigma {sigma}");
        }
    }
}

#[test]
fn tau_limit_is_stable() {
    let a = background(0.5, 0.1, 1e6);
    let b = background(0.5, 0.1, 4e6);
    let ta = tau_limit(&a, (1e5, 1e6)).unwrap().tau_inf;
    let tb = tau_limit(&b, (4e5, 4e6)).unwrap().tau_inf;
    assert!(ta.is_finite() && ta > 0.0);
    assert!((ta - tb).abs() / tb < 1e-2, "{ta} vs {tb}");
}

#[test]
fn frozen_profile_quadratic_coefficient() {
    let sigma = 0.5;
    let traj = background(sigma, 0.1, 1e7);
    let st = data(31, 2);
    let times = geomspace(1e5, 1e7, 40);
    let sol = sample(&st, Dynamics::General(&traj), &times, TOL).unwrap();
    let LateTimeResult::Frozen(p) = general_latetime_extract(&traj, &sol, &ExtractOptions::default()).unwrap() else {
        panic!("expected the overdamped regime");
    };
    // Phi approaches Phi0 like s^2
    let last = sol.state(times.len() - 1).phi;
    assert!(last.sub(&p.phi0).unwrap().norm_l2() < 1e-3 * p.phi0.norm_l2());
    // Q = lambda Delta Phi0 with lambda = -(3 sigma - 1) / (2 (7 - 6 sigma)) = -1/16
    let lambda = -(3.0 * sigma - 1.0) / (2.0 * (7.0 - 6.0 * sigma));
    let expected = laplacian(&p.phi0).scale(lambda);
    let rel = p.quad_coeff.sub(&expected).unwrap().norm_l2() / expected.norm_l2();
    assert!(rel < 0.05, "ratio {} vs {lambda}, L2 error {rel}", p.coefficient_ratio);
}

#[test]
fn critical_htilde_settles() {
    let traj = background(1.0 / 3.0, 0.01, 1e8);
    let st = data(32, 2);
    let sol = sample(&st, Dynamics::General(&traj), &[1e7, 1e8], TOL).unwrap();
    let LateTimeResult::Critical(r) = general_latetime_extract(&traj, &sol, &ExtractOptions::default()).unwrap()
    else {
        panic!("expected the critical regime");
    };
    assert!(r.htilde_variation < 1e-2, "{:?}", r);
    assert!(r.tau_log_slope > 0.0);
}

#[test]
fn tau_form_potential_matches_the_evolution() {
    // Psi_tau tau = Delta Psi + Htilde^2 A Psi along a single evolved mode
    let traj = background(0.2, 0.1, 1e3);
    let g = TorusGeometry::default();
    let k = [1, 1, 0];
    let phi = flrw_perturb::spectral::SpectralField::from_modes(g, &[(k, Complex64::new(1.0, 0.0))]).unwrap();
    let dphi = phi.scale(0.3);
    let st = PerturbationState::new(1.0, phi, dphi).unwrap();
    let omega = omega_damping(&traj).unwrap();
    for eta in [3.0, 30.0, 300.0] {
        let h = 1e-3 * eta;
        let times = [eta - h, eta, eta + h];
        let sol = sample(&st, Dynamics::General(&traj), &times, 1e-13).unwrap();
        let frame = |i: usize| tau_frame(&traj, &omega, times[i]).unwrap();
        let psis: Vec<(Complex64, Complex64)> = (0..3)
            .map(|i| {
                let s = sol.state(i);
                conjugate(&frame(i), s.phi.get(k), s.dphi.get(k))
            })
            .collect();
        let f1 = frame(1);
        let dtau = frame(2).tau - frame(0).tau;
        let psi_tt = (psis[2].1 - psis[0].1) / dtau;
        let a = tau_potential(&traj, eta).unwrap();
        let k2 = 2.0;
        let rhs = psis[1].0 * (-k2 + f1.htilde * f1.htilde * a);
        let rel = (psi_tt - rhs).norm() / (psi_tt.norm() + rhs.norm());
        assert!(rel < 1e-4, "eta {eta}: {rel:e}");
    }
}


#[test]
fn underdamped_waves_in_tau() {
    let traj = background(0.2, 0.1, 1e7);
    let st = data(33, 2);
    let times = geomspace(1e6, 1e7, 800);
    let sol = sample(&st, Dynamics::General(&traj), &times, TOL).unwrap();
    let LateTimeResult::Wave(p) = general_latetime_extract(&traj, &sol, &ExtractOptions::default()).unwrap() else {
        panic!("expected the underdamped regime");
    };
    let g = *sol.geometry();
    for m in p.modes.iter().filter(|m| m.resolved) {
        let om = g.k_unit() * ((m.k[0].pow(2) + m.k[1].pow(2) + m.k[2].pow(2)) as f64).sqrt();
        assert!((m.phase_slope + om).abs() < 1e-4 * om, "{:?}: {}", m.k, m.phase_slope);
    }
    assert!(p.max_residual() < 1e-3);
}

#[test]
fn overdamped_freeze_is_quadratic_in_s() {
    let traj = background(0.5, 0.1, 1e7);
    let st = data(34, 2);
    let times = geomspace(1e5, 1e7, 40);
    let sol = sample(&st, Dynamics::General(&traj), &times, TOL).unwrap();
    let LateTimeResult::Frozen(p) = general_latetime_extract(&traj, &sol, &ExtractOptions::default()).unwrap() else {
        panic!("expected the overdamped regime");
    };
    // s scales like eta^(-1/2): quadrupling eta halves s
    let probe = [2e5, 8e5];
    let at = sample(&st, Dynamics::General(&traj), &probe, TOL).unwrap();
    let gap: Vec<f64> = (0..2).map(|i| at.state(i).phi.sub(&p.phi0).unwrap().norm_l2()).collect();
    let s: Vec<f64> = probe.iter().map(|&e| p.tau_inf - traj.at(e).unwrap().tau).collect();
    let order = (gap[0] / gap[1]).ln() / (s[0] / s[1]).ln();
    assert!((order - 2.0).abs() < 0.05, "order {order}");
}

#[test]
fn underdamped_amplitudes_are_stable_under_window_doubling() {
    let traj = background(0.2, 0.1, 2e7);
    let st = data(35, 2);
    let opts = ExtractOptions::default();
    let profile = |lo: f64, hi: f64| {
        let sol = sample(&st, Dynamics::General(&traj), &geomspace(lo, hi, 800), TOL).unwrap();
        match general_latetime_extract(&traj, &sol, &opts).unwrap() {
            LateTimeResult::Wave(p) => p,
            _ => panic!("expected the underdamped regime"),
        }
    };
    let a = profile(1e6, 1e7);
    let b = profile(2e6, 2e7);
    let peak = a.modes.iter().map(|m| m.wbar).fold(0.0, f64::max);
    for m in a.modes.iter().filter(|m| m.wbar > 1e-3 * peak) {
        let n = b.mode(m.k).unwrap();
        assert!((m.wbar - n.wbar).abs() < 1e-2 * m.wbar, "{:?}: {} vs {}", m.k, m.wbar, n.wbar);
    }
}
