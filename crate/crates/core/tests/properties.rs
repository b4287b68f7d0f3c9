//! Randomised invariants.

use flrw_perturb::background::{classify_regime, regime_of, solve_background, Regime};
use flrw_perturb::eos::{EquationOfState, PowerTerm};
use flrw_perturb::evolver::{energy_e1, evolve, sample, Dynamics, PerturbationState};
use flrw_perturb::fit::{geomspace, linspace};
use flrw_perturb::latetime::{extract_wave_profile, mode_polar, polar_to_mode, ExtractOptions, WaveProfile};
use flrw_perturb::random::{band_limited, rng_from_seed};
use flrw_perturb::spectral::{
    forward_transform, grid_norm_l2, inverse_transform, laplacian, zero_mean_split, SpectralField, TorusGeometry,
};
use num_complex::Complex64;
use proptest::prelude::*;

const WS: [f64; 4] = [0.0, 1.0 / 9.0, 1.0 / 3.0, 1.0];

fn field(seed: u64, band: i64, n: usize) -> SpectralField {
    let g = TorusGeometry::new(n, 2.0 * std::f64::consts::PI).unwrap();
    band_limited(g, band, true, &mut rng_from_seed(seed)).unwrap()
}

fn state(seed: u64, band: i64, eta: f64) -> PerturbationState {
    let g = TorusGeometry::default();
    let mut rng = rng_from_seed(seed);
    let phi = band_limited(g, band, true, &mut rng).unwrap();
    let dphi = band_limited(g, band, true, &mut rng).unwrap();
    PerturbationState::new(eta, phi, dphi).unwrap()
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    a.sub(b).unwrap().norm_l2() / b.norm_l2()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn parseval(seed in any::<u64>(), n in prop::sample::select(vec![5usize, 9, 17])) {
        let f = field(seed, (n as i64 - 1) / 2, n);
        let grid = inverse_transform(&f);
        let g = grid_norm_l2(f.geometry(), &grid);
        prop_assert!((g - f.norm_l2()).abs() <= 1e-12 * f.norm_l2());
        let back = forward_transform(*f.geometry(), &grid).unwrap();
        prop_assert!(rel(&back, &f) < 1e-13);
    }

    #[test]
    fn operations_keep_hermitian_symmetry(a in any::<u64>(), b in any::<u64>(), s in -3.0f64..3.0) {
        let (f, g) = (field(a, 4, 17), field(b, 4, 17));
        let scale = f.max_abs().max(g.max_abs());
        for h in [laplacian(&f), f.scale(s), f.axpy(s, &g).unwrap(), f.sub(&g).unwrap(), zero_mean_split(&f).1] {
            prop_assert!(h.hermitian_defect() <= 1e-15 * scale * 50.0);
        }
    }

    #[test]
    fn laplacian_commutes_with_zero_mean_split(seed in any::<u64>()) {
        let f = field(seed, 4, 17);
        let left = laplacian(&zero_mean_split(&f).1);
        let right = zero_mean_split(&laplacian(&f)).1;
        prop_assert!(left.sub(&right).unwrap().max_abs() <= 1e-12 * right.max_abs());
    }

    #[test]
    fn polar_form_inverts(psi in -10.0f64..10.0, dpsi in -10.0f64..10.0, k in 0.5f64..8.0, w in 0.01f64..1.0) {
        let (r, th) = mode_polar(psi, dpsi, k, w).unwrap();
        let (p, dp) = polar_to_mode(r, th, k, w).unwrap();
        prop_assert!((p - psi).abs() <= 1e-13 * (1.0 + r));
        prop_assert!((dp - dpsi).abs() <= 1e-13 * (1.0 + r * k));
        // the free rotation leaves r unchanged
        let om = w.sqrt() * k;
        let (p2, dp2) = polar_to_mode(r, th - om * 0.37, k, w).unwrap();
        let (r2, _) = mode_polar(p2, dp2, k, w).unwrap();
        prop_assert!((r2 - r).abs() <= 1e-13 * (1.0 + r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn regime_classifier_matches_the_inequalities(w in 0.0f64..1.0, sigma in 0.01f64..2.0, dust in any::<bool>()) {
        let w = if dust { 0.0 } else { w };
        let eos = EquationOfState::power_law(w, vec![PowerTerm { coeff: 0.3, exponent: sigma + 1.0 }]).unwrap();
        let class = classify_regime(&eos).unwrap();
        let expected = if w > 0.0 || sigma < 1.0 / 3.0 {
            Regime::Underdamped
        } else if sigma == 1.0 / 3.0 {
            Regime::Critical
        } else {
            Regime::Overdamped
        };
        prop_assert_eq!(class.regime, expected);
        prop_assert_eq!(regime_of(w, sigma), expected);
        prop_assert!((class.sigma.unwrap() - sigma).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn background_samples_are_monotone(w in 0.0f64..1.0, c in 0.1f64..1.0) {
        // c = 1 puts the big bang at eta = 0; smaller c moves it earlier
        let eps0 = c * (2.0 / (1.0 + 3.0 * w)).powi(2);
        let traj = solve_background(&EquationOfState::linear(w).unwrap(), 1.0, 1.0, eps0, (1e-2, 1e2), 1e-10).unwrap();
        let s = traj.samples();
        for p in s.windows(2) {
            prop_assert!(p[1].eta > p[0].eta);
            prop_assert!(p[1].a >= p[0].a);
            prop_assert!(p[1].eps <= p[0].eps);
        }
        prop_assert!(traj.constraint_residuals().iter().all(|r| *r <= 1e-9));
    }

    #[test]
    fn evolution_is_linear(a in any::<u64>(), b in any::<u64>(), wi in 0usize..4, c in -2.0f64..2.0) {
        let w = WS[wi];
        let (s1, s2) = (state(a, 4, 0.5), state(b, 4, 0.5));
        let sum = s1.axpy(c, &s2).unwrap();
        let dynamics = Dynamics::linear(w).unwrap();
        let e1 = evolve(&s1, dynamics, 3.0, 1e-12).unwrap();
        let e2 = evolve(&s2, dynamics, 3.0, 1e-12).unwrap();
        let es = evolve(&sum, dynamics, 3.0, 1e-12).unwrap();
        let combined = e1.axpy(c, &e2).unwrap();
        prop_assert!(rel(&es.phi, &combined.phi) <= 1e-11);
        prop_assert!(rel(&es.dphi, &combined.dphi) <= 1e-11);
    }

    #[test]
    fn evolution_reverses(seed in any::<u64>(), wi in 0usize..4, eta1 in 0.05f64..20.0) {
        let tol = 1e-11;
        let s = state(seed, 4, 1.0);
        let dynamics = Dynamics::linear(WS[wi]).unwrap();
        let there = evolve(&s, dynamics, eta1, tol).unwrap();
        let back = evolve(&there, dynamics, 1.0, tol).unwrap();
        prop_assert!(rel(&back.phi, &s.phi) <= 100.0 * tol);
    }

    #[test]
    fn weighted_energy_is_non_decreasing(seed in any::<u64>(), wi in 0usize..4) {
        let w = WS[wi];
        let tol = 1e-12;
        let s = state(seed, 4, 1e-3).zero_mean();
        let times = geomspace(1e-3, 10.0, 60);
        let sol = sample(&s, Dynamics::linear(w).unwrap(), &times, tol).unwrap();
        let weighted: Vec<f64> = (0..times.len()).map(|i| energy_e1(&sol.state(i), w).unwrap().1).collect();
        for p in weighted.windows(2) {
            prop_assert!(p[1] >= p[0] * (1.0 - 10.0 * tol), "{} then {}", p[0], p[1]);
        }
    }
}

fn alphas(p: &WaveProfile) -> Vec<([i64; 3], Complex64)> {
    let g = p.geometry;
    p.modes
        .iter()
        .map(|m| {
            let om = p.w.sqrt() * g.k_unit() * ((m.k[0].pow(2) + m.k[1].pow(2) + m.k[2].pow(2)) as f64).sqrt();
            (m.k, Complex64::from_polar(0.5 * m.wbar, om * m.etabar))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Late enough that the `O(eta^-2)` cross terms between the two
    /// traveling components are below the tolerance.
    #[test]
    fn extraction_is_linear(a in any::<u64>(), b in any::<u64>(), c in -2.0f64..2.0) {
        let w = 1.0 / 3.0;
        let times = linspace(2e4, 2.2e4, 300);
        let (s1, s2) = (state(a, 1, 1.0).zero_mean(), state(b, 1, 1.0).zero_mean());
        let dynamics = Dynamics::linear(w).unwrap();
        let opts = ExtractOptions::default();
        let prof = |s: &PerturbationState| {
            extract_wave_profile(&sample(s, dynamics, &times, 1e-13).unwrap(), w, &opts).unwrap()
        };
        let (p1, p2, ps) = (prof(&s1), prof(&s2), prof(&s1.axpy(c, &s2).unwrap()));
        let (a1, a2, asum) = (alphas(&p1), alphas(&p2), alphas(&ps));
        let peak = asum.iter().map(|x| x.1.norm()).fold(0.0, f64::max);
        for i in 0..asum.len() {
            let err = (asum[i].1 - (a1[i].1 + a2[i].1 * c)).norm();
            prop_assert!(err <= 1e-8 * peak, "k {:?}: {err:e}", asum[i].0);
        }
    }
}
