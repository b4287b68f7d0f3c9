//! Series reconstruction followed by the asymptotic fit.

use flrw_perturb::evolver::NuIndex;
use flrw_perturb::random::{band_limited, rng_from_seed, DEFAULT_BAND};
use flrw_perturb::singularity::{
    build_series, fit_asymptotic_data, reconstruct_from_singularity_data, reconstruct_sampled, FitOptions,
    SingularityData,
};
use flrw_perturb::spectral::{laplacian, SpectralField, TorusGeometry};

const WS: [f64; 4] = [0.0, 1.0 / 9.0, 1.0 / 3.0, 1.0];

fn data(seed: u64) -> SingularityData {
    let g = TorusGeometry::default();
    let mut rng = rng_from_seed(seed);
    SingularityData {
        psi1: band_limited(g, DEFAULT_BAND, true, &mut rng).unwrap(),
        psi2: band_limited(g, DEFAULT_BAND, true, &mut rng).unwrap(),
    }
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    a.sub(b).unwrap().max_abs() / b.max_abs()
}

#[test]
fn roundtrip_recovers_data() {
    let opts = FitOptions::default();
    for seed in [11, 12] {
        let d = data(seed);
        for w in WS {
            let sol = reconstruct_sampled(w, &d, 1e-3, &opts.times(), 8.0, 1e-12).unwrap();
            let fit = fit_asymptotic_data(&sol, w, &opts).unwrap();
            let err = fit.data.relative_error(&d).unwrap();
            assert!(err <= 1e-4, "w = {w}: {err:e}");
        }
    }
}

#[test]
fn fitted_log_terms_follow_the_recursion() {
    let d = data(13);
    let opts = FitOptions::default();
    for w in [1.0 / 9.0, 1.0] {
        let sol = reconstruct_sampled(w, &d, 1e-3, &opts.times(), 8.0, 1e-12).unwrap();
        let fit = fit_asymptotic_data(&sol, w, &opts).unwrap();
        let expected = build_series(w, &d, 8.0).unwrap().term(0.0, 1).unwrap().clone();
        let fitted = fit.log_zero.expect("log column for integer nu");
        assert!(rel(&fitted, &expected) < 1e-2, "w = {w}");
    }
    // at w = 1 the recursion gives (w / 2 nu) Delta psi1 directly
    let sol = reconstruct_sampled(1.0, &d, 1e-3, &opts.times(), 8.0, 1e-12).unwrap();
    let fit = fit_asymptotic_data(&sol, 1.0, &opts).unwrap();
    let direct = laplacian(&d.psi1).scale(0.5);
    assert!(rel(fit.log_zero.as_ref().unwrap(), &direct) < 1e-2);
}

#[test]
fn no_logs_for_non_integer_nu() {
    let d = data(14);
    let opts = FitOptions {
        force_logs: true,
        ..FitOptions::default()
    };
    for w in [0.0, 1.0 / 3.0] {
        let sol = reconstruct_sampled(w, &d, 1e-3, &opts.times(), 8.0, 1e-12).unwrap();
        let fit = fit_asymptotic_data(&sol, w, &opts).unwrap();
        assert!(fit.log_ratio() <= 1e-6, "w = {w}: {:e}", fit.log_ratio());
    }
}

#[test]
fn dust_reconstruction_is_exact() {
    let d = data(15);
    let eta = 0.7;
    let tol = 1e-12;
    let st = reconstruct_from_singularity_data(0.0, &d, 1e-3, eta, 8.0, tol).unwrap();
    let exact = d.psi2.axpy(eta.powi(-5), &d.psi1).unwrap();
    assert!(rel(&st.phi, &exact) < 10.0 * tol);
    let dexact = d.psi1.scale(-5.0 * eta.powi(-6));
    assert!(rel(&st.dphi, &dexact) < 10.0 * tol);
}

#[test]
fn vanishing_psi1_stays_bounded() {
    let mut d = data(16);
    d.psi1 = SpectralField::zeros(*d.psi2.geometry());
    let times = [1e-3, 1e-2, 0.1, 0.5];
    for w in WS {
        let sol = reconstruct_sampled(w, &d, 1e-4, &times, 8.0, 1e-12).unwrap();
        for i in 0..times.len() {
            let st = sol.state(i);
            assert!(st.phi.max_abs() < 2.0 * d.psi2.max_abs(), "w = {w}");
        }
        let early = sol.state(0);
        assert!(rel(&early.phi, &d.psi2) < 1e-3);
    }
}

/// The gap between the truncated series and an evolved solution shrinks like
/// the first omitted power of `eta`.
#[test]
fn series_error_scales_with_first_omitted_exponent() {
    let g = TorusGeometry::default();
    let k = [1, 1, 0];
    let d = SingularityData {
        psi1: SpectralField::from_modes(g, &[(k, num_complex::Complex64::new(1.0, 0.0))]).unwrap(),
        psi2: SpectralField::from_modes(g, &[(k, num_complex::Complex64::new(0.5, 0.0))]).unwrap(),
    };
    for w in [1.0 / 3.0, 1.0] {
        let nu = NuIndex::new(w).unwrap();
        let k_max = 2.0;
        let s = build_series(w, &d, k_max).unwrap();
        let etas = [0.08, 0.04];
        let sol = reconstruct_sampled(w, &d, 1e-4, &etas, 16.0, 1e-13).unwrap();
        let errs: Vec<f64> = etas
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let (p, _) = s.evaluate(e).unwrap();
                (p.get(k) - sol.state(i).phi.get(k)).norm()
            })
            .collect();
        // first omitted exponent: smallest lattice entry above k_max
        let next = flrw_perturb::singularity::exponent_lattice(nu.two_nu(), 8.0)
            .into_iter()
            .find(|&e| e > k_max + 1e-9)
            .unwrap();
        let slope = (errs[0] / errs[1]).ln() / 2f64.ln();
        assert!((slope - next).abs() < 0.35, "w = {w}: slope {slope} vs {next}");
    }
}
