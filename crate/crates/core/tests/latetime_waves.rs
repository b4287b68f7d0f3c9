//! Late-time wave profiles for radiation, `w = 1/3`.

use flrw_perturb::evolver::{sample, Dynamics, NuIndex, PerturbationState, SampledSolution};
use flrw_perturb::fit::{line, linspace};
use flrw_perturb::latetime::{
    extract_wave_profile, polar_tracks, reconstruct_sampled_from_wave_profile, ExtractOptions, WaveProfile,
};
use flrw_perturb::random::{band_limited, rng_from_seed, DEFAULT_BAND};
use flrw_perturb::spectral::TorusGeometry;

const W: f64 = 1.0 / 3.0;
const TOL: f64 = 1e-12;

fn window() -> Vec<f64> {
    linspace(200.0, 2000.0, 600)
}

fn evolved(seed: u64) -> SampledSolution {
    let g = TorusGeometry::default();
    let mut rng = rng_from_seed(seed);
    let phi = band_limited(g, DEFAULT_BAND, true, &mut rng).unwrap();
    let dphi = band_limited(g, DEFAULT_BAND, true, &mut rng).unwrap();
    let seed_state = PerturbationState::new(1.0, phi, dphi).unwrap();
    sample(&seed_state, Dynamics::linear(W).unwrap(), &window(), TOL).unwrap()
}

fn omega(g: &TorusGeometry, k: [i64; 3]) -> f64 {
    W.sqrt() * g.k_unit() * ((k[0].pow(2) + k[1].pow(2) + k[2].pow(2)) as f64).sqrt()
}

#[test]
fn phase_slope_matches_dispersion() {
    let sol = evolved(21);
    let g = *sol.geometry();
    let prof = extract_wave_profile(&sol, W, &ExtractOptions::default()).unwrap();
    assert!(prof.modes.len() > 600);
    for m in prof.modes.iter().filter(|m| m.resolved) {
        let om = omega(&g, m.k);
        let rel = (m.phase_slope + om).abs() / om;
        assert!(rel <= 1e-5, "k {:?}: slope {} vs {}", m.k, m.phase_slope, -om);
    }
}

#[test]
fn amplitude_drift_is_bounded_by_c_over_eta() {
    let sol = evolved(22);
    let prof = extract_wave_profile(&sol, W, &ExtractOptions::default()).unwrap();
    let tracks = polar_tracks(&sol, W).unwrap();
    let times = sol.times();
    let half = times.len() / 2;
    for t in tracks {
        let m = prof.mode(t.k).unwrap();
        if !m.resolved {
            continue;
        }
        // eta |r / Wbar - 1| stays bounded; the bound is the same on both halves
        let scaled: Vec<f64> = t.r.iter().zip(times).map(|(r, e)| e * (r / m.wbar - 1.0).abs()).collect();
        let c_early = scaled[..half].iter().copied().fold(0.0, f64::max);
        let c_late = scaled[half..].iter().copied().fold(0.0, f64::max);
        assert!(c_late <= 1.1 * c_early + 1e-3, "k {:?}: {c_early} then {c_late}", t.k);
        assert!(c_early < 10.0, "k {:?}: C = {c_early}", t.k);
    }
}

#[test]
fn roundtrip_is_stable_under_far_time_doubling() {
    let sol = evolved(23);
    let opts = ExtractOptions::default();
    let prof = extract_wave_profile(&sol, W, &opts).unwrap();
    let mut previous: Option<WaveProfile> = None;
    for eta_far in [4000.0, 8000.0] {
        let rec = reconstruct_sampled_from_wave_profile(&prof, eta_far, &window(), TOL).unwrap();
        let again = extract_wave_profile(&rec, W, &opts).unwrap();
        assert!(prof.max_gap(&again) <= 1e-3, "eta_far {eta_far}: {:e}", prof.max_gap(&again));
        if let Some(p) = &previous {
            let gap = p.max_gap(&again);
            assert!(gap <= 1e-3, "doubling eta_far moved the profile by {gap:e}");
        }
        let h = again.homogeneous;
        assert!((h.a - prof.homogeneous.a).abs() <= 1e-9 * (1.0 + h.a.abs()));
        previous = Some(again);
    }
}

#[test]
fn reconstruction_reproduces_the_evolved_state() {
    let sol = evolved(24);
    let prof = extract_wave_profile(&sol, W, &ExtractOptions::default()).unwrap();
    let times = [300.0, 1000.0];
    let rec = reconstruct_sampled_from_wave_profile(&prof, 4000.0, &times, TOL).unwrap();
    let reference = {
        let st = sol.state(0);
        sample(&st, Dynamics::linear(W).unwrap(), &times, TOL).unwrap()
    };
    for i in 0..times.len() {
        let (a, b) = (rec.state(i).zero_mean(), reference.state(i).zero_mean());
        let rel = a.phi.sub(&b.phi).unwrap().norm_l2() / b.phi.norm_l2();
        assert!(rel < 1e-3, "eta {}: {rel:e}", times[i]);
    }
}

#[test]
fn zero_mean_part_decays_with_the_predicted_exponent() {
    let sol = evolved(25);
    let nu = NuIndex::new(W).unwrap();
    let g = *sol.geometry();
    // phase-averaged amplitude: sqrt(|Phi_k|^2 + |Phi_k'|^2 / omega^2) summed over modes
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (i, &t) in sol.times().iter().enumerate() {
        let st = sol.state(i);
        let mut e = 0.0;
        for idx in st.phi.half_space() {
            let k = g.wavevector(idx);
            let om = omega(&g, k);
            e += st.phi.get(k).norm_sqr() + st.dphi.get(k).norm_sqr() / (om * om);
        }
        lx.push(t.ln());
        ly.push(0.5 * e.ln());
    }
    let (_, slope) = line(&lx, &ly).unwrap();
    let expected = -(nu.nu + 0.5);
    assert!((slope - expected).abs() <= 0.05, "slope {slope} vs {expected}");
}

#[test]
fn psi_satisfies_its_wave_equation() {
    use flrw_perturb::latetime::psi_transform;
    let sol = evolved(26);
    let nu = NuIndex::new(W).unwrap();
    let st = sol.state(0).zero_mean();
    let eta = 50.0;
    let h = 1e-3;
    let times = [eta - 2.0 * h, eta - h, eta, eta + h, eta + 2.0 * h];
    let s = sample(&st, Dynamics::linear(W).unwrap(), &times, 1e-13).unwrap();
    let psi: Vec<_> = (0..5).map(|i| psi_transform(&s.state(i), W).unwrap()).collect();
    let g = *st.geometry();
    let mut worst: f64 = 0.0;
    for idx in psi[2].psi.half_space() {
        let k = g.wavevector(idx);
        let k2 = (k[0].pow(2) + k[1].pow(2) + k[2].pow(2)) as f64;
        let d = |i: usize| psi[i].dpsi.get(k);
        let d2 = (d(0) - 8.0 * d(1) + 8.0 * d(3) - d(4)) / (12.0 * h);
        let p = psi[2].psi.get(k);
        let resid = d2 + p * (W * k2 - (nu.nu * nu.nu - 0.25) / (eta * eta));
        worst = worst.max(resid.norm());
    }
    let scale = psi[2].psi.max_abs();
    assert!(worst <= 1e-9 * scale, "{worst:e} against {scale:e}");
}
