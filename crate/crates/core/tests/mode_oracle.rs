//! Per-mode evolution against the Bessel-function solution
//! `u = eta^-nu (c1 J_nu(omega eta) + c2 Y_nu(omega eta))`, `omega = sqrt(w) |k|`.

use flrw_perturb::evolver::{sample, Dynamics, NuIndex, PerturbationState};
use flrw_perturb::fit::geomspace;
use flrw_perturb::random::rng_from_seed;
use flrw_perturb::spectral::{SpectralField, TorusGeometry};
use num_complex::Complex64;
use rand::RngExt;
use std::f64::consts::PI;

struct Oracle {
    nu: f64,
    omega: f64,
    c1: f64,
    c2: f64,
}

impl Oracle {
    /// `(u, u')` at `eta`.
    fn eval(&self, eta: f64) -> (f64, f64) {
        let x = self.omega * eta;
        let (j, y, dj, dy) = puruspe::besseljy(self.nu, x);
        let z = self.c1 * j + self.c2 * y;
        let dz = self.omega * (self.c1 * dj + self.c2 * dy);
        let p = eta.powf(-self.nu);
        (p * z, p * dz - self.nu / eta * p * z)
    }
}

// Accuracy of the library degrades slowly with the argument (about 1e-11 at
// x = 1000), far below the 1e-8 the oracle is used for.
#[test]
fn bessel_values_match_half_integer_closed_forms() {
    for &x in &[0.05, 0.7, 3.0, 17.5, 240.0, 900.0] {
        let s = (2.0 / (PI * x)).sqrt();
        let (j, y, dj, _) = puruspe::besseljy(0.5, x);
        assert!((j - s * x.sin()).abs() < 1e-10 * s, "J1/2({x})");
        assert!((y + s * x.cos()).abs() < 1e-10 * s, "Y1/2({x})");
        let dj_exact = s * (x.cos() - x.sin() / (2.0 * x));
        assert!((dj - dj_exact).abs() < 1e-10 * s.max(s / x));
        let (j, y, _, _) = puruspe::besseljy(1.5, x);
        let j_exact = s * (x.sin() / x - x.cos());
        let y_exact = -s * (x.cos() / x + x.sin());
        let scale = s * (1.0 + 1.0 / x);
        assert!((j - j_exact).abs() < 1e-10 * scale, "J3/2({x}) {j} {j_exact}");
        assert!((y - y_exact).abs() < 1e-10 * scale, "Y3/2({x})");
    }
}

#[test]
fn oracle_solves_the_mode_equation() {
    let o = Oracle { nu: 1.5, omega: 2.0, c1: 0.3, c2: -1.1 };
    let w = 1.0 / 3.0;
    let k2 = o.omega * o.omega / w;
    let fr = NuIndex::new(w).unwrap().friction();
    for &eta in &[0.1, 1.0, 7.0] {
        let h = 1e-4 * eta;
        let (u, du) = o.eval(eta);
        let (_, dup) = o.eval(eta + h);
        let (_, dum) = o.eval(eta - h);
        let d2u = (dup - dum) / (2.0 * h);
        let resid = d2u + fr * du / eta + w * k2 * u;
        assert!(resid.abs() < 1e-6 * (d2u.abs() + w * k2 * u.abs()));
    }
}

#[test]
fn evolved_modes_match_oracle() {
    let mut rng = rng_from_seed(2024);
    let g = TorusGeometry::default();
    let times = geomspace(1e-2, 1e2, 81);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w: f64 = rng.random_range(0.05..1.0);
        let k = [rng.random_range(0..4i64), rng.random_range(-4..5i64), rng.random_range(1..5i64)];
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        let nu = NuIndex::new(w).unwrap();
        let o = Oracle {
            nu: nu.nu,
            omega: w.sqrt() * k2.sqrt(),
            c1: rng.random_range(-1.0..1.0),
            c2: rng.random_range(-1.0..1.0),
        };
        let (u0, du0) = o.eval(1.0);
        let state = PerturbationState::new(
            1.0,
            SpectralField::from_modes(g, &[(k, Complex64::new(u0, 0.0))]).unwrap(),
            SpectralField::from_modes(g, &[(k, Complex64::new(du0, 0.0))]).unwrap(),
        )
        .unwrap();
        let sol = sample(&state, Dynamics::linear(w).unwrap(), &times, 1e-13).unwrap();
        let track = sol.mode(k).unwrap();
        for (i, &eta) in times.iter().enumerate() {
            let (u, du) = o.eval(eta);
            let amp = (u * u + (du / o.omega).powi(2)).sqrt();
            let err = (track.phi[i].re - u).abs().max((track.dphi[i].re - du).abs() / o.omega) / amp;
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-8, "worst relative error {worst:e}");
}
