//! Polarized Gowdy equation on the circle.

use std::f64::consts::PI;

use flrw_perturb::singularity::gowdy::{gowdy_evolve, gowdy_evolve_and_prescribe, gowdy_series, CircleField, GowdyOptions};
use num_complex::Complex64;

const N: usize = 33;
const L: f64 = 2.0 * PI;

#[test]
fn sign_indefinite_data_roundtrip() {
    let grid = |f: &dyn Fn(f64) -> f64| -> Vec<f64> { (0..N).map(|j| f(L * j as f64 / N as f64)).collect() };
    let k = CircleField::from_grid(L, &grid(&|x| 0.3 + (x).sin() - 0.4 * (2.0 * x).cos())).unwrap();
    let omega = CircleField::from_grid(L, &grid(&|x| 1.0 + 0.5 * (x).cos() + 0.2 * (3.0 * x).sin())).unwrap();
    assert!(k.to_grid().iter().any(|&v| v < 0.0) && k.to_grid().iter().any(|&v| v > 0.0));
    let t = std::time::Instant::now();
    let r = gowdy_evolve_and_prescribe(&k, &omega, 1e-3, 3.0, &GowdyOptions::default()).unwrap();
    assert!(r.max_rel_error() <= 1e-4, "{:e}", r.max_rel_error());
    assert!(t.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn constant_data_follow_the_logarithm() {
    let k = CircleField::constant(N, L, 0.8).unwrap();
    let omega = CircleField::constant(N, L, -0.25).unwrap();
    let (p, dp) = gowdy_series(&k, &omega, 1e-2, 8.0).unwrap();
    let times = [0.1, 1.0, 10.0, 100.0];
    for (&t, (p, dp)) in times.iter().zip(gowdy_evolve(&p, &dp, 1e-2, &times, 1e-12).unwrap()) {
        let exact = 0.8 * t.ln() - 0.25;
        assert!((p.get(0).unwrap().re - exact).abs() < 1e-12 * (1.0 + exact.abs()));
        assert!((dp.get(0).unwrap().re - 0.8 / t).abs() < 1e-12 / t);
    }
}

/// `P = a J0(n t) + b Y0(n t)` solves `P_tt + P_t / t = -n^2 P`.
#[test]
fn single_mode_matches_bessel_solution() {
    for n in [1i64, 3, 7] {
        let (a, b) = (0.6, -0.9);
        let x = |t: f64| n as f64 * t;
        let exact = |t: f64| {
            let (j, y, dj, dy) = puruspe::besseljy(0.0, x(t));
            (a * j + b * y, n as f64 * (a * dj + b * dy))
        };
        let t0 = 0.05;
        let (p0, d0) = exact(t0);
        let p = CircleField::from_modes(N, L, &[(n, Complex64::new(p0, 0.0))]).unwrap();
        let dp = CircleField::from_modes(N, L, &[(n, Complex64::new(d0, 0.0))]).unwrap();
        let times = [0.2, 1.0, 5.0, 20.0];
        for (&t, (p, dp)) in times.iter().zip(gowdy_evolve(&p, &dp, t0, &times, 1e-13).unwrap()) {
            let (pe, de) = exact(t);
            let amp = (pe * pe + (de / n as f64).powi(2)).sqrt();
            assert!((p.get(n).unwrap().re - pe).abs() < 1e-8 * amp, "n = {n}, t = {t}");
            assert!((dp.get(n).unwrap().re - de).abs() < 1e-8 * amp * n as f64);
        }
    }
}
