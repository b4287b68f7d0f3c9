//! Polarized Gowdy analogue on the circle: `P_tt + P_t / t = P_xx`.
//!
//! Near `t = 0` solutions behave like `k(x) ln t + omega(x)` with both
//! functions free. This is the double-root case `2 nu = 0`, `w = 1` of the
//! series recursion, and each Fourier mode obeys the linear mode equation
//! with friction 1.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use super::series::{build_generic, SeriesField};
use crate::error::{Error, Result};
use crate::evolver::{mode_propagators, Dynamics, NuIndex};
use crate::fit::{geomspace, LstsqSolver};

/// Real periodic function on a circle of length `l`, stored as `n` Fourier
/// coefficients in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleField {
    l: f64,
    coeffs: Vec<Complex64>,
}

fn fft(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

impl CircleField {
    pub fn zeros(n: usize, l: f64) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::Domain(format!("circle resolution {n} must be odd and at least 3")));
        }
        if !(l > 0.0) {
            return Err(Error::Domain(format!("circle length {l} must be positive")));
        }
        Ok(Self {
            l,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    pub fn constant(n: usize, l: f64, c: f64) -> Result<Self> {
        let mut f = Self::zeros(n, l)?;
        f.coeffs[0] = Complex64::new(c, 0.0);
        Ok(f)
    }

    /// From values at `x_j = j l / n`.
    pub fn from_grid(l: f64, values: &[f64]) -> Result<Self> {
        let mut f = Self::zeros(values.len(), l)?;
        let n = values.len();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft(n, false).process(&mut buf);
        for (c, b) in f.coeffs.iter_mut().zip(buf) {
            *c = b / n as f64;
        }
        f.symmetrize();
        Ok(f)
    }

    /// Field with the given `(m, c_m)` modes and their conjugates.
    pub fn from_modes(n: usize, l: f64, modes: &[(i64, Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(n, l)?;
        for &(m, c) in modes {
            f.set_pair(m, c)?;
        }
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.l
    }

    pub fn kmax(&self) -> i64 {
        (self.len() as i64 - 1) / 2
    }

    fn index(&self, m: i64) -> Option<usize> {
        let n = self.len() as i64;
        (m.abs() <= self.kmax()).then(|| m.rem_euclid(n) as usize)
    }

    fn wavenumber(&self, i: usize) -> i64 {
        let n = self.len() as i64;
        let i = i as i64;
        if i > n / 2 {
            i - n
        } else {
            i
        }
    }

    /// Physical wavenumber `2 pi m / l` of index `i`.
    fn k_phys(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.wavenumber(i) as f64 / self.l
    }

    pub fn get(&self, m: i64) -> Option<Complex64> {
        self.index(m).map(|i| self.coeffs[i])
    }

    pub fn set_pair(&mut self, m: i64, c: Complex64) -> Result<()> {
        let i = self.index(m).ok_or_else(|| Error::Domain(format!("mode {m} outside the grid")))?;
        let j = self.index(-m).expect("mirror mode");
        if i == j {
            self.coeffs[i] = Complex64::new(c.re, 0.0);
        } else {
            self.coeffs[i] = c;
            self.coeffs[j] = c.conj();
        }
        Ok(())
    }

    fn symmetrize(&mut self) {
        let n = self.len();
        self.coeffs[0].im = 0.0;
        for i in 1..=n / 2 {
            let avg = 0.5 * (self.coeffs[i] + self.coeffs[n - i].conj());
            self.coeffs[i] = avg;
            self.coeffs[n - i] = avg.conj();
        }
    }

    pub fn to_grid(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        fft(self.len(), true).process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() || self.l != other.l {
            return Err(Error::Domain("circle fields on different grids".into()));
        }
        Ok(())
    }
}

impl SeriesField for CircleField {
    fn zero_like(&self) -> Self {
        Self {
            l: self.l,
            coeffs: vec![Complex64::new(0.0, 0.0); self.len()],
        }
    }

    fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert!(self.check_same(other).is_ok(), "series fields share a grid");
        Self {
            l: self.l,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x * a + y * b).collect(),
        }
    }

    fn laplace(&self) -> Self {
        Self {
            l: self.l,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| -c * self.k_phys(i).powi(2))
                .collect(),
        }
    }

    fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Settings for [`gowdy_evolve_and_prescribe`].
#[derive(Debug, Clone, PartialEq)]
pub struct GowdyOptions {
    pub k_max: f64,
    pub tol: f64,
    /// Sampling window of the backward fit.
    pub window: (f64, f64),
    pub samples: usize,
}

impl Default for GowdyOptions {
    fn default() -> Self {
        Self {
            k_max: 8.0,
            tol: 1e-12,
            window: (1e-4, 1e-2),
            samples: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GowdyRoundtrip {
    pub t_start: f64,
    pub t_end: f64,
    /// Largest coefficient error of the recovered `k`, relative to `max |k_m|`.
    pub k_rel_error: f64,
    pub omega_rel_error: f64,
    pub cond: f64,
    #[serde(skip)]
    pub k_fit: CircleField,
    #[serde(skip)]
    pub omega_fit: CircleField,
    #[serde(skip)]
    pub p_end: CircleField,
    #[serde(skip)]
    pub dp_end: CircleField,
}

impl GowdyRoundtrip {
    pub fn max_rel_error(&self) -> f64 {
        self.k_rel_error.max(self.omega_rel_error)
    }
}

/// `(P, P_t)` of the truncated series `k ln t + omega + ...` at `t`.
pub fn gowdy_series(kfun: &CircleField, omega: &CircleField, t: f64, k_max: f64) -> Result<(CircleField, CircleField)> {
    kfun.check_same(omega)?;
    build_generic(0.0, 1.0, None, omega.clone(), Some(kfun.clone()), k_max)?.evaluate(t)
}

fn gowdy_dynamics() -> Dynamics<'static> {
    Dynamics::Linear(NuIndex { w: 1.0, nu: 0.0 })
}

/// Evolves `(p, dp)` from `t0` to each of `times`, mode by mode.
pub fn gowdy_evolve(
    p: &CircleField,
    dp: &CircleField,
    t0: f64,
    times: &[f64],
    tol: f64,
) -> Result<Vec<(CircleField, CircleField)>> {
    p.check_same(dp)?;
    let mut out = vec![(p.zero_like(), p.zero_like()); times.len()];
    for i in 0..=p.len() / 2 {
        let (a, b) = (p.coeffs[i], dp.coeffs[i]);
        if a.norm() == 0.0 && b.norm() == 0.0 {
            continue;
        }
        let k = p.k_phys(i);
        let props = mode_propagators(gowdy_dynamics(), k * k, p.wavenumber(i).pow(2), t0, times, tol)?;
        let m = p.wavenumber(i);
        for (slot, pr) in out.iter_mut().zip(props) {
            slot.0.set_pair(m, a * pr[0][0] + b * pr[0][1])?;
            slot.1.set_pair(m, a * pr[1][0] + b * pr[1][1])?;
        }
    }
    Ok(out)
}

/// Seeds the series at `t_start`, evolves to `t_end`, evolves back into the
/// fit window and recovers `(k, omega)` from `{1, ln t, t^2, t^2 ln t, t^4, t^4 ln t}`.
pub fn gowdy_evolve_and_prescribe(
    kfun: &CircleField,
    omega: &CircleField,
    t_start: f64,
    t_end: f64,
    opts: &GowdyOptions,
) -> Result<GowdyRoundtrip> {
    if !(t_start > 0.0 && t_start < 1.0) {
        return Err(Error::Domain(format!("t_start = {t_start} must lie in (0, 1)")));
    }
    if !(t_end > 0.0) {
        return Err(Error::Domain(format!("t_end = {t_end} must be positive")));
    }
    let (p0, dp0) = gowdy_series(kfun, omega, t_start, opts.k_max)?;
    let (p_end, dp_end) = gowdy_evolve(&p0, &dp0, t_start, &[t_end], opts.tol)?.remove(0);

    let times = geomspace(opts.window.0, opts.window.1, opts.samples);
    let back = gowdy_evolve(&p_end, &dp_end, t_end, &times, opts.tol)?;
    let rows: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let l = t.ln();
            vec![1.0, l, t * t, t * t * l, t.powi(4), t.powi(4) * l]
        })
        .collect();
    let solver = LstsqSolver::new(&rows, &vec![1.0; times.len()], 1e12)?;
    let mut k_fit = kfun.zero_like();
    let mut omega_fit = kfun.zero_like();
    for i in 0..=kfun.len() / 2 {
        let m = kfun.wavenumber(i);
        let re: Vec<f64> = back.iter().map(|(p, _)| p.coeffs[i].re).collect();
        let im: Vec<f64> = back.iter().map(|(p, _)| p.coeffs[i].im).collect();
        let (cr, _) = solver.solve(&re);
        let (ci, _) = solver.solve(&im);
        omega_fit.set_pair(m, Complex64::new(cr[0], ci[0]))?;
        k_fit.set_pair(m, Complex64::new(cr[1], ci[1]))?;
    }
    let rel = |a: &CircleField, b: &CircleField| {
        let d = a.combine(1.0, b, -1.0).max_abs();
        let s = b.max_abs();
        if s > 0.0 {
            d / s
        } else {
            d
        }
    };
    Ok(GowdyRoundtrip {
        t_start,
        t_end,
        k_rel_error: rel(&k_fit, kfun),
        omega_rel_error: rel(&omega_fit, omega),
        cond: solver.cond,
        k_fit,
        omega_fit,
        p_end,
        dp_end,
    })
}
