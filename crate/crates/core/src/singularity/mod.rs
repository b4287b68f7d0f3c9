//! Behaviour of perturbations near the big-bang singularity `eta -> 0`.
//!
//! For `p = w eps` every solution has an expansion
//! `Phi ~ sum_k (Phi_{k,0} + Phi_{k,1} ln eta) eta^k` fixed by two free fields,
//! `psi1 = Phi_{-2 nu, 0}` and `psi2 = Phi_{0,0}`. This module builds the
//! expansion from the data, seeds the evolver with it, and fits the data back
//! from sampled solutions.

pub mod gowdy;
pub mod series;

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::background::BackgroundTrajectory;
use crate::error::{Error, Result};
use crate::evolver::{sample, Dynamics, NuIndex, PerturbationState, SampledSolution};
use crate::fit::{geomspace, LstsqSolver};
use crate::ode::{Dop853, ErrorNorm};
use rayon::prelude::*;
use crate::spectral::{write_field, FieldData, SpectralField};

pub use series::{exponent_lattice, Series, SeriesField, SeriesTerm};

pub type SeriesExpansion = Series<SpectralField>;

/// Free data at the singularity.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularityData {
    /// Coefficient of `eta^(-2 nu)`.
    pub psi1: SpectralField,
    /// Coefficient of `eta^0`.
    pub psi2: SpectralField,
}

impl SingularityData {
    /// Largest coefficient error of `self` against `truth`, each field
    /// relative to its own largest coefficient.
    pub fn relative_error(&self, truth: &SingularityData) -> Result<f64> {
        let rel = |a: &SpectralField, b: &SpectralField| -> Result<f64> {
            let scale = b.max_abs();
            let d = a.sub(b)?.max_abs();
            Ok(if scale > 0.0 { d / scale } else { d })
        };
        Ok(rel(&self.psi1, &truth.psi1)?.max(rel(&self.psi2, &truth.psi2)?))
    }
}

pub fn build_series(w: f64, data: &SingularityData, k_max: f64) -> Result<SeriesExpansion> {
    let nu = NuIndex::new(w)?;
    data.psi1.check_same(&data.psi2)?;
    series::build_generic(nu.two_nu(), w, Some(data.psi1.clone()), data.psi2.clone(), None, k_max)
}

/// `(Phi, Phi')` from the truncated series. Evaluation at `eta >= 1` is
/// allowed but flagged by the returned boolean, since the expansion is only
/// asymptotic.
pub fn evaluate_series(series: &SeriesExpansion, eta: f64) -> Result<(SpectralField, SpectralField, bool)> {
    let (phi, dphi) = series.evaluate(eta)?;
    Ok((phi, dphi, eta >= 1.0))
}

/// Seeds the evolver with the series at `eta_start` and returns the state at `eta_end`.
pub fn reconstruct_from_singularity_data(
    w: f64,
    data: &SingularityData,
    eta_start: f64,
    eta_end: f64,
    k_max: f64,
    tol: f64,
) -> Result<PerturbationState> {
    let sol = reconstruct_sampled(w, data, eta_start, &[eta_end], k_max, tol)?;
    Ok(sol.state(0))
}

/// Below this time the solution is carried as series plus remainder.
const SERIES_SWITCH: f64 = 0.1;

/// As [`reconstruct_from_singularity_data`], recording the solution at `times`.
///
/// The solution is written `Phi = S + R` with `S` the truncated series and
/// `R(eta_start) = R'(eta_start) = 0`. `R` obeys the mode equation forced by
/// the top-order terms of `S` and stays small, so the data `psi2` survive
/// even where `psi1 eta^(-2 nu)` exceeds them by many orders of magnitude.
/// Beyond `0.1` (or `eta_start`, if later) the state is handed to the
/// shell propagators.
pub fn reconstruct_sampled(
    w: f64,
    data: &SingularityData,
    eta_start: f64,
    times: &[f64],
    k_max: f64,
    tol: f64,
) -> Result<SampledSolution> {
    if !(eta_start > 0.0 && eta_start < 1.0) {
        return Err(Error::Domain(format!("seed time {eta_start} must lie in (0, 1)")));
    }
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Domain("evolution times must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let nu = NuIndex::new(w)?;
    let s = build_series(w, data, k_max)?;
    let switch = SERIES_SWITCH.max(eta_start);
    let mut near: Vec<f64> = times.iter().copied().filter(|&t| t <= switch).collect();
    let far_needed = times.iter().any(|&t| t > switch);
    if far_needed {
        near.push(switch);
    }
    let near_states = series_with_remainder(&s, nu, eta_start, &near, tol)?;
    let far = if far_needed {
        let seed = near_states.last().expect("switch state").clone();
        let far_times: Vec<f64> = times.iter().copied().filter(|&t| t > switch).collect();
        Some(sample(&seed, Dynamics::Linear(nu), &far_times, tol)?)
    } else {
        None
    };
    let (mut near_iter, mut i_far) = (near_states.into_iter(), 0);
    let states: Vec<PerturbationState> = times
        .iter()
        .map(|&t| {
            if t <= switch {
                near_iter.next().expect("near sample")
            } else {
                i_far += 1;
                far.as_ref().expect("far samples").state(i_far - 1)
            }
        })
        .collect();
    SampledSolution::from_states(&states)
}

/// `S + R` at each of `times`, all within the series regime.
fn series_with_remainder(s: &SeriesExpansion, nu: NuIndex, eta_start: f64, times: &[f64], tol: f64) -> Result<Vec<PerturbationState>> {
    let g = *s.terms[0].coeff.geometry();
    let unit2 = g.k_unit() * g.k_unit();
    // terms whose successor k + 2 lies beyond the truncation
    let top: Vec<&SeriesTerm<SpectralField>> = s.terms.iter().filter(|t| t.k + 2.0 > s.k_max + 1e-9).collect();
    let w = s.w;
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let (phi, dphi) = s.evaluate(t)?;
        states.push(PerturbationState::new(t, phi, dphi)?);
    }
    if w == 0.0 || top.is_empty() {
        return Ok(states);
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let split = order.partition_point(|&i| times[i] < eta_start);
    let later: Vec<usize> = order[split..].to_vec();
    let earlier: Vec<usize> = order[..split].iter().rev().copied().collect();
    let modes = s.terms[0].coeff.half_space();
    let tracks: Vec<Result<Vec<(usize, Complex64, Complex64)>>> = modes
        .par_iter()
        .map(|&idx| {
            let k2 = unit2 * g.k2(idx) as f64;
            let forcing: Vec<(f64, u8, Complex64)> =
                top.iter().map(|t| (t.k, t.l, t.coeff.coeffs()[idx])).filter(|c| c.2.norm() > 0.0).collect();
            if forcing.is_empty() {
                return Ok(Vec::new());
            }
            let scale = s.terms.iter().map(|t| t.coeff.coeffs()[idx].norm()).fold(0.0, f64::max);
            let solver = Dop853::new(tol, tol * scale).with_norm(ErrorNorm::Paired);
            // y = (Re R, Re eta R', Im R, Im eta R') in u = ln eta
            let rhs = |u: f64, y: &[f64; 4]| {
                let eta = u.exp();
                let ln = u;
                let mut src = Complex64::new(0.0, 0.0);
                for &(k, l, c) in &forcing {
                    src += c * eta.powf(k) * if l == 1 { ln } else { 1.0 };
                }
                let f = w * k2 * eta * eta;
                [
                    y[1],
                    -nu.two_nu() * y[1] - f * (y[0] + src.re),
                    y[3],
                    -nu.two_nu() * y[3] - f * (y[2] + src.im),
                ]
            };
            let mut out = Vec::new();
            for side in [&later, &earlier] {
                if side.is_empty() {
                    continue;
                }
                let us: Vec<f64> = side.iter().map(|&i| times[i].ln()).collect();
                solver
                    .integrate_through(rhs, eta_start.ln(), [0.0; 4], &us, |j, y| {
                        let i = side[j];
                        let eta = times[i];
                        out.push((i, Complex64::new(y[0], y[2]), Complex64::new(y[1], y[3]) / eta));
                    })
                    .map_err(|f| Error::Stiffness {
                        eta: f.time().exp(),
                        shell: g.k2(idx),
                    })?;
            }
            Ok(out)
        })
        .collect();
    for (&idx, track) in modes.iter().zip(tracks) {
        let k = g.wavevector(idx);
        for (i, r, dr) in track? {
            let st = &mut states[i];
            let p = st.phi.coeffs()[idx] + r;
            let d = st.dphi.coeffs()[idx] + dr;
            st.phi.set_pair(k, p)?;
            st.dphi.set_pair(k, d)?;
        }
    }
    Ok(states)
}

/// Settings of the least-squares fit near the singularity.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub window: (f64, f64),
    pub samples: usize,
    /// Largest lattice exponent in the basis.
    pub k_fit: f64,
    /// Add `ln eta` at `k = 0` even when the theory excludes it.
    pub force_logs: bool,
    pub max_cond: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: (1e-3, 5e-2),
            samples: 40,
            k_fit: 4.0,
            force_logs: false,
            max_cond: 1e12,
        }
    }
}

impl FitOptions {
    pub fn times(&self) -> Vec<f64> {
        geomspace(self.window.0, self.window.1, self.samples)
    }
}

/// Basis functions `eta^k (ln eta)^l`.
fn fit_basis(nu: NuIndex, opts: &FitOptions) -> Vec<(f64, u8)> {
    let (two_nu, integer_nu) = (nu.two_nu(), nu.is_integer());
    let mut basis = Vec::new();
    let mut ks = exponent_lattice(two_nu, opts.k_fit);
    if nu.w == 0.0 {
        // every sourced coefficient carries a factor w
        ks.retain(|&k| k == 0.0 || k == -two_nu);
    }
    for k in ks {
        basis.push((k, 0));
        let log_allowed = integer_nu && k >= 0.0;
        if log_allowed || (opts.force_logs && k == 0.0) {
            basis.push((k, 1));
        }
    }
    basis
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeResidual {
    pub k: [i64; 3],
    /// Weighted rms residual relative to the weighted rms of the data.
    pub residual: f64,
}

/// Result of [`fit_asymptotic_data`].
#[derive(Debug, Clone)]
pub struct AsymptoticFit {
    pub data: SingularityData,
    /// Fitted `Phi_{0,1}`, when the basis contains it.
    pub log_zero: Option<SpectralField>,
    pub cond: f64,
    pub residuals: Vec<ModeResidual>,
}

impl AsymptoticFit {
    /// Largest fitted `ln eta` coefficient relative to the leading data.
    pub fn log_ratio(&self) -> f64 {
        let lead = self.data.psi1.max_abs().max(self.data.psi2.max_abs());
        self.log_zero.as_ref().map_or(0.0, |l| l.max_abs() / lead)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Per-mode weighted least squares against the lattice basis, weights
/// `eta^(2 nu)`.
pub fn fit_asymptotic_data(sol: &SampledSolution, w: f64, opts: &FitOptions) -> Result<AsymptoticFit> {
    let nu = NuIndex::new(w)?;
    let times = sol.times();
    if times.iter().any(|&t| !(t > 0.0 && t <= 0.1)) {
        return Err(Error::Precondition("fit samples must lie in (0, 0.1]".into()));
    }
    let basis = fit_basis(nu, opts);
    let rows: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            basis
                .iter()
                .map(|&(k, l)| t.powf(k) * if l == 1 { t.ln() } else { 1.0 })
                .collect()
        })
        .collect();
    let weights: Vec<f64> = times.iter().map(|t| t.powf(nu.two_nu())).collect();
    let solver = LstsqSolver::new(&rows, &weights, opts.max_cond)?;
    let pos = |k: f64, l: u8| basis.iter().position(|&(bk, bl)| bl == l && (bk - k).abs() < 1e-9);
    let i1 = pos(-nu.two_nu(), 0).expect("leading exponent in basis");
    let i2 = pos(0.0, 0).expect("zero exponent in basis");
    let ilog = pos(0.0, 1);

    let g = *sol.geometry();
    let mut psi1 = SpectralField::zeros(g);
    let mut psi2 = SpectralField::zeros(g);
    let mut log_zero = ilog.map(|_| SpectralField::zeros(g));
    let mut residuals = Vec::new();
    let mut fit_mode = |k: [i64; 3], values: &[Complex64]| -> Result<()> {
        let re: Vec<f64> = values.iter().map(|c| c.re).collect();
        let im: Vec<f64> = values.iter().map(|c| c.im).collect();
        let (cr, rr) = solver.solve(&re);
        let (ci, ri) = solver.solve(&im);
        let at = |i: usize| Complex64::new(cr[i], ci[i]);
        psi1.set_pair(k, at(i1))?;
        psi2.set_pair(k, at(i2))?;
        if let (Some(i), Some(f)) = (ilog, log_zero.as_mut()) {
            f.set_pair(k, at(i))?;
        }
        let data_rms = (values
            .iter()
            .zip(&weights)
            .map(|(v, w)| (v * w).norm_sqr())
            .sum::<f64>()
            / values.len() as f64)
            .sqrt();
        let resid = (rr * rr + ri * ri).sqrt();
        residuals.push(ModeResidual {
            k,
            residual: if data_rms > 0.0 { resid / data_rms } else { resid },
        });
        Ok(())
    };
    let mean: Vec<Complex64> = sol.mean_track().iter().map(|&(p, _)| Complex64::new(p, 0.0)).collect();
    fit_mode([0, 0, 0], &mean)?;
    for h in sol.mode_histories() {
        fit_mode(h.k, &h.phi)?;
    }
    Ok(AsymptoticFit {
        data: SingularityData { psi1, psi2 },
        log_zero,
        cond: solver.cond,
        residuals,
    })
}

/// Leading-order fit for a non-linear equation of state.
#[derive(Debug, Clone)]
pub struct GeneralFit {
    /// `w` of the high-density limit.
    pub w: f64,
    /// `-2 nu(w)`.
    pub expected_exponent: f64,
    /// Fitted exponent for each mode with data, `(k, exponent)`.
    pub mode_exponents: Vec<([i64; 3], f64)>,
    pub data: SingularityData,
}

impl GeneralFit {
    pub fn max_exponent_error(&self) -> f64 {
        self.mode_exponents
            .iter()
            .map(|(_, e)| (e - self.expected_exponent).abs())
            .fold(0.0, f64::max)
    }
}

/// Measures the leading exponent of `eta Phi'` per mode by regressing
/// `ln |eta Phi'|` on `{1, ln eta, eta^g, eta^2g, eta^2}`, where `eta^g` is the
/// relative size of the first equation-of-state correction, and extracts
/// `Phi_{-2 nu, 0}` and `Phi_{0,0}` from `Phi` with the corrected basis.
pub fn fit_singularity_general(traj: &BackgroundTrajectory, sol: &SampledSolution, opts: &FitOptions) -> Result<GeneralFit> {
    let eos = traj.eos();
    let w = eos.high_density_w();
    let nu = NuIndex::new(w)?;
    let p = nu.two_nu();
    let times = sol.times();
    if times.iter().any(|&t| !(t > 0.0 && t <= 0.1)) {
        return Err(Error::Precondition("fit samples must lie in (0, 0.1]".into()));
    }
    // near the singularity eps ~ eta^(-6 (1 + w) / (1 + 3w))
    let eps_slope = 6.0 * (1.0 + w) / (1.0 + 3.0 * w);
    let gamma = eos.high_density_correction().map(|c| c * eps_slope);

    let data = if eos.is_linear() {
        fit_asymptotic_data(sol, w, opts)?.data
    } else {
        let mut exps: Vec<f64> = vec![-p, 0.0, -p + 2.0, 2.0];
        if let Some(g) = gamma {
            exps.extend([-p + g, -p + 2.0 * g, g]);
        }
        exps.sort_by(f64::total_cmp);
        exps.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let rows: Vec<Vec<f64>> = times.iter().map(|&t| exps.iter().map(|&k| t.powf(k)).collect()).collect();
        let weights: Vec<f64> = times.iter().map(|t| t.powf(p)).collect();
        let solver = LstsqSolver::new(&rows, &weights, opts.max_cond)?;
        let i1 = exps.iter().position(|&k| (k + p).abs() < 1e-9).expect("leading exponent");
        let i2 = exps.iter().position(|&k| k.abs() < 1e-9).expect("zero exponent");
        let g = *sol.geometry();
        let mut psi1 = SpectralField::zeros(g);
        let mut psi2 = SpectralField::zeros(g);
        let mut put = |k: [i64; 3], values: &[Complex64]| -> Result<()> {
            let re: Vec<f64> = values.iter().map(|c| c.re).collect();
            let im: Vec<f64> = values.iter().map(|c| c.im).collect();
            let (cr, _) = solver.solve(&re);
            let (ci, _) = solver.solve(&im);
            psi1.set_pair(k, Complex64::new(cr[i1], ci[i1]))?;
            psi2.set_pair(k, Complex64::new(cr[i2], ci[i2]))
        };
        let mean: Vec<Complex64> = sol.mean_track().iter().map(|&(p, _)| Complex64::new(p, 0.0)).collect();
        put([0, 0, 0], &mean)?;
        for h in sol.mode_histories() {
            put(h.k, &h.phi)?;
        }
        SingularityData { psi1, psi2 }
    };

    let mut cols: Vec<Box<dyn Fn(f64) -> f64>> = vec![Box::new(|_| 1.0), Box::new(|t: f64| t.ln()), Box::new(|t: f64| t * t)];
    if let Some(g) = gamma.filter(|g| (g - 2.0).abs() > 1e-9) {
        cols.push(Box::new(move |t: f64| t.powf(g)));
        if (2.0 * g - 2.0).abs() > 1e-9 {
            cols.push(Box::new(move |t: f64| t.powf(2.0 * g)));
        }
    }
    let rows: Vec<Vec<f64>> = times.iter().map(|&t| cols.iter().map(|c| c(t)).collect()).collect();
    let solver = LstsqSolver::new(&rows, &vec![1.0; times.len()], opts.max_cond)?;
    let mut mode_exponents = Vec::new();
    let mut measure = |k: [i64; 3], dphi: &[Complex64]| {
        if dphi.iter().all(|d| d.norm() == 0.0) {
            return;
        }
        let y: Vec<f64> = dphi.iter().zip(times).map(|(d, &t)| (d.norm() * t).ln()).collect();
        let (c, _) = solver.solve(&y);
        mode_exponents.push((k, c[1]));
    };
    let mean: Vec<Complex64> = sol.mean_track().iter().map(|&(_, d)| Complex64::new(d, 0.0)).collect();
    measure([0, 0, 0], &mean);
    for h in sol.mode_histories() {
        measure(h.k, &h.dphi);
    }
    if mode_exponents.is_empty() {
        return Err(Error::Inconclusive("no mode carries a time derivative".into()));
    }
    Ok(GeneralFit {
        w,
        expected_exponent: -p,
        mode_exponents,
        data,
    })
}

#[derive(Serialize)]
struct SeriesEntry {
    k: f64,
    l: u8,
    field: String,
}

#[derive(Serialize)]
struct SeriesIndex<'a> {
    w: f64,
    nu: f64,
    k_max: f64,
    terms: Vec<SeriesEntry>,
    warnings: &'a [String],
}

/// Writes `<stem>.json` listing the terms, with one field file per term.
pub fn write_series(dir: &Path, stem: &str, series: &SeriesExpansion) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut terms = Vec::new();
    for (i, t) in series.terms.iter().enumerate() {
        let name = format!("{stem}_term{i:02}.json");
        write_field(&dir.join(&name), &FieldData::Spectral(t.coeff.clone()))?;
        terms.push(SeriesEntry { k: t.k, l: t.l, field: name });
    }
    let index = SeriesIndex {
        w: series.w,
        nu: 0.5 * series.two_nu,
        k_max: series.k_max,
        terms,
        warnings: &series.warnings,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(())
}
