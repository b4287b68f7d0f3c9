//! Late-time asymptotics of perturbations.
//!
//! For `p = w eps` with `w > 0` the zero-mean part of `Phi` decays like
//! `eta^(-nu - 1/2)` times a free wave profile `W` solving `W'' = w Delta W`,
//! and the spatial mean tends to `A + B eta^(-2 nu)`. Each Fourier mode of
//! `psi = eta^(nu + 1/2) Phi` is a traveling wave pair, isolated by
//! `z_k = psi_k + i psi_k' / omega` with `omega = sqrt(w) |k|`:
//! `z_k -> Wbar_k exp(-i omega (eta - etabar_k))`.
//!
//! For general barotropic laws the analysis runs in the sound-horizon time
//! `tau`, on `Psi = Phi / Omega`, and splits into the three regimes of
//! [`crate::background::Regime`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::background::{classify_regime, tau_coefficients, tau_limit, BackgroundTrajectory, Regime};
use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::evolver::{psi_fields, sample, Dynamics, NuIndex, PerturbationState, SampledSolution};
use crate::fit::{lstsq, LstsqSolver};
use crate::spectral::{laplacian, write_field, FieldData, SpectralField, TorusGeometry};

/// `(psi, psi')` at one time, `psi = eta^(nu + 1/2) Phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiState {
    pub eta: f64,
    pub psi: SpectralField,
    pub dpsi: SpectralField,
}

pub fn psi_transform(state: &PerturbationState, w: f64) -> Result<PsiState> {
    let (psi, dpsi) = psi_fields(state, w)?;
    Ok(PsiState {
        eta: state.eta,
        psi,
        dpsi,
    })
}

pub fn inverse_psi_transform(state: &PsiState, w: f64) -> Result<PerturbationState> {
    let nu = NuIndex::new(w)?;
    let p = nu.nu + 0.5;
    let eta = state.eta;
    let phi = state.psi.scale(eta.powf(-p));
    let dphi = state.dpsi.scale(eta.powf(-p)).axpy(-p / eta, &phi)?;
    PerturbationState::new(eta, phi, dphi)
}

fn frequency(w: f64, k_phys: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::Unsupported("late-time waves need w > 0".into()));
    }
    if !(k_phys > 0.0) {
        return Err(Error::Domain("the mean mode has no polar form".into()));
    }
    Ok(w.sqrt() * k_phys)
}

/// `(r, theta)` of a real mode amplitude: `psi = r cos theta`,
/// `psi' = sqrt(w) |k| r sin theta`.
pub fn mode_polar(psi: f64, dpsi: f64, k_phys: f64, w: f64) -> Result<(f64, f64)> {
    let omega = frequency(w, k_phys)?;
    let v = dpsi / omega;
    Ok((psi.hypot(v), v.atan2(psi)))
}

/// Inverse of [`mode_polar`].
pub fn polar_to_mode(r: f64, theta: f64, k_phys: f64, w: f64) -> Result<(f64, f64)> {
    let omega = frequency(w, k_phys)?;
    Ok((r * theta.cos(), omega * r * theta.sin()))
}

/// Amplitude and unwrapped phase of one traveling-wave component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePolarTrack {
    pub k: [i64; 3],
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ModePolarTrack {
    /// Builds the track from `z = psi + i psi' / omega`. The phase is
    /// unwrapped after removing the carrier `-omega t`, whose remainder
    /// changes by `O(1/t)` between samples, so no sampling cadence is needed.
    pub fn from_z(k: [i64; 3], times: &[f64], z: &[Complex64], omega: f64) -> Self {
        let mut theta = Vec::with_capacity(z.len());
        let mut prev: Option<f64> = None;
        for (&t, c) in times.iter().zip(z) {
            let mut phi = c.arg() + omega * t;
            if let Some(p) = prev {
                phi -= 2.0 * PI * ((phi - p) / (2.0 * PI)).round();
            }
            prev = Some(phi);
            theta.push(phi - omega * t);
        }
        Self {
            k,
            times: times.to_vec(),
            r: z.iter().map(|c| c.norm()).collect(),
            theta,
        }
    }
}

/// Whether the profile phases refer to `eta` or to `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeVariable {
    Eta,
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveMode {
    pub k: [i64; 3],
    pub wbar: f64,
    /// Phase reference in `[0, 2 pi / omega)`.
    pub etabar: f64,
    /// Larger of the relative rms residual of the amplitude fit and the rms
    /// residual (radians) of the phase fit.
    pub residual: f64,
    /// Slope of a free linear-plus-`1/t` fit of the phase; `-omega` in theory.
    pub phase_slope: f64,
    /// `c` in `r = Wbar (1 + c / t)`.
    pub drift: f64,
    /// False when the component is below the amplitude floor and its phase
    /// carries no information.
    pub resolved: bool,
}

/// `A + B eta^(-2 nu)` fitted to the spatial mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousFit {
    pub a: f64,
    pub b: f64,
    pub cond: f64,
    /// Set when `eta^(-2 nu)` is numerically invisible in the window; `b` is then 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct WaveProfile {
    pub geometry: TorusGeometry,
    pub w: f64,
    pub time_variable: TimeVariable,
    /// Both members of every `+-k` pair with data.
    pub modes: Vec<WaveMode>,
    pub homogeneous: HomogeneousFit,
}

impl WaveProfile {
    pub fn mode(&self, k: [i64; 3]) -> Option<&WaveMode> {
        self.modes.iter().find(|m| m.k == k)
    }

    pub fn max_residual(&self) -> f64 {
        self.modes
            .iter()
            .filter(|m| m.resolved)
            .map(|m| m.residual)
            .fold(0.0, f64::max)
    }

    /// Largest difference to `other` over resolved modes, in units of the
    /// largest amplitude: `|dWbar|` and the phase gap `|omega d etabar|`
    /// (mod 2 pi) weighted by `Wbar`.
    pub fn max_gap(&self, other: &WaveProfile) -> f64 {
        let peak = self.modes.iter().map(|m| m.wbar).fold(0.0, f64::max);
        let mut gap: f64 = 0.0;
        for m in self.modes.iter().filter(|m| m.resolved) {
            let Some(n) = other.mode(m.k) else {
                return f64::INFINITY;
            };
            let k = m.k;
            let scale = if self.time_variable == TimeVariable::Eta { self.w.sqrt() } else { 1.0 };
            let om = scale * self.geometry.k_unit() * ((k[0].pow(2) + k[1].pow(2) + k[2].pow(2)) as f64).sqrt();
            let d = (om * (m.etabar - n.etabar) + PI).rem_euclid(2.0 * PI) - PI;
            gap = gap.max((m.wbar - n.wbar).abs() / peak).max(d.abs() * m.wbar / peak);
        }
        gap
    }

    /// Coefficient `c_k(t)` of `W` and its time derivative.
    pub fn coefficient(&self, k: [i64; 3], omega: f64, t: f64) -> (Complex64, Complex64) {
        let (alpha, beta) = self.amplitudes(k, omega);
        let e = Complex64::from_polar(1.0, -omega * t);
        let c = alpha * e + beta * e.conj();
        let dc = Complex64::new(0.0, -omega) * (alpha * e - beta * e.conj());
        (c, dc)
    }

    /// `(alpha, beta)` with `c_k = alpha e^(-i omega t) + beta e^(i omega t)`.
    fn amplitudes(&self, k: [i64; 3], omega: f64) -> (Complex64, Complex64) {
        let get = |k: [i64; 3]| self.mode(k).map_or(Complex64::new(0.0, 0.0), |m| {
            Complex64::from_polar(0.5 * m.wbar, omega * m.etabar)
        });
        (get(k), get([-k[0], -k[1], -k[2]]).conj())
    }

    /// Writes `kx,ky,kz,Wbar,etabar,residual`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "kx,ky,kz,Wbar,etabar,residual")?;
        for m in &self.modes {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{:e}",
                m.k[0], m.k[1], m.k[2], m.wbar, m.etabar, m.residual
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Largest acceptable per-mode residual.
    pub residual_max: f64,
    /// Components below this fraction of the largest amplitude are not fitted.
    pub amplitude_floor: f64,
    /// The window must start after this many periods of the slowest mode
    /// (in radians of phase).
    pub min_phase: f64,
    pub max_cond: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            residual_max: 1e-3,
            amplitude_floor: 1e-8,
            min_phase: 50.0,
            max_cond: 1e12,
        }
    }
}

/// Least-squares `{1, t^(-2 nu)}` fit of the mean of `Phi`.
pub fn fit_homogeneous(times: &[f64], values: &[f64], two_nu: f64, max_cond: f64) -> Result<HomogeneousFit> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Precondition("homogeneous fit needs at least two samples".into()));
    }
    let decay: Vec<f64> = times.iter().map(|t| t.powf(-two_nu)).collect();
    let constant = || {
        let a = values.iter().sum::<f64>() / values.len() as f64;
        HomogeneousFit {
            a,
            b: 0.0,
            cond: f64::INFINITY,
            degenerate: true,
        }
    };
    if decay.iter().any(|d| !d.is_normal()) {
        return Ok(constant());
    }
    let rows: Vec<Vec<f64>> = decay.iter().map(|&d| vec![1.0, d]).collect();
    match lstsq(&rows, values, None, max_cond) {
        Ok(fit) => {
            // B eta^(-2 nu) below the rounding level of A carries no information
            let visible = decay[0] / decay[decay.len() - 1] > 1.0 + 1e-10;
            if !visible {
                return Ok(constant());
            }
            Ok(HomogeneousFit {
                a: fit.coeffs[0],
                b: fit.coeffs[1],
                cond: fit.cond,
                degenerate: false,
            })
        }
        Err(Error::IllConditioned { .. }) => Ok(constant()),
        Err(e) => Err(e),
    }
}

/// Per-component fits shared by the `eta` and `tau` variants.
struct ComponentFitter {
    times: Vec<f64>,
    drift: LstsqSolver,
    free: LstsqSolver,
}

impl ComponentFitter {
    fn new(times: &[f64], max_cond: f64) -> Result<Self> {
        if times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Precondition("late-time samples must be at positive times".into()));
        }
        let ones = vec![1.0; times.len()];
        let drift: Vec<Vec<f64>> = times.iter().map(|&t| vec![1.0, 1.0 / t]).collect();
        let free: Vec<Vec<f64>> = times.iter().map(|&t| vec![1.0, t, 1.0 / t]).collect();
        Ok(Self {
            times: times.to_vec(),
            drift: LstsqSolver::new(&drift, &ones, max_cond)?,
            free: LstsqSolver::new(&free, &ones, max_cond)?,
        })
    }

    fn fit(&self, k: [i64; 3], z: &[Complex64], omega: f64, resolved: bool) -> WaveMode {
        let track = ModePolarTrack::from_z(k, &self.times, z, omega);
        let (rc, r_rms) = self.drift.solve(&track.r);
        let wbar = rc[0];
        if !resolved {
            return WaveMode {
                k,
                wbar,
                etabar: 0.0,
                residual: 0.0,
                phase_slope: -omega,
                drift: 0.0,
                resolved,
            };
        }
        let demod: Vec<f64> = track.theta.iter().zip(&self.times).map(|(th, t)| th + omega * t).collect();
        let (pc, p_rms) = self.drift.solve(&demod);
        let period = 2.0 * PI / omega;
        let (fc, _) = self.free.solve(&track.theta);
        WaveMode {
            k,
            wbar,
            etabar: (pc[0] / omega).rem_euclid(period),
            residual: (r_rms / wbar).max(p_rms),
            phase_slope: fc[1],
            drift: rc[1] / wbar,
            resolved,
        }
    }
}

/// One `(k, z_k)` series per traveling component, both members of each pair.
type ComponentSeries = Vec<([i64; 3], f64, Vec<Complex64>)>;

fn fit_components(
    fitter: &ComponentFitter,
    comps: &ComponentSeries,
    opts: &ExtractOptions,
) -> Result<Vec<WaveMode>> {
    let peak = comps
        .iter()
        .flat_map(|(_, _, z)| z.iter().map(|c| c.norm()))
        .fold(0.0, f64::max);
    let modes: Vec<WaveMode> = comps
        .par_iter()
        .map(|(k, omega, z)| {
            let top = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
            fitter.fit(*k, z, *omega, top > opts.amplitude_floor * peak)
        })
        .collect();
    if let Some(bad) = modes.iter().find(|m| m.resolved && !(m.residual <= opts.residual_max)) {
        return Err(Error::WindowTooEarly(format!(
            "mode {:?} residual {:.2e} exceeds {:.0e}; move the window later",
            bad.k, bad.residual, opts.residual_max
        )));
    }
    Ok(modes)
}

fn negate(k: [i64; 3]) -> [i64; 3] {
    [-k[0], -k[1], -k[2]]
}

fn eta_components(sol: &SampledSolution, w: f64) -> Result<ComponentSeries> {
    let nu = NuIndex::new(w)?;
    let g = *sol.geometry();
    let times = sol.times();
    let p = nu.nu + 0.5;
    let mut comps: ComponentSeries = Vec::new();
    for h in sol.mode_histories() {
        let omega = frequency(w, g.k_unit() * ((h.k[0].pow(2) + h.k[1].pow(2) + h.k[2].pow(2)) as f64).sqrt())?;
        let (mut zp, mut zm) = (Vec::with_capacity(times.len()), Vec::with_capacity(times.len()));
        let i_over = Complex64::new(0.0, 1.0 / omega);
        for ((&t, &phi), &dphi) in times.iter().zip(&h.phi).zip(&h.dphi) {
            let s = t.powf(p);
            let psi = phi * s;
            let dpsi = (dphi + phi * (p / t)) * s;
            zp.push(psi + i_over * dpsi);
            zm.push(psi.conj() + i_over * dpsi.conj());
        }
        comps.push((h.k, omega, zp));
        comps.push((negate(h.k), omega, zm));
    }
    Ok(comps)
}

/// Amplitude and phase tracks of every traveling component of `psi`.
pub fn polar_tracks(sol: &SampledSolution, w: f64) -> Result<Vec<ModePolarTrack>> {
    let comps = eta_components(sol, w)?;
    Ok(comps
        .iter()
        .map(|(k, omega, z)| ModePolarTrack::from_z(*k, sol.times(), z, *omega))
        .collect())
}

/// Fits `r ~ Wbar (1 + c/eta)` and `theta ~ -omega (eta - etabar) + c'/eta`
/// for every traveling component of the zero-mean part, and `A + B eta^(-2 nu)`
/// for the mean.
pub fn extract_wave_profile(sol: &SampledSolution, w: f64, opts: &ExtractOptions) -> Result<WaveProfile> {
    let nu = NuIndex::new(w)?;
    if !(w > 0.0) {
        return Err(Error::Unsupported("wave profiles need w > 0".into()));
    }
    let g = *sol.geometry();
    let times = sol.times();
    let first = times.iter().copied().fold(f64::INFINITY, f64::min);
    let slowest = w.sqrt() * g.k_unit();
    if first * slowest < opts.min_phase {
        return Err(Error::WindowTooEarly(format!(
            "window starts at eta = {first}; need eta >= {:.3}",
            opts.min_phase / slowest
        )));
    }
    let comps = eta_components(sol, w)?;
    let fitter = ComponentFitter::new(times, opts.max_cond)?;
    let modes = fit_components(&fitter, &comps, opts)?;
    let mean: Vec<f64> = sol.mean_track().iter().map(|m| m.0).collect();
    Ok(WaveProfile {
        geometry: g,
        w,
        time_variable: TimeVariable::Eta,
        modes,
        homogeneous: fit_homogeneous(times, &mean, nu.two_nu(), opts.max_cond)?,
    })
}

/// Coefficients `a_j(nu)` of the Hankel asymptotic series, up to the point
/// where they terminate or the terms at `x` stop decreasing.
fn hankel_series(nu: f64, x: f64) -> Vec<f64> {
    let mut a = vec![1.0];
    let mu = 4.0 * nu * nu;
    for j in 1..60 {
        let next = a[j - 1] * (mu - ((2 * j - 1) as f64).powi(2)) / (8.0 * j as f64);
        let term = next.abs() / x.powi(j as i32);
        let prev = a[j - 1].abs() / x.powi(j as i32 - 1);
        if next == 0.0 || term >= prev || term < 1e-18 {
            if next != 0.0 && term < prev {
                a.push(next);
            }
            break;
        }
        a.push(next);
    }
    a
}

/// `u(t) = e^(-i omega t) S(omega t)` with `S = sum (-i)^j a_j x^-j`: the
/// exact mode solution of `psi'' + omega^2 psi = (nu^2 - 1/4) psi / t^2`
/// asymptotic to `e^(-i omega t)`. Returns `(u, u')`.
fn incoming_mode(nu: f64, omega: f64, t: f64) -> (Complex64, Complex64) {
    let x = omega * t;
    let a = hankel_series(nu, x);
    let mut s = Complex64::new(0.0, 0.0);
    let mut ds = Complex64::new(0.0, 0.0);
    let mut ipow = Complex64::new(1.0, 0.0);
    for (j, aj) in a.iter().enumerate() {
        let xj = x.powi(-(j as i32));
        s += ipow * aj * xj;
        ds += ipow * aj * (-(j as f64)) * xj / x;
        ipow *= Complex64::new(0.0, -1.0);
    }
    let e = Complex64::from_polar(1.0, -x);
    let u = e * s;
    let du = omega * e * (Complex64::new(0.0, -1.0) * s + ds);
    (u, du)
}

/// The state at `eta_far` of the solution with late-time data `profile`:
/// mean `A + B eta^(-2 nu)` and zero-mean part `eta^(-nu - 1/2) psi` with each
/// traveling component of `psi` the exact mode solution asymptotic to
/// `(Wbar_k / 2) e^(-i omega (eta - etabar_k))`.
pub fn wave_profile_state(profile: &WaveProfile, eta: f64) -> Result<PerturbationState> {
    let w = profile.w;
    let nu = NuIndex::new(w)?;
    let g = profile.geometry;
    let p = nu.nu + 0.5;
    let mut phi = SpectralField::zeros(g);
    let mut dphi = SpectralField::zeros(g);
    let h = profile.homogeneous;
    phi.set_pair([0, 0, 0], Complex64::new(h.a + h.b * eta.powf(-nu.two_nu()), 0.0))?;
    dphi.set_pair([0, 0, 0], Complex64::new(-nu.two_nu() * h.b * eta.powf(-nu.two_nu() - 1.0), 0.0))?;
    let mut seen: BTreeMap<[i64; 3], ()> = BTreeMap::new();
    for m in &profile.modes {
        let k = m.k;
        if seen.contains_key(&negate(k)) {
            continue;
        }
        seen.insert(k, ());
        let omega = w.sqrt() * g.k_unit() * ((k[0].pow(2) + k[1].pow(2) + k[2].pow(2)) as f64).sqrt();
        let (alpha, beta) = profile.amplitudes(k, omega);
        let (u, du) = incoming_mode(nu.nu, omega, eta);
        let psi = alpha * u + beta * u.conj();
        let dpsi = alpha * du + beta * du.conj();
        let s = eta.powf(-p);
        phi.set_pair(k, psi * s)?;
        dphi.set_pair(k, (dpsi - psi * (p / eta)) * s)?;
    }
    PerturbationState::new(eta, phi, dphi)
}

/// Seeds [`wave_profile_state`] at `eta_far` and evolves back to `eta_target`.
pub fn reconstruct_from_wave_profile(
    profile: &WaveProfile,
    eta_far: f64,
    eta_target: f64,
    tol: f64,
) -> Result<PerturbationState> {
    Ok(reconstruct_sampled_from_wave_profile(profile, eta_far, &[eta_target], tol)?.state(0))
}

pub fn reconstruct_sampled_from_wave_profile(
    profile: &WaveProfile,
    eta_far: f64,
    times: &[f64],
    tol: f64,
) -> Result<SampledSolution> {
    if profile.time_variable != TimeVariable::Eta {
        return Err(Error::Unsupported("reconstruction needs a profile in conformal time".into()));
    }
    let seed = wave_profile_state(profile, eta_far)?;
    sample(&seed, Dynamics::linear(profile.w)?, times, tol)
}

/// `ln Omega` with `Omega_tau / Omega = -(3/2) Z Htilde`, tabulated on the
/// background grid and normalised to zero at the initial time.
#[derive(Debug, Clone)]
pub struct OmegaDamping {
    u0: f64,
    du: f64,
    ln_omega: Vec<f64>,
    slope: Vec<f64>,
}

/// Linear part `w` of a law, as seen at low density.
fn late_w(eos: &EquationOfState) -> f64 {
    match eos {
        EquationOfState::Linear { w } | EquationOfState::PowerLaw { w, .. } => *w,
        EquationOfState::Polytropic { .. } => 0.0,
    }
}

impl OmegaDamping {
    pub fn new(traj: &BackgroundTrajectory) -> Result<Self> {
        let eos = traj.eos();
        if let Ok(c) = classify_regime(eos) {
            if c.regime == Regime::Overdamped {
                return Err(Error::Unsupported("overdamped regime: use the frozen profile".into()));
            }
        }
        let samples = traj.samples();
        if samples.len() < 2 {
            return Err(Error::Precondition("background has too few samples".into()));
        }
        // d ln Omega / du = -(3/2) Z h, since Htilde d tau = H d eta = h du
        let rate = |eta: f64, hubble: f64, eps: f64| -> Result<f64> {
            let (_, z) = tau_coefficients(eos, eps)?;
            Ok(-1.5 * z * hubble * eta)
        };
        let u: Vec<f64> = samples.iter().map(|s| s.eta.ln()).collect();
        let du = u[1] - u[0];
        let mut slope = Vec::with_capacity(u.len());
        for s in samples {
            slope.push(rate(s.eta, s.hubble, s.eps)?);
        }
        let mut ln_omega = vec![0.0; u.len()];
        for i in 1..u.len() {
            let h = u[i] - u[i - 1];
            let mid = traj.point_u(u[i - 1] + 0.5 * h);
            let m = rate(mid.eta, mid.hubble, mid.eps)?;
            ln_omega[i] = ln_omega[i - 1] + h / 6.0 * (slope[i - 1] + 4.0 * m + slope[i]);
        }
        let mut out = Self {
            u0: u[0],
            du,
            ln_omega,
            slope,
        };
        let shift = out.eval(traj.eta_initial().ln());
        out.ln_omega.iter_mut().for_each(|v| *v -= shift);
        Ok(out)
    }

    fn eval(&self, u: f64) -> f64 {
        let n = self.ln_omega.len();
        let s = ((u - self.u0) / self.du).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ln_omega[i]
            + (t3 - 2.0 * t2 + t) * self.du * self.slope[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ln_omega[i + 1]
            + (t3 - t2) * self.du * self.slope[i + 1]
    }

    pub fn ln_omega(&self, eta: f64) -> f64 {
        self.eval(eta.ln())
    }

    /// `(eta, ln Omega)` on the background grid.
    pub fn table(&self) -> Vec<(f64, f64)> {
        self.ln_omega
            .iter()
            .enumerate()
            .map(|(i, &v)| ((self.u0 + self.du * i as f64).exp(), v))
            .collect()
    }
}

pub fn omega_damping(traj: &BackgroundTrajectory) -> Result<OmegaDamping> {
    OmegaDamping::new(traj)
}

/// Coefficients of the `tau`-form of the mode equation at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauFrame {
    pub tau: f64,
    /// `f'`.
    pub c2: f64,
    pub y: f64,
    pub z: f64,
    /// `Htilde = H / sqrt(f')`.
    pub htilde: f64,
    pub ln_omega: f64,
}

pub fn tau_frame(traj: &BackgroundTrajectory, omega: &OmegaDamping, eta: f64) -> Result<TauFrame> {
    let p = traj.at(eta)?;
    let (y, z) = tau_coefficients(traj.eos(), p.eps)?;
    Ok(TauFrame {
        tau: p.tau,
        c2: p.sound_speed_sq,
        y,
        z,
        htilde: p.hubble / p.sound_speed_sq.sqrt(),
        ln_omega: omega.ln_omega(eta),
    })
}

/// `(Psi, Psi_tau)` from `(Phi, Phi')` in a frame.
pub fn conjugate(frame: &TauFrame, phi: Complex64, dphi: Complex64) -> (Complex64, Complex64) {
    let inv = (-frame.ln_omega).exp();
    let psi = phi * inv;
    let dpsi = (dphi / frame.c2.sqrt() + phi * (1.5 * frame.z * frame.htilde)) * inv;
    (psi, dpsi)
}

/// Potential `A` in `Psi_tau tau = Delta Psi + Htilde^2 A Psi`:
/// `A = (3/2) (Z Htilde)_tau / Htilde^2 + (9/4) Z^2 - 3 Y`.
pub fn tau_potential(traj: &BackgroundTrajectory, eta: f64) -> Result<f64> {
    let p = traj.at(eta)?;
    let d = traj.eos().derivatives(p.eps)?;
    let (y, z) = tau_coefficients(traj.eos(), p.eps)?;
    let (eps, f, f1, f2, f3) = (d.eps, d.f, d.df, d.d2f, d.d3f);
    let deps = -3.0 * p.hubble * (eps + f);
    let dz_deps = f2 - (1.0 + f1) * f2 / (2.0 * f1) - (eps + f) * (f3 / (2.0 * f1) - f2 * f2 / (2.0 * f1 * f1));
    let dh = -0.5 * traj.kappa() * p.a * p.a * (eps + 3.0 * f);
    let sq = f1.sqrt();
    let ht = p.hubble / sq;
    let dht = dh / sq - 0.5 * p.hubble * f2 * deps / (f1 * sq);
    let d_zht_tau = (dz_deps * deps * ht + z * dht) / sq;
    Ok(1.5 * d_zht_tau / (ht * ht) + 2.25 * z * z - 3.0 * y)
}

/// Overdamped limit `Phi -> Phi0 + s^2 Q + ...` with `s = tau_inf - tau`.
#[derive(Debug, Clone)]
pub struct FrozenProfile {
    pub sigma: f64,
    pub tau_inf: f64,
    pub phi0: SpectralField,
    pub quad_coeff: SpectralField,
    /// `lambda` minimising `|Q - lambda Delta Phi0|` in L2.
    pub coefficient_ratio: f64,
    /// `|Q - c Delta Phi0| / |c Delta Phi0|` with `c = (sigma - 1/3) / (4 - 2 sigma)`.
    pub quad_rel_err: f64,
}

impl FrozenProfile {
    /// Writes `<stem>_phi0.json`, `<stem>_quad.json` (with binary sidecars)
    /// and `<stem>.json` with the scalars.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_field(&dir.join(format!("{stem}_phi0.json")), &FieldData::Spectral(self.phi0.clone()))?;
        write_field(&dir.join(format!("{stem}_quad.json")), &FieldData::Spectral(self.quad_coeff.clone()))?;
        #[derive(Serialize)]
        struct Meta {
            sigma: f64,
            tau_inf: f64,
            quad_rel_err: f64,
            coefficient_ratio: f64,
        }
        let meta = Meta {
            sigma: self.sigma,
            tau_inf: self.tau_inf,
            quad_rel_err: self.quad_rel_err,
            coefficient_ratio: self.coefficient_ratio,
        };
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}

/// Critical case: only the growth of `tau` and the limit of `Htilde`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalReport {
    /// `d tau / d ln eta` over the last decade of `eta`.
    pub tau_log_slope: f64,
    /// `(max - min) / mean` of `Htilde` over the last decade of `tau`.
    pub htilde_variation: f64,
    pub htilde_final: f64,
}

#[derive(Debug, Clone)]
pub enum LateTimeResult {
    Wave(WaveProfile),
    Frozen(FrozenProfile),
    Critical(CriticalReport),
}

/// Late-time data of a solution on a general background, chosen by regime.
pub fn general_latetime_extract(
    traj: &BackgroundTrajectory,
    sol: &SampledSolution,
    opts: &ExtractOptions,
) -> Result<LateTimeResult> {
    let class = classify_regime(traj.eos())?;
    for &t in sol.times() {
        traj.check_covers(t)?;
    }
    match class.regime {
        Regime::Underdamped => tau_wave_profile(traj, sol, opts).map(LateTimeResult::Wave),
        Regime::Overdamped => frozen_profile(traj, sol, class.sigma.unwrap_or(f64::NAN)).map(LateTimeResult::Frozen),
        Regime::Critical => critical_report(traj).map(LateTimeResult::Critical),
    }
}

fn tau_wave_profile(traj: &BackgroundTrajectory, sol: &SampledSolution, opts: &ExtractOptions) -> Result<WaveProfile> {
    let omega = OmegaDamping::new(traj)?;
    let g = *sol.geometry();
    let frames: Vec<TauFrame> = sol
        .times()
        .iter()
        .map(|&t| tau_frame(traj, &omega, t))
        .collect::<Result<_>>()?;
    let taus: Vec<f64> = frames.iter().map(|f| f.tau).collect();
    let mut comps: ComponentSeries = Vec::new();
    for h in sol.mode_histories() {
        let kk = g.k_unit() * ((h.k[0].pow(2) + h.k[1].pow(2) + h.k[2].pow(2)) as f64).sqrt();
        let (mut zp, mut zm) = (Vec::new(), Vec::new());
        for ((f, &phi), &dphi) in frames.iter().zip(&h.phi).zip(&h.dphi) {
            let (psi, dpsi) = conjugate(f, phi, dphi);
            let i_over = Complex64::new(0.0, 1.0 / kk);
            zp.push(psi + i_over * dpsi);
            zm.push(psi.conj() + i_over * dpsi.conj());
        }
        comps.push((h.k, kk, zp));
        comps.push((negate(h.k), kk, zm));
    }
    let slowest = g.k_unit();
    let first = taus.iter().copied().fold(f64::INFINITY, f64::min);
    if first * slowest < opts.min_phase {
        return Err(Error::WindowTooEarly(format!("window starts at tau = {first:.3}")));
    }
    let fitter = ComponentFitter::new(&taus, opts.max_cond)?;
    let modes = fit_components(&fitter, &comps, opts)?;
    let w = late_w(traj.eos());
    let nu = NuIndex::new(w)?;
    let mean: Vec<f64> = sol.mean_track().iter().map(|m| m.0).collect();
    Ok(WaveProfile {
        geometry: g,
        w,
        time_variable: TimeVariable::Tau,
        modes,
        homogeneous: fit_homogeneous(sol.times(), &mean, nu.two_nu(), opts.max_cond)?,
    })
}

fn frozen_profile(traj: &BackgroundTrajectory, sol: &SampledSolution, sigma: f64) -> Result<FrozenProfile> {
    let hi = traj.eta_max();
    let limit = tau_limit(traj, (hi / 10.0, hi))?;
    let tau_inf = limit.tau_inf;
    let times = sol.times();
    if times.len() < 5 {
        return Err(Error::Inconclusive("frozen-profile fit needs at least five samples".into()));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let x: Vec<f64> = order
        .iter()
        .map(|&i| traj.at(times[i]).map(|p| (tau_inf - p.tau).powi(2)))
        .collect::<Result<_>>()?;
    if x.iter().any(|v| !(*v > 0.0)) || x.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::Inconclusive(format!(
            "tau does not approach its limit {tau_inf:e} monotonically in the window"
        )));
    }
    let n = x.len();
    let last = [n - 3, n - 2, n - 1];
    // Lagrange weights of the quadratic in s^2 through the last three samples, at s = 0
    let lw: Vec<f64> = last
        .iter()
        .map(|&i| {
            last.iter()
                .filter(|&&j| j != i)
                .map(|&j| -x[j] / (x[i] - x[j]))
                .product()
        })
        .collect();
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
    let solver = LstsqSolver::new(&rows, &vec![1.0; n], 1e12)?;
    let g = *sol.geometry();
    let mut phi0 = SpectralField::zeros(g);
    let mut quad = SpectralField::zeros(g);
    let mut tracks: Vec<([i64; 3], Vec<Complex64>)> =
        vec![([0, 0, 0], sol.mean_track().iter().map(|m| Complex64::new(m.0, 0.0)).collect())];
    tracks.extend(sol.mode_histories().into_iter().map(|h| (h.k, h.phi)));
    for (k, phi) in tracks {
        let sorted: Vec<Complex64> = order.iter().map(|&i| phi[i]).collect();
        let p0: Complex64 = last.iter().zip(&lw).map(|(&i, &l)| sorted[i] * l).sum();
        let scaled: Vec<Complex64> = sorted.iter().zip(&x).map(|(p, &v)| (p - p0) / v).collect();
        let (cr, _) = solver.solve(&scaled.iter().map(|c| c.re).collect::<Vec<_>>());
        let (ci, _) = solver.solve(&scaled.iter().map(|c| c.im).collect::<Vec<_>>());
        phi0.set_pair(k, p0)?;
        quad.set_pair(k, Complex64::new(cr[0], ci[0]))?;
    }
    let lap = laplacian(&phi0);
    let dot: f64 = lap
        .coeffs()
        .iter()
        .zip(quad.coeffs())
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    let norm2 = lap.sum_sq();
    let coefficient_ratio = if norm2 > 0.0 { dot / norm2 } else { f64::NAN };
    let expected = lap.scale((sigma - 1.0 / 3.0) / (4.0 - 2.0 * sigma));
    let quad_rel_err = quad.sub(&expected)?.norm_l2() / expected.norm_l2();
    Ok(FrozenProfile {
        sigma,
        tau_inf,
        phi0,
        quad_coeff: quad,
        coefficient_ratio,
        quad_rel_err,
    })
}

/// `Htilde` along the background, `(tau, Htilde)`.
pub fn htilde_track(traj: &BackgroundTrajectory) -> Vec<(f64, f64)> {
    traj.samples()
        .iter()
        .zip(traj.eos_samples())
        .map(|(s, d)| (s.tau, s.hubble / d.df.sqrt()))
        .collect()
}

fn critical_report(traj: &BackgroundTrajectory) -> Result<CriticalReport> {
    let samples = traj.samples();
    let hi = traj.eta_max();
    let tail: Vec<_> = samples.iter().filter(|s| s.eta >= hi / 10.0).collect();
    let lx: Vec<f64> = tail.iter().map(|s| s.eta.ln()).collect();
    let ty: Vec<f64> = tail.iter().map(|s| s.tau).collect();
    let (_, tau_log_slope) = crate::fit::line(&lx, &ty)?;
    let track = htilde_track(traj);
    let tau_end = track.last().map_or(0.0, |t| t.0);
    if !(tau_end > 0.0) {
        return Err(Error::Inconclusive("tau does not grow along the trajectory".into()));
    }
    let last: Vec<f64> = track.iter().filter(|t| t.0 >= tau_end / 10.0).map(|t| t.1).collect();
    let max = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = last.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    Ok(CriticalReport {
        tau_log_slope,
        htilde_variation: (max - min) / mean,
        htilde_final: *last.last().unwrap_or(&f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_examples() {
        let (w, k) = (1.0f64 / 3.0, 2.0);
        let om = w.sqrt() * k;
        assert_eq!(mode_polar(1.0, 0.0, k, w).unwrap(), (1.0, 0.0));
        let (r, th) = mode_polar(0.0, om, k, w).unwrap();
        assert!((r - 1.0).abs() < 1e-15 && (th - PI / 2.0).abs() < 1e-15);
        assert!(matches!(mode_polar(1.0, 0.0, k, 0.0), Err(Error::Unsupported(_))));
        let (p, dp) = polar_to_mode(0.7, 2.1, k, w).unwrap();
        let (r, th) = mode_polar(p, dp, k, w).unwrap();
        assert!((r - 0.7).abs() < 1e-15 && (th - 2.1).abs() < 1e-15);
    }

    #[test]
    fn psi_transform_roundtrip() {
        let g = TorusGeometry::default();
        let phi = SpectralField::from_modes(g, &[([1, 0, 2], Complex64::new(0.3, -0.1))]).unwrap();
        let dphi = SpectralField::from_modes(g, &[([0, 1, 1], Complex64::new(-0.2, 0.5))]).unwrap();
        let st = PerturbationState::new(3.0, phi, dphi).unwrap();
        let back = inverse_psi_transform(&psi_transform(&st, 0.2).unwrap(), 0.2).unwrap();
        assert!(back.phi.sub(&st.phi).unwrap().max_abs() < 1e-15);
        assert!(back.dphi.sub(&st.dphi).unwrap().max_abs() < 1e-15);
        let with_mean = PerturbationState::new(3.0, SpectralField::constant(g, 1.0), SpectralField::zeros(g)).unwrap();
        assert!(matches!(psi_transform(&with_mean, 0.2), Err(Error::Precondition(_))));
    }

    #[test]
    fn incoming_mode_solves_the_psi_equation() {
        for nu in [1.5, 2.0, 1.2] {
            let omega = 0.9;
            for t in [50.0, 400.0] {
                let h = 1e-4;
                let (u, _) = incoming_mode(nu, omega, t);
                let (_, dp) = incoming_mode(nu, omega, t + h);
                let (_, dm) = incoming_mode(nu, omega, t - h);
                let d2 = (dp - dm) / (2.0 * h);
                let resid = d2 + u * (omega * omega - (nu * nu - 0.25) / (t * t));
                assert!(resid.norm() < 1e-7, "nu {nu} t {t}: {}", resid.norm());
            }
        }
        // half-integer order terminates: exactly e^(-ix)(1 - i/x) for nu = 3/2
        let (u, _) = incoming_mode(1.5, 1.0, 10.0);
        let exact = Complex64::from_polar(1.0, -10.0) * Complex64::new(1.0, -0.1);
        assert!((u - exact).norm() < 1e-15);
    }

    #[test]
    fn homogeneous_fit_exact_and_degenerate() {
        let times: Vec<f64> = crate::fit::geomspace(1.0, 10.0, 30);
        let vals: Vec<f64> = times.iter().map(|t| 0.7 - 1.3 * t.powf(-3.0)).collect();
        let h = fit_homogeneous(&times, &vals, 3.0, 1e12).unwrap();
        assert!((h.a - 0.7).abs() < 1e-12 && (h.b + 1.3).abs() < 1e-12 && !h.degenerate);
        let decay: Vec<f64> = times.iter().map(|t| 2.0 * t.powf(-3.0)).collect();
        let h = fit_homogeneous(&times, &decay, 3.0, 1e12).unwrap();
        assert!(h.a.abs() < 1e-12 && (h.b - 2.0).abs() < 1e-12);
        let late: Vec<f64> = crate::fit::geomspace(1e110, 1e111, 10);
        let h = fit_homogeneous(&late, &vec![0.5; 10], 3.0, 1e12).unwrap();
        assert!(h.degenerate && h.b == 0.0 && h.a == 0.5);
    }

    #[test]
    fn manufactured_cosine_is_recovered() {
        let g = TorusGeometry::default();
        let w = 1.0f64 / 3.0;
        let k = [1, 2, 0];
        let omega = w.sqrt() * 5f64.sqrt();
        let etabar = 1.234;
        let nu = NuIndex::new(w).unwrap();
        let p = nu.nu + 0.5;
        let times = crate::fit::linspace(200.0, 400.0, 300);
        let states: Vec<PerturbationState> = times
            .iter()
            .map(|&t| {
                let psi = (omega * (t - etabar)).cos();
                let dpsi = -omega * (omega * (t - etabar)).sin();
                let phi = psi * t.powf(-p);
                let dphi = (dpsi - p * psi / t) * t.powf(-p);
                PerturbationState::new(
                    t,
                    SpectralField::from_modes(g, &[(k, Complex64::new(phi, 0.0))]).unwrap(),
                    SpectralField::from_modes(g, &[(k, Complex64::new(dphi, 0.0))]).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let sol = SampledSolution::from_states(&states).unwrap();
        let prof = extract_wave_profile(&sol, w, &ExtractOptions::default()).unwrap();
        for kk in [k, negate(k)] {
            let m = prof.mode(kk).unwrap();
            assert!((m.wbar - 1.0).abs() < 1e-10);
            assert!((m.etabar - etabar).abs() < 1e-10);
            assert!((m.phase_slope + omega).abs() < 1e-10 * omega);
        }
    }
}
