//! Mode-by-mode evolution of the perturbation potential.
//!
//! Every Fourier mode obeys a linear second-order ODE whose coefficients
//! depend only on `|k|^2`. For each shell of equal integer `|k|^2` the
//! evolver integrates the 2x2 fundamental matrix once, in `u = ln eta`, and
//! applies it to all coefficients of the shell. This makes the evolution
//! exactly linear and keeps Hermitian symmetry intact.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::background::{Background, BackgroundTrajectory};
use crate::error::{Error, Result};
use crate::ode::{Dop853, ErrorNorm, OdeFailure};
use crate::spectral::{laplacian, SpectralField, TorusGeometry};

/// `nu = (5 + 3w) / (2 (1 + 3w))` for a linear equation of state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuIndex {
    pub w: f64,
    pub nu: f64,
}

/// Distance from an integer below which `nu` counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-9;
/// Distance from an integer below which a warning is issued.
pub const NEAR_RESONANCE_TOL: f64 = 1e-3;

impl NuIndex {
    pub fn new(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("w = {w} outside [0, 1]")));
        }
        Ok(Self {
            w,
            nu: 0.5 * (5.0 + 3.0 * w) / (1.0 + 3.0 * w),
        })
    }

    pub fn two_nu(&self) -> f64 {
        2.0 * self.nu
    }

    /// Friction coefficient `2 nu + 1`, equal to `6 (1 + w) / (1 + 3w)`.
    pub fn friction(&self) -> f64 {
        2.0 * self.nu + 1.0
    }

    pub fn is_integer(&self) -> bool {
        (self.nu - self.nu.round()).abs() < RESONANCE_TOL
    }

    /// True when `nu` is close to, but not at, an integer.
    pub fn near_resonant(&self) -> bool {
        let d = (self.nu - self.nu.round()).abs();
        (RESONANCE_TOL..NEAR_RESONANCE_TOL).contains(&d)
    }
}

/// `(Phi, Phi')` at one conformal time.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    pub eta: f64,
    pub phi: SpectralField,
    pub dphi: SpectralField,
}

impl PerturbationState {
    pub fn new(eta: f64, phi: SpectralField, dphi: SpectralField) -> Result<Self> {
        phi.check_same(&dphi)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!("eta = {eta} must be positive")));
        }
        Ok(Self { eta, phi, dphi })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.phi.geometry()
    }

    /// The spatially homogeneous part `(mean Phi, mean Phi')`.
    pub fn mean(&self) -> (f64, f64) {
        (self.phi.mean(), self.dphi.mean())
    }

    /// Copy with the spatial means removed.
    pub fn zero_mean(&self) -> Self {
        let strip = |f: &SpectralField| crate::spectral::zero_mean_split(f).1;
        Self {
            eta: self.eta,
            phi: strip(&self.phi),
            dphi: strip(&self.dphi),
        }
    }

    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        Ok(Self {
            eta: self.eta,
            phi: self.phi.axpy(s, &other.phi)?,
            dphi: self.dphi.axpy(s, &other.dphi)?,
        })
    }
}

/// Coefficients of the mode equation.
#[derive(Debug, Clone, Copy)]
pub enum Dynamics<'a> {
    /// `p = w eps`: the coefficients are explicit powers of `eta`.
    Linear(NuIndex),
    /// General barotropic law on a tabulated background.
    General(&'a BackgroundTrajectory),
}

impl Dynamics<'_> {
    pub fn linear(w: f64) -> Result<Self> {
        Ok(Dynamics::Linear(NuIndex::new(w)?))
    }
}

/// `(u', u'')` for `u'' = -(2 nu + 1) u' / eta - w |k|^2 u`; `k2` is the
/// physical `|k|^2`.
pub fn mode_rhs_linear(w: f64, k2: f64, eta: f64, (u, du): (f64, f64)) -> Result<(f64, f64)> {
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("mode equation at eta = {eta}")));
    }
    let nu = NuIndex::new(w)?;
    Ok((du, -nu.friction() * du / eta - w * k2 * u))
}

/// `(u', u'')` for `u'' = -3 (1 + f') H u' - 3 (f' - f/eps) H^2 u - f' |k|^2 u`.
pub fn mode_rhs_general(
    traj: &BackgroundTrajectory,
    k2: f64,
    eta: f64,
    (u, du): (f64, f64),
) -> Result<(f64, f64)> {
    let p = traj.at(eta)?;
    let c2 = p.sound_speed_sq;
    let h = p.hubble;
    Ok((
        du,
        -3.0 * (1.0 + c2) * h * du - 3.0 * (c2 - p.f_over_eps) * h * h * u - c2 * k2 * u,
    ))
}

/// Maps `(Phi, Phi')` at the start time to `(Phi, Phi')` at a later (or earlier) time.
pub type Propagator = [[f64; 2]; 2];

fn apply(m: &Propagator, phi: Complex64, dphi: Complex64) -> (Complex64, Complex64) {
    (phi * m[0][0] + dphi * m[0][1], phi * m[1][0] + dphi * m[1][1])
}

/// Internal variables: `(Phi, V)` with `V = Phi' / s` for a per-shell scale `s`.
/// Oscillating shells use `s` equal to the wave frequency so that the pair
/// error norm follows the phase-space amplitude.
struct ShellSystem<'a> {
    dynamics: Dynamics<'a>,
    k2: f64,
    scale: f64,
}

impl ShellSystem<'_> {
    fn new<'a>(dynamics: Dynamics<'a>, k2: f64) -> ShellSystem<'a> {
        let k = k2.sqrt();
        let scale = match dynamics {
            Dynamics::Linear(nu) if k2 > 0.0 && nu.w > 0.0 => nu.w.sqrt() * k,
            Dynamics::General(_) if k2 > 0.0 => k,
            _ => 1.0,
        };
        ShellSystem { dynamics, k2, scale }
    }

    /// `d(Phi, V)/du` with `V = Phi' / scale`, or `V = eta Phi'` when `k = 0`.
    fn rhs(&self, u: f64, y: [f64; 2]) -> [f64; 2] {
        let eta = u.exp();
        let (phi, v) = (y[0], y[1]);
        if self.k2 == 0.0 {
            // v = eta Phi'
            return match self.dynamics {
                Dynamics::Linear(nu) => [v, -2.0 * nu.nu * v],
                Dynamics::General(t) => {
                    let (h, q, c2) = t.mode_coefficients(u);
                    [v, v * (1.0 - 3.0 * (1.0 + c2) * h) - 3.0 * (c2 - q) * h * h * phi]
                }
            };
        }
        let s = self.scale;
        match self.dynamics {
            Dynamics::Linear(nu) => [s * eta * v, -nu.friction() * v - s * eta * phi],
            Dynamics::General(t) => {
                let (h, q, c2) = t.mode_coefficients(u);
                [
                    s * eta * v,
                    -3.0 * (1.0 + c2) * h * v
                        - 3.0 * (c2 - q) * h * h * phi / (s * eta)
                        - c2 * self.k2 / s * eta * phi,
                ]
            }
        }
    }

    fn to_internal(&self, eta: f64, dphi: f64) -> f64 {
        if self.k2 == 0.0 {
            eta * dphi
        } else {
            dphi / self.scale
        }
    }

    fn from_internal(&self, eta: f64, v: f64) -> f64 {
        if self.k2 == 0.0 {
            v / eta
        } else {
            v * self.scale
        }
    }

    /// Closed form `Phi = A + B eta^(-2 nu)` (or `A + B ln eta` when
    /// `nu = 0`) where it applies.
    fn closed_form(&self) -> Option<f64> {
        match self.dynamics {
            Dynamics::Linear(nu) if self.k2 == 0.0 || nu.w == 0.0 => Some(nu.two_nu()),
            _ => None,
        }
    }

    fn propagators(&self, shell: i64, eta0: f64, times: &[f64], tol: f64) -> Result<Vec<Propagator>> {
        if self.closed_form() == Some(0.0) {
            return Ok(times
                .iter()
                .map(|&t| [[1.0, eta0 * (t / eta0).ln()], [0.0, eta0 / t]])
                .collect());
        }
        if let Some(p) = self.closed_form() {
            return Ok(times
                .iter()
                .map(|&t| {
                    let r = (eta0 / t).powf(p);
                    // B = -Phi'_0 eta0^(p+1) / p, A = Phi_0 - B eta0^-p
                    [[1.0, eta0 / p * (1.0 - r)], [0.0, r * eta0 / t]]
                })
                .collect());
        }
        let mut out = vec![[[0.0; 2]; 2]; times.len()];
        let u0 = eta0.ln();
        let utimes: Vec<f64> = times.iter().map(|t| t.ln()).collect();
        let solver = Dop853::new(tol, tol * 1e-20).with_norm(ErrorNorm::Paired);
        let y0 = [1.0, 0.0, 0.0, self.to_internal(eta0, 1.0)];
        let rhs = |u: f64, y: &[f64; 4]| {
            let a = self.rhs(u, [y[0], y[1]]);
            let b = self.rhs(u, [y[2], y[3]]);
            [a[0], a[1], b[0], b[1]]
        };
        solver
            .integrate_through(rhs, u0, y0, &utimes, |i, y| {
                let eta = times[i];
                out[i] = [
                    [y[0], y[2]],
                    [self.from_internal(eta, y[1]), self.from_internal(eta, y[3])],
                ];
            })
            .map_err(|f| match f {
                OdeFailure::NonFinite { t } => {
                    Error::Numeric(format!("non-finite mode solution at eta = {} (|k|^2 = {shell})", t.exp()))
                }
                other => Error::Stiffness {
                    eta: other.time().exp(),
                    shell,
                },
            })?;
        Ok(out)
    }
}

/// Propagators of a single mode with physical `|k|^2 = k2` at each of `times`
/// (all on one side of `eta0`, monotone). `shell` only labels errors.
pub fn mode_propagators(
    dynamics: Dynamics,
    k2: f64,
    shell: i64,
    eta0: f64,
    times: &[f64],
    tol: f64,
) -> Result<Vec<Propagator>> {
    check_range(&dynamics, eta0, times)?;
    ShellSystem::new(dynamics, k2).propagators(shell, eta0, times, tol)
}

fn check_range(dynamics: &Dynamics, eta0: f64, times: &[f64]) -> Result<()> {
    if !(eta0 > 0.0) || times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Domain("evolution times must be positive".into()));
    }
    if let Dynamics::General(t) = dynamics {
        t.check_covers(eta0)?;
        for &e in times {
            t.check_covers(e)?;
        }
    }
    Ok(())
}

/// Shells `|k|^2` (in units of `(2 pi / L)^2`) that carry data in `state`.
fn active_shells(state: &PerturbationState) -> Vec<i64> {
    let g = state.geometry();
    let mut shells: Vec<i64> = (0..g.len())
        .filter(|&i| state.phi.coeffs()[i].norm() > 0.0 || state.dphi.coeffs()[i].norm() > 0.0)
        .map(|i| g.k2(i))
        .collect();
    shells.sort_unstable();
    shells.dedup();
    shells
}

/// Propagators for each shell at each of `times`. Times on either side of
/// `eta0` are allowed; each side is integrated outward from `eta0`.
pub fn shell_propagators(
    dynamics: Dynamics,
    geometry: &TorusGeometry,
    shells: &[i64],
    eta0: f64,
    times: &[f64],
    tol: f64,
) -> Result<BTreeMap<i64, Vec<Propagator>>> {
    check_range(&dynamics, eta0, times)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let unit2 = geometry.k_unit() * geometry.k_unit();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let split = order.partition_point(|&i| times[i] < eta0);
    let later: Vec<usize> = order[split..].to_vec();
    let earlier: Vec<usize> = order[..split].iter().rev().copied().collect();

    let results: Vec<Result<(i64, Vec<Propagator>)>> = shells
        .par_iter()
        .map(|&shell| {
            let sys = ShellSystem::new(dynamics, unit2 * shell as f64);
            let mut props = vec![[[0.0; 2]; 2]; times.len()];
            for side in [&later, &earlier] {
                if side.is_empty() {
                    continue;
                }
                let ts: Vec<f64> = side.iter().map(|&i| times[i]).collect();
                for (&i, p) in side.iter().zip(sys.propagators(shell, eta0, &ts, tol)?) {
                    props[i] = p;
                }
            }
            Ok((shell, props))
        })
        .collect();
    results.into_iter().collect()
}

/// Evolves `state` to `eta_target` with per-step relative tolerance `tol`.
pub fn evolve(state: &PerturbationState, dynamics: Dynamics, eta_target: f64, tol: f64) -> Result<PerturbationState> {
    let sol = sample(state, dynamics, &[eta_target], tol)?;
    Ok(sol.state(0))
}

/// States at each of `times`.
pub fn evolve_many(
    state: &PerturbationState,
    dynamics: Dynamics,
    times: &[f64],
    tol: f64,
) -> Result<Vec<PerturbationState>> {
    let sol = sample(state, dynamics, times, tol)?;
    Ok((0..times.len()).map(|i| sol.state(i)).collect())
}

/// Solution recorded at a list of times, for every mode that carries data.
/// Only one representative of each `+-k` pair is stored.
#[derive(Debug, Clone)]
pub struct SampledSolution {
    geometry: TorusGeometry,
    times: Vec<f64>,
    /// Storage indices of the tracked modes (always includes 0).
    modes: Vec<usize>,
    /// `phi[m][i]`: coefficient of mode `modes[m]` at `times[i]`.
    phi: Vec<Vec<Complex64>>,
    dphi: Vec<Vec<Complex64>>,
}

/// Evolves `state` and records it at every entry of `times`.
pub fn sample(state: &PerturbationState, dynamics: Dynamics, times: &[f64], tol: f64) -> Result<SampledSolution> {
    let g = *state.geometry();
    let shells = active_shells(state);
    let props = shell_propagators(dynamics, &g, &shells, state.eta, times, tol)?;
    let mut modes = vec![0];
    modes.extend(
        state
            .phi
            .half_space()
            .into_iter()
            .filter(|&i| state.phi.coeffs()[i].norm() > 0.0 || state.dphi.coeffs()[i].norm() > 0.0),
    );
    let mut phi = Vec::with_capacity(modes.len());
    let mut dphi = Vec::with_capacity(modes.len());
    for &m in &modes {
        let (p0, d0) = (state.phi.coeffs()[m], state.dphi.coeffs()[m]);
        let (mut pt, mut dt) = (Vec::with_capacity(times.len()), Vec::with_capacity(times.len()));
        match props.get(&g.k2(m)) {
            Some(ps) => {
                for p in ps {
                    let (a, b) = apply(p, p0, d0);
                    pt.push(a);
                    dt.push(b);
                }
            }
            None => {
                pt.resize(times.len(), Complex64::new(0.0, 0.0));
                dt.resize(times.len(), Complex64::new(0.0, 0.0));
            }
        }
        phi.push(pt);
        dphi.push(dt);
    }
    Ok(SampledSolution {
        geometry: g,
        times: times.to_vec(),
        modes,
        phi,
        dphi,
    })
}

/// History of one Fourier coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeHistory {
    pub k: [i64; 3],
    pub phi: Vec<Complex64>,
    pub dphi: Vec<Complex64>,
}

impl SampledSolution {
    /// Collects precomputed states (all on one geometry) into a sampled solution.
    pub fn from_states(states: &[PerturbationState]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::Precondition("no states to sample".into()))?;
        let g = *first.geometry();
        let mut modes = vec![0];
        modes.extend(first.phi.half_space().into_iter().filter(|&i| {
            states
                .iter()
                .any(|s| s.phi.coeffs()[i].norm() > 0.0 || s.dphi.coeffs()[i].norm() > 0.0)
        }));
        for s in states {
            if *s.geometry() != g {
                return Err(Error::Precondition("states live on different geometries".into()));
            }
        }
        let pick = |f: fn(&PerturbationState) -> &SpectralField| -> Vec<Vec<Complex64>> {
            modes
                .iter()
                .map(|&m| states.iter().map(|s| f(s).coeffs()[m]).collect())
                .collect()
        };
        Ok(Self {
            geometry: g,
            times: states.iter().map(|s| s.eta).collect(),
            phi: pick(|s| &s.phi),
            dphi: pick(|s| &s.dphi),
            modes,
        })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Tracked modes, mean first, then one member of each `+-k` pair.
    pub fn mode_indices(&self) -> &[usize] {
        &self.modes
    }

    pub fn state(&self, i: usize) -> PerturbationState {
        let g = self.geometry;
        let mut phi = SpectralField::zeros(g);
        let mut dphi = SpectralField::zeros(g);
        for (m, &idx) in self.modes.iter().enumerate() {
            let k = g.wavevector(idx);
            phi.set_pair(k, self.phi[m][i]).expect("tracked mode is resolved");
            dphi.set_pair(k, self.dphi[m][i]).expect("tracked mode is resolved");
        }
        PerturbationState {
            eta: self.times[i],
            phi,
            dphi,
        }
    }

    /// `(mean Phi, mean Phi')` at every sample.
    pub fn mean_track(&self) -> Vec<(f64, f64)> {
        self.phi[0].iter().zip(&self.dphi[0]).map(|(p, d)| (p.re, d.re)).collect()
    }

    /// Tracks of all non-constant modes.
    pub fn mode_histories(&self) -> Vec<ModeHistory> {
        self.modes
            .iter()
            .enumerate()
            .skip(1)
            .map(|(m, &idx)| ModeHistory {
                k: self.geometry.wavevector(idx),
                phi: self.phi[m].clone(),
                dphi: self.dphi[m].clone(),
            })
            .collect()
    }

    /// Track of the mode with wave vector `k` (or of `-k`, conjugated).
    pub fn mode(&self, k: [i64; 3]) -> Option<ModeHistory> {
        let idx = self.geometry.index(k)?;
        let mirror = self.geometry.mirror(idx);
        for (m, &i) in self.modes.iter().enumerate() {
            if i == idx || i == mirror {
                let conj = i != idx;
                let f = |v: &Vec<Complex64>| v.iter().map(|c| if conj { c.conj() } else { *c }).collect();
                return Some(ModeHistory {
                    k,
                    phi: f(&self.phi[m]),
                    dphi: f(&self.dphi[m]),
                });
            }
        }
        None
    }
}

/// `E1 = (1/2) integral |Phi'|^2 + w |grad Phi|^2` and the weighted
/// `eta^(2 (2 nu + 1)) E1`.
pub fn energy_e1(state: &PerturbationState, w: f64) -> Result<(f64, f64)> {
    let nu = NuIndex::new(w)?;
    let e = quadratic_energy(&state.phi, &state.dphi, w);
    Ok((e, state.eta.powf(2.0 * nu.friction()) * e))
}

fn quadratic_energy(f: &SpectralField, df: &SpectralField, w: f64) -> f64 {
    let g = f.geometry();
    let sum: f64 = f
        .coeffs()
        .iter()
        .zip(df.coeffs())
        .enumerate()
        .map(|(i, (c, d))| d.norm_sqr() + w * g.laplacian_magnitude(i) * c.norm_sqr())
        .sum();
    0.5 * g.volume() * sum
}

fn check_zero_mean(state: &PerturbationState) -> Result<()> {
    let scale = state.phi.max_abs().max(state.dphi.max_abs());
    let (m, dm) = state.mean();
    if m.abs().max(dm.abs()) > 1e-12 * scale {
        return Err(Error::Precondition(format!(
            "state has nonzero mean ({m:e}, {dm:e})"
        )));
    }
    Ok(())
}

/// `(psi, psi')` with `psi = eta^(nu + 1/2) Phi`, for zero-mean data.
pub fn psi_fields(state: &PerturbationState, w: f64) -> Result<(SpectralField, SpectralField)> {
    check_zero_mean(state)?;
    let nu = NuIndex::new(w)?;
    let p = nu.nu + 0.5;
    let eta = state.eta;
    let psi = state.phi.scale(eta.powf(p));
    let dpsi = state.dphi.scale(eta.powf(p)).axpy(p * eta.powf(p - 1.0), &state.phi)?;
    Ok((psi, dpsi))
}

/// `E3 = (1/2) integral |psi'|^2 + w |grad psi|^2`.
pub fn psi_energy_e3(state: &PerturbationState, w: f64) -> Result<f64> {
    let (psi, dpsi) = psi_fields(state, w)?;
    Ok(quadratic_energy(&psi, &dpsi, w))
}

/// `delta eps / eps = -2 Phi - 2 Phi' / H + (2/3) Delta Phi / H^2`.
pub fn density_contrast(state: &PerturbationState, bg: &dyn Background) -> Result<SpectralField> {
    let h = bg.point(state.eta)?.hubble;
    let lap = laplacian(&state.phi);
    state
        .phi
        .scale(-2.0)
        .axpy(-2.0 / h, &state.dphi)?
        .axpy(2.0 / (3.0 * h * h), &lap)
}

/// `delta eps = (-3 H Phi' - 3 H^2 Phi + Delta Phi) / (4 pi G a^2)`.
pub fn delta_epsilon(state: &PerturbationState, bg: &dyn Background) -> Result<SpectralField> {
    let p = bg.point(state.eta)?;
    let four_pi_g = 1.5 * bg.kappa();
    let pre = 1.0 / (four_pi_g * p.a * p.a);
    let h = p.hubble;
    let lap = laplacian(&state.phi);
    Ok(lap
        .axpy(-3.0 * h, &state.dphi)?
        .axpy(-3.0 * h * h, &state.phi)?
        .scale(pre))
}

/// Writes `eta,E1,weightedE1,E3,mean_phi` for each state. `E3` is taken of the
/// zero-mean part.
pub fn write_energy_csv<W: Write>(mut out: W, states: &[PerturbationState], w: f64) -> Result<()> {
    writeln!(out, "eta,E1,weightedE1,E3,mean_phi")?;
    for s in states {
        let (e1, we1) = energy_e1(s, w)?;
        let e3 = psi_energy_e3(&s.zero_mean(), w)?;
        writeln!(out, "{:e},{:e},{:e},{:e},{:e}", s.eta, e1, we1, e3, s.phi.mean())?;
    }
    Ok(())
}
