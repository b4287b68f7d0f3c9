//! Homogeneous FLRW background.
//!
//! The Friedmann and continuity equations are integrated in `u = ln(eta)`
//! for the state `(ln a, h, ln eps, tau)` with `h = eta * H`. Working with
//! logarithms keeps the relative accuracy uniform over many decades of
//! conformal time. Units are fixed by `kappa = 8 pi G / 3` (default 1), so the
//! Hamiltonian constraint reads `H^2 = kappa a^2 eps`.

use std::cell::RefCell;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eos::{EosDerivatives, EquationOfState, ExpansionSide};
use crate::error::{Error, Result};
use crate::fit;
use crate::ode::{Dop853, OdeFailure};

/// One sample of a background solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundState {
    pub eta: f64,
    pub a: f64,
    /// Conformal Hubble rate `a'/a`.
    pub hubble: f64,
    pub eps: f64,
    pub m: f64,
    /// `integral sqrt(f'(eps)) d eta` measured from the initial time.
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundOptions {
    /// `8 pi G / 3`.
    pub kappa: f64,
    pub samples_per_efold: usize,
}

impl Default for BackgroundOptions {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            samples_per_efold: 64,
        }
    }
}

/// Interpolated background quantities at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundPoint {
    pub eta: f64,
    pub a: f64,
    pub hubble: f64,
    pub eps: f64,
    pub tau: f64,
    /// `f(eps) / eps`.
    pub f_over_eps: f64,
    /// `f'(eps)`.
    pub sound_speed_sq: f64,
}

// Interpolated components: ln a, h, ln eps, tau, f/eps, f'.
const NI: usize = 6;

/// Sampled background solution with cubic Hermite interpolation in `ln eta`.
#[derive(Debug, Clone)]
pub struct BackgroundTrajectory {
    eos: EquationOfState,
    kappa: f64,
    u0: f64,
    du: f64,
    values: Vec<[f64; NI]>,
    slopes: Vec<[f64; NI]>,
    derivs: Vec<EosDerivatives>,
    samples: Vec<BackgroundState>,
    eta_init: f64,
}

/// Solves the background on `eta_range` from data `(a0, eps0)` at `eta0`,
/// with `H(eta0)` the positive root of the constraint.
pub fn solve_background(
    eos: &EquationOfState,
    eta0: f64,
    a0: f64,
    eps0: f64,
    eta_range: (f64, f64),
    tol: f64,
) -> Result<BackgroundTrajectory> {
    solve_background_with(eos, eta0, a0, eps0, eta_range, tol, &BackgroundOptions::default())
}

/// Starts at `eta_start`, just after the big bang, with the leading-order
/// Hubble rate `H = 2 / ((1 + 3w) eta)` of the high-density limit, so that
/// the singularity sits at `eta = 0` up to a shift of relative order
/// `eta_start` times the equation-of-state correction there.
pub fn solve_background_from_bang(
    eos: &EquationOfState,
    eta_start: f64,
    a_start: f64,
    eta_max: f64,
    tol: f64,
    opts: &BackgroundOptions,
) -> Result<BackgroundTrajectory> {
    if let EquationOfState::PowerLaw { side: ExpansionSide::LowDensity, .. } = eos {
        return Err(Error::Precondition("equation of state has no high-density limit".into()));
    }
    if !(eta_start > 0.0 && a_start > 0.0) {
        return Err(Error::Domain("eta_start and a_start must be positive".into()));
    }
    let w = eos.high_density_w();
    let hubble = 2.0 / ((1.0 + 3.0 * w) * eta_start);
    let eps = hubble * hubble / (opts.kappa * a_start * a_start);
    solve_background_with(eos, eta_start, a_start, eps, (eta_start, eta_max), tol, opts)
}

pub fn solve_background_with(
    eos: &EquationOfState,
    eta0: f64,
    a0: f64,
    eps0: f64,
    eta_range: (f64, f64),
    tol: f64,
    opts: &BackgroundOptions,
) -> Result<BackgroundTrajectory> {
    let (lo, hi) = eta_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Domain(format!("eta range [{lo}, {hi}] not inside (0, inf)")));
    }
    if !(lo <= eta0 && eta0 <= hi) {
        return Err(Error::Domain(format!("eta0 = {eta0} outside [{lo}, {hi}]")));
    }
    if !(a0 > 0.0 && eps0 > 0.0 && a0.is_finite() && eps0.is_finite()) {
        return Err(Error::Domain("a0 and eps0 must be positive".into()));
    }
    if !(tol > 0.0) || !(opts.kappa > 0.0) || opts.samples_per_efold < 2 {
        return Err(Error::Domain("tolerance, kappa and sampling must be positive".into()));
    }
    let kappa = opts.kappa;
    let (u_lo, u_hi, u_init) = (lo.ln(), hi.ln(), eta0.ln());
    let intervals = (((u_hi - u_lo) * opts.samples_per_efold as f64).ceil() as usize).max(1);
    let du = (u_hi - u_lo) / intervals as f64;
    let grid: Vec<f64> = (0..=intervals)
        .map(|i| if i == intervals { u_hi } else { u_lo + du * i as f64 })
        .collect();

    let y0 = [
        a0.ln(),
        (kappa * a0 * a0 * eps0).sqrt() * eta0,
        eps0.ln(),
        0.0,
    ];
    let solver = Dop853::new(tol, tol * 1e-3);
    let mut raw: Vec<Option<[f64; 4]>> = vec![None; grid.len()];

    // forward, then backward
    let split = grid.partition_point(|&u| u < u_init);
    for dir in [1.0, -1.0] {
        let times: Vec<f64> = if dir > 0.0 {
            grid[split..].to_vec()
        } else {
            grid[..split].iter().rev().copied().collect()
        };
        if times.is_empty() {
            continue;
        }
        let fault = RefCell::new(None);
        let rhs = |u: f64, y: &[f64; 4]| match background_rhs(eos, kappa, dir, u, y) {
            Ok(d) => d,
            Err(e) => {
                fault.borrow_mut().get_or_insert(e);
                [f64::NAN; 4]
            }
        };
        let mut last_eta = eta0;
        let out = solver.integrate_through(rhs, u_init, y0, &times, |i, y| {
            let idx = if dir > 0.0 { split + i } else { split - 1 - i };
            raw[idx] = Some(*y);
            last_eta = grid[idx].exp();
        });
        if let Some(e) = fault.into_inner() {
            return Err(match e {
                Error::Unphysical(_) | Error::Domain(_) => Error::SingularityReached { last_eta },
                other => other,
            });
        }
        if let Err(f) = out {
            return Err(match f {
                OdeFailure::NonFinite { .. } | OdeFailure::StepUnderflow { .. } => {
                    Error::SingularityReached { last_eta }
                }
                OdeFailure::TooManySteps { t } => {
                    Error::Numeric(format!("background step limit at eta = {}", t.exp()))
                }
            });
        }
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len());
    let mut derivs = Vec::with_capacity(grid.len());
    for (&u, y) in grid.iter().zip(&raw) {
        let y = y.ok_or_else(|| Error::Numeric("background sample missing".into()))?;
        if !(y[1] > 0.0) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularityReached { last_eta: u.exp() });
        }
        let eps = y[2].exp();
        let d = eos.derivatives(eps)?;
        let dy = background_rhs_on_shell(&d, kappa, u, &y);
        let q = d.f / eps;
        let dln_eps = dy[2];
        values.push([y[0], y[1], y[2], y[3], q, d.df]);
        slopes.push([
            dy[0],
            dy[1],
            dy[2],
            dy[3],
            (d.df - q) * dln_eps,
            d.d2f * eps * dln_eps,
        ]);
        derivs.push(d);
    }

    // mass density: cumulative quadrature in ln eps along the trajectory
    let mut ln_m = Vec::with_capacity(grid.len());
    let mut acc = ln_mass_density(eos, values[0][2])?;
    ln_m.push(acc);
    for w in values.windows(2) {
        acc += ln_mass_increment(eos, w[0][2], w[1][2])?;
        ln_m.push(acc);
    }

    let samples = grid
        .iter()
        .zip(&values)
        .zip(&ln_m)
        .map(|((&u, v), &lm)| {
            let eta = u.exp();
            BackgroundState {
                eta,
                a: v[0].exp(),
                hubble: v[1] / eta,
                eps: v[2].exp(),
                m: lm.exp(),
                tau: v[3],
            }
        })
        .collect();

    Ok(BackgroundTrajectory {
        eos: eos.clone(),
        kappa,
        u0: u_lo,
        du,
        values,
        slopes,
        derivs,
        samples,
        eta_init: eta0,
    })
}

/// Right-hand side in `u = ln eta`. The `h` equation carries a multiple of the
/// constraint `h^2 - X` chosen so that constraint violations decay in the
/// direction of integration `dir`.
fn background_rhs(
    eos: &EquationOfState,
    kappa: f64,
    dir: f64,
    u: f64,
    y: &[f64; 4],
) -> Result<[f64; 4]> {
    let eps = y[2].exp();
    let d = eos.derivatives(eps)?;
    if !(-1e-12..=1.0 + 1e-12).contains(&d.df) {
        return Err(Error::Unphysical(format!("f'({eps:e}) = {}", d.df)));
    }
    let c2 = d.df.max(0.0);
    let h = y[1];
    let x = kappa * (2.0 * (y[0] + u) + y[2]).exp();
    let q = d.f / eps;
    let damping = (1.0 + dir) / h * (h * h - x);
    Ok([
        h,
        h - 0.5 * x * (1.0 + 3.0 * q) - damping,
        -3.0 * h * (1.0 + q),
        u.exp() * c2.sqrt(),
    ])
}

fn background_rhs_on_shell(d: &EosDerivatives, kappa: f64, u: f64, y: &[f64; 4]) -> [f64; 4] {
    let h = y[1];
    let x = kappa * (2.0 * (y[0] + u) + y[2]).exp();
    let q = d.f / d.eps;
    [
        h,
        h - 0.5 * x * (1.0 + 3.0 * q),
        -3.0 * h * (1.0 + q),
        u.exp() * d.df.max(0.0).sqrt(),
    ]
}

impl BackgroundTrajectory {
    pub fn eos(&self) -> &EquationOfState {
        &self.eos
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn samples(&self) -> &[BackgroundState] {
        &self.samples
    }

    /// Equation-of-state derivatives at each sample.
    pub fn eos_samples(&self) -> &[EosDerivatives] {
        &self.derivs
    }

    pub fn eta_min(&self) -> f64 {
        self.samples[0].eta
    }

    pub fn eta_max(&self) -> f64 {
        self.samples[self.samples.len() - 1].eta
    }

    /// Time at which the initial data were imposed (`tau = 0` there).
    pub fn eta_initial(&self) -> f64 {
        self.eta_init
    }

    pub fn covers(&self, eta: f64) -> bool {
        let slack = 1e-12;
        eta >= self.eta_min() * (1.0 - slack) && eta <= self.eta_max() * (1.0 + slack)
    }

    pub fn check_covers(&self, eta: f64) -> Result<()> {
        if self.covers(eta) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                eta,
                min: self.eta_min(),
                max: self.eta_max(),
            })
        }
    }

    /// Relative Hamiltonian-constraint residual `|H^2 - kappa a^2 eps| / H^2` at each sample.
    pub fn constraint_residuals(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| {
                let h2 = s.hubble * s.hubble;
                (h2 - self.kappa * s.a * s.a * s.eps).abs() / h2
            })
            .collect()
    }

    /// Interpolated state at `eta`.
    pub fn at(&self, eta: f64) -> Result<BackgroundPoint> {
        self.check_covers(eta)?;
        Ok(self.point_u(eta.ln()))
    }

    /// Interpolated state at `u = ln eta`, clamped to the tabulated range.
    pub fn point_u(&self, u: f64) -> BackgroundPoint {
        let v = self.interp(u);
        let eta = u.exp();
        BackgroundPoint {
            eta,
            a: v[0].exp(),
            hubble: v[1] / eta,
            eps: v[2].exp(),
            tau: v[3],
            f_over_eps: v[4],
            sound_speed_sq: v[5],
        }
    }

    /// `(h, f/eps, f')` at `u = ln eta`; the coefficients of the mode equation.
    pub fn mode_coefficients(&self, u: f64) -> (f64, f64, f64) {
        let v = self.interp(u);
        (v[1], v[4], v[5])
    }

    fn interp(&self, u: f64) -> [f64; NI] {
        let n = self.values.len();
        let s = ((u - self.u0) / self.du).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let (y0, y1, d0, d1) = (&self.values[i], &self.values[i + 1], &self.slopes[i], &self.slopes[i + 1]);
        std::array::from_fn(|j| h00 * y0[j] + h10 * self.du * d0[j] + h01 * y1[j] + h11 * self.du * d1[j])
    }

    /// Writes `eta,a,H,eps,m,tau`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "eta,a,H,eps,m,tau")?;
        for s in &self.samples {
            writeln!(out, "{:e},{:e},{:e},{:e},{:e},{:e}", s.eta, s.a, s.hubble, s.eps, s.m, s.tau)?;
        }
        Ok(())
    }
}

/// Anything that can report the background at a given conformal time.
pub trait Background: Sync {
    fn point(&self, eta: f64) -> Result<BackgroundPoint>;
    /// `8 pi G / 3`.
    fn kappa(&self) -> f64;
}

impl Background for BackgroundTrajectory {
    fn point(&self, eta: f64) -> Result<BackgroundPoint> {
        self.at(eta)
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Exact power-law background of `p = w eps`, normalised by `a(eta0) = a0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBackground {
    pub w: f64,
    pub eta0: f64,
    pub a0: f64,
    pub kappa: f64,
}

impl LinearBackground {
    pub fn new(w: f64) -> Self {
        Self {
            w,
            eta0: 1.0,
            a0: 1.0,
            kappa: 1.0,
        }
    }
}

impl Background for LinearBackground {
    fn point(&self, eta: f64) -> Result<BackgroundPoint> {
        let s = background_closed_form_linear_with(self.w, self.eta0, self.a0, eta, self.kappa)?;
        Ok(BackgroundPoint {
            eta,
            a: s.a,
            hubble: s.hubble,
            eps: s.eps,
            tau: s.tau,
            f_over_eps: self.w,
            sound_speed_sq: self.w,
        })
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Closed-form background of a linear equation of state `p = w eps`, with
/// `kappa = 1`.
pub fn background_closed_form_linear(w: f64, eta0: f64, a0: f64, eta: f64) -> Result<BackgroundState> {
    background_closed_form_linear_with(w, eta0, a0, eta, 1.0)
}

pub fn background_closed_form_linear_with(
    w: f64,
    eta0: f64,
    a0: f64,
    eta: f64,
    kappa: f64,
) -> Result<BackgroundState> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("w = {w} outside [0, 1]")));
    }
    if !(eta > 0.0 && eta0 > 0.0 && a0 > 0.0) {
        return Err(Error::Domain("eta, eta0 and a0 must be positive".into()));
    }
    let p = 2.0 / (1.0 + 3.0 * w);
    let a = a0 * (eta / eta0).powf(p);
    let hubble = p / eta;
    let eps = hubble * hubble / (kappa * a * a);
    Ok(BackgroundState {
        eta,
        a,
        hubble,
        eps,
        m: eps.powf(1.0 / (1.0 + w)),
        tau: w.sqrt() * (eta - eta0),
    })
}

/// `m(eps) = exp( integral_1^eps d xi / (xi + f(xi)) )`.
pub fn mass_density(eos: &EquationOfState, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("mass density at eps = {eps}")));
    }
    Ok(ln_mass_density(eos, eps.ln())?.exp())
}

fn ln_mass_density(eos: &EquationOfState, ln_eps: f64) -> Result<f64> {
    ln_mass_increment(eos, 0.0, ln_eps)
}

/// `integral_{s0}^{s1} ds / (1 + f(e^s)/e^s)`, split into unit chunks. Only
/// the deviation `q / (1 + q)` from one, with `q = f/eps`, goes through the
/// quadrature, so dust is exact.
fn ln_mass_increment(eos: &EquationOfState, s0: f64, s1: f64) -> Result<f64> {
    if s0 == s1 {
        return Ok(0.0);
    }
    let chunks = (s1 - s0).abs().ceil().max(1.0) as usize;
    let step = (s1 - s0) / chunks as f64;
    let fault = RefCell::new(None);
    let integrand = |s: f64| {
        let eps = s.exp();
        match eos.pressure(eps) {
            Ok(p) => {
                let q = p / eps;
                q / (1.0 + q)
            }
            Err(e) => {
                fault.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let mut total = s1 - s0;
    for c in 0..chunks {
        let a = s0 + step * c as f64;
        let b = if c + 1 == chunks { s1 } else { a + step };
        let out = quadrature::integrate(&integrand, a, b, 1e-14 * step.abs());
        if !out.integral.is_finite() || out.error_estimate > 1e-10 * step.abs() {
            return Err(Error::Numeric(format!(
                "mass density quadrature did not converge on [{a}, {b}]"
            )));
        }
        total -= out.integral;
    }
    if let Some(e) = fault.into_inner() {
        return Err(e);
    }
    Ok(total)
}

/// Late-time dynamical regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub regime: Regime,
    /// `a1 - 1` for the leading low-density correction, when defined.
    pub sigma: Option<f64>,
}

/// `sigma` within this distance of 1/3 counts as critical.
const CRITICAL_SLACK: f64 = 1e-12;

/// Classification by the low-density behaviour of `f`.
pub fn classify_regime(eos: &EquationOfState) -> Result<RegimeClass> {
    let (w, sigma) = match eos {
        EquationOfState::Linear { w } if *w == 0.0 => {
            return Err(Error::Unsupported(
                "pure dust has no correction exponent to classify".into(),
            ))
        }
        EquationOfState::Linear { .. } => {
            return Ok(RegimeClass {
                regime: Regime::Underdamped,
                sigma: None,
            })
        }
        EquationOfState::PowerLaw { w, terms, side } => {
            if *side != ExpansionSide::LowDensity {
                return Err(Error::Precondition(
                    "power law is a high-density expansion; classification needs eps -> 0".into(),
                ));
            }
            (*w, terms[0].exponent - 1.0)
        }
        // eps ~ m and p ~ K m^(1 + 1/n) as m -> 0
        EquationOfState::Polytropic { n, .. } => (0.0, 1.0 / n),
    };
    Ok(RegimeClass {
        regime: regime_of(w, sigma),
        sigma: Some(sigma),
    })
}

/// The partition by `(w, sigma)` alone.
pub fn regime_of(w: f64, sigma: f64) -> Regime {
    if w > 0.0 {
        Regime::Underdamped
    } else if (sigma - 1.0 / 3.0).abs() <= CRITICAL_SLACK {
        Regime::Critical
    } else if sigma < 1.0 / 3.0 {
        Regime::Underdamped
    } else {
        Regime::Overdamped
    }
}

/// `(Y, Z)` with `Y = f' - f/eps` and `Z = 1 + f' - (eps + f) f'' / (2 f')`.
pub fn tau_coefficients(eos: &EquationOfState, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("tau coefficients at eps = {eps}")));
    }
    let d = eos.derivatives(eps)?;
    if !(d.df > 0.0) {
        return Err(Error::UndefinedTime(format!("f'({eps:e}) = {} is not positive", d.df)));
    }
    Ok(tau_coefficients_from(&d))
}

pub(crate) fn tau_coefficients_from(d: &EosDerivatives) -> (f64, f64) {
    let y = d.df - d.f / d.eps;
    let z = 1.0 + d.df - 0.5 * (d.eps + d.f) * d.d2f / d.df;
    (y, z)
}

/// Finite limit `tau -> tau_inf` fitted as `tau_inf + C eta^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauLimit {
    pub tau_inf: f64,
    pub coeff: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauReport {
    pub regime: Option<RegimeClass>,
    /// Present in the overdamped regime.
    pub limit: Option<TauLimit>,
}

/// Checks that `tau` is defined along the trajectory and, for an overdamped
/// equation of state, extrapolates its finite limit from the last decade of
/// samples.
pub fn tau_time(traj: &BackgroundTrajectory) -> Result<TauReport> {
    if traj.eos.is_dust() {
        return Err(Error::UndefinedTime("sound speed vanishes for dust".into()));
    }
    if let Some(bad) = traj.derivs.iter().find(|d| !(d.df > 0.0)) {
        return Err(Error::UndefinedTime(format!("f'({:e}) = {}", bad.eps, bad.df)));
    }
    let regime = classify_regime(&traj.eos).ok();
    let limit = match regime {
        Some(RegimeClass {
            regime: Regime::Overdamped,
            ..
        }) => {
            let hi = traj.eta_max();
            Some(tau_limit(traj, (hi / 10.0, hi))?)
        }
        _ => None,
    };
    Ok(TauReport { regime, limit })
}

/// Least-squares fit of `tau = tau_inf + C eta^(1 - 3 sigma)` on `window`.
pub fn tau_limit(traj: &BackgroundTrajectory, window: (f64, f64)) -> Result<TauLimit> {
    let class = classify_regime(&traj.eos)?;
    let sigma = match class {
        RegimeClass {
            regime: Regime::Overdamped,
            sigma: Some(s),
        } => s,
        _ => return Err(Error::Unsupported("tau has no finite limit in this regime".into())),
    };
    traj.check_covers(window.0)?;
    traj.check_covers(window.1)?;
    let p = 1.0 - 3.0 * sigma;
    let pts: Vec<&BackgroundState> = traj
        .samples
        .iter()
        .filter(|s| s.eta >= window.0 && s.eta <= window.1)
        .collect();
    let rows: Vec<Vec<f64>> = pts.iter().map(|s| vec![1.0, s.eta.powf(p)]).collect();
    let rhs: Vec<f64> = pts.iter().map(|s| s.tau).collect();
    let fit = fit::lstsq(&rows, &rhs, None, 1e12)?;
    Ok(TauLimit {
        tau_inf: fit.coeffs[0],
        coeff: fit.coeffs[1],
        exponent: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::PowerTerm;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn closed_form_examples() {
        let s = background_closed_form_linear(0.0, 1.5, 2.0, 3.0).unwrap();
        assert!(rel(s.a, 8.0) < 1e-15);
        let r = background_closed_form_linear(1.0 / 3.0, 2.0, 1.0, 2.0).unwrap();
        assert!(rel(r.hubble, 0.5) < 1e-15);
        assert_eq!(r.a, 1.0);
        assert!(background_closed_form_linear(1.2, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn radiation_doubles_scale_factor() {
        let eos = EquationOfState::radiation();
        let traj = solve_background(&eos, 1.0, 1.0, 1.0, (1.0, 2.0), 1e-10).unwrap();
        assert!(rel(traj.at(2.0).unwrap().a, 2.0) < 1e-9);
    }

    #[test]
    fn linear_matches_closed_form_and_constraint() {
        for w in [0.0, 1.0 / 9.0, 1.0 / 3.0, 1.0] {
            let h0 = 2.0 / (1.0 + 3.0 * w);
            let traj = solve_background(&EquationOfState::linear(w).unwrap(), 1.0, 1.0, h0 * h0, (1e-3, 1e3), 1e-10)
                .unwrap();
            for s in traj.samples() {
                let c = background_closed_form_linear(w, 1.0, 1.0, s.eta).unwrap();
                assert!(rel(s.a, c.a) < 1e-8, "w {w} eta {} a {} vs {}", s.eta, s.a, c.a);
                assert!(rel(s.hubble, c.hubble) < 1e-8);
                assert!(rel(s.tau, c.tau).min((s.tau - c.tau).abs()) < 1e-8);
            }
            assert!(traj.constraint_residuals().iter().all(|&r| r < 1e-9));
        }
    }

    #[test]
    fn density_slope_for_linear_law() {
        let w = 0.2;
        let h0 = 2.0 / ((1.0 + 3.0 * w) * 1e2);
        let traj = solve_background(&EquationOfState::linear(w).unwrap(), 1e2, 1.0, h0 * h0, (1e2, 1e4), 1e-10).unwrap();
        let eta: Vec<f64> = traj.samples().iter().map(|s| s.eta).collect();
        let eps: Vec<f64> = traj.samples().iter().map(|s| s.eps).collect();
        let slope = fit::loglog_slope(&eta[eta.len() / 2..], &eps[eps.len() / 2..]).unwrap();
        assert!((slope + 6.0 * (1.0 + w) / (1.0 + 3.0 * w)).abs() < 1e-6, "{slope}");
    }

    #[test]
    fn mass_density_examples() {
        let dust = EquationOfState::dust();
        assert!((mass_density(&dust, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rel(mass_density(&dust, 7.3).unwrap(), 7.3) < 1e-13);
        assert!(rel(mass_density(&dust, 1e-20).unwrap(), 1e-20) < 1e-12);
        let stiff = EquationOfState::linear(1.0).unwrap();
        assert!(rel(mass_density(&stiff, 4.0).unwrap(), 2.0) < 1e-13);
    }

    #[test]
    fn polytropic_mass_density_is_proportional_to_parameter() {
        let eos = EquationOfState::polytropic(0.1, 3.0).unwrap();
        let ratios: Vec<f64> = [1e-6, 1e-2, 1.0, 1e3, 1e8]
            .iter()
            .map(|&e| mass_density(&eos, e).unwrap() / eos.polytropic_parameter(e).unwrap())
            .collect();
        for r in &ratios {
            assert!(rel(*r, ratios[0]) < 1e-11, "{ratios:?}");
        }
    }

    #[test]
    fn mass_times_volume_is_conserved() {
        let eoses = [
            EquationOfState::linear(0.3).unwrap(),
            EquationOfState::polytropic(0.1, 3.0).unwrap(),
            EquationOfState::pure_power(0.05, 0.5).unwrap(),
        ];
        for eos in &eoses {
            let traj = solve_background(eos, 1.0, 1.0, 1.0, (0.5, 50.0), 1e-10).unwrap();
            let c0 = traj.samples()[0].m * traj.samples()[0].a.powi(3);
            for s in traj.samples() {
                assert!(rel(s.m * s.a.powi(3), c0) < 1e-8, "{eos:?}");
            }
        }
    }

    #[test]
    fn superluminal_past_is_a_singularity_error() {
        let eos = EquationOfState::pure_power(0.5, 0.5).unwrap();
        match solve_background(&eos, 1.0, 1.0, 1.0, (1e-3, 1.0), 1e-10) {
            Err(Error::SingularityReached { last_eta }) => assert!(last_eta < 1.0 && last_eta > 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classification_examples() {
        let under = EquationOfState::power_law(0.2, vec![PowerTerm { coeff: 0.1, exponent: 1.9 }]).unwrap();
        assert_eq!(classify_regime(&under).unwrap().regime, Regime::Underdamped);
        let crit = EquationOfState::pure_power(0.1, 1.0 / 3.0).unwrap();
        assert_eq!(classify_regime(&crit).unwrap().regime, Regime::Critical);
        let over = EquationOfState::pure_power(0.1, 0.5).unwrap();
        assert_eq!(classify_regime(&over).unwrap().regime, Regime::Overdamped);
        assert!(classify_regime(&EquationOfState::dust()).is_err());
    }

    #[test]
    fn tau_coefficient_examples() {
        let (y, z) = tau_coefficients(&EquationOfState::linear(0.4).unwrap(), 3.0).unwrap();
        assert!(y.abs() < 1e-16 && (z - 1.4).abs() < 1e-15);
        let (f1, sigma) = (0.2, 0.5);
        let eos = EquationOfState::pure_power(f1, sigma).unwrap();
        let eps: f64 = 0.3;
        let (y, _) = tau_coefficients(&eos, eps).unwrap();
        assert!(rel(y, f1 * sigma * eps.powf(sigma)) < 1e-13);
        let (_, z) = tau_coefficients(&eos, 1e-16).unwrap();
        assert!((z - (1.0 - sigma / 2.0)).abs() < 1e-6);
    }

    #[test]
    fn tau_is_linear_for_constant_sound_speed_and_undefined_for_dust() {
        let w = 0.25;
        let traj = solve_background(&EquationOfState::linear(w).unwrap(), 2.0, 1.0, 1.0, (1.0, 10.0), 1e-10).unwrap();
        for s in traj.samples() {
            assert!((s.tau - w.sqrt() * (s.eta - 2.0)).abs() < 1e-9);
        }
        assert!(tau_time(&traj).unwrap().limit.is_none());
        let dust = solve_background(&EquationOfState::dust(), 1.0, 1.0, 1.0, (1.0, 2.0), 1e-10).unwrap();
        assert!(matches!(tau_time(&dust), Err(Error::UndefinedTime(_))));
    }

    #[test]
    fn overdamped_tau_limit_is_stable() {
        let eos = EquationOfState::pure_power(0.5, 0.5).unwrap();
        let traj = solve_background(&eos, 1.0, 1.0, 1.0, (1.0, 1e5), 1e-11).unwrap();
        let report = tau_time(&traj).unwrap();
        let lim = report.limit.unwrap();
        assert!((lim.exponent + 0.5).abs() < 1e-15);
        let wide = tau_limit(&traj, (1e3, 1e5)).unwrap();
        assert!(rel(wide.tau_inf, lim.tau_inf) < 0.01);
        // the remaining gap decays with the predicted power
        let late: Vec<&BackgroundState> = traj.samples().iter().filter(|s| s.eta > 1e3).collect();
        let x: Vec<f64> = late.iter().map(|s| s.eta).collect();
        let y: Vec<f64> = late.iter().map(|s| lim.tau_inf - s.tau).collect();
        assert!((fit::loglog_slope(&x, &y).unwrap() + 0.5).abs() < 0.01);
    }

    #[test]
    fn interpolation_is_accurate_between_samples() {
        let w = 1.0 / 3.0;
        let traj = solve_background(&EquationOfState::linear(w).unwrap(), 1.0, 1.0, 1.0, (1e-2, 1e2), 1e-11).unwrap();
        for &eta in &[0.0123, 0.777, 3.3333, 51.7] {
            let p = traj.at(eta).unwrap();
            let c = background_closed_form_linear(w, 1.0, 1.0, eta).unwrap();
            assert!(rel(p.a, c.a) < 1e-9 && rel(p.hubble, c.hubble) < 1e-9);
        }
        assert!(matches!(traj.at(1e3), Err(Error::OutOfRange { .. })));
    }
}
