//! Subcommand implementations. Every command writes its outputs into the
//! output directory and returns a one-line summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use flrw_perturb::background::{
    classify_regime, regime_of, solve_background_from_bang, solve_background_with, tau_time, BackgroundTrajectory,
    Regime,
};
use flrw_perturb::eos::PowerTerm;
use flrw_perturb::evolver::{sample, write_energy_csv, Dynamics, NuIndex, PerturbationState};
use flrw_perturb::fit::{linspace, loglog_slope};
use flrw_perturb::latetime::{
    extract_wave_profile, general_latetime_extract, reconstruct_sampled_from_wave_profile, ExtractOptions,
    LateTimeResult, WaveProfile,
};
use flrw_perturb::random::{band_limited, band_limited_circle};
use flrw_perturb::singularity::gowdy::{gowdy_evolve_and_prescribe, CircleField, GowdyOptions};
use flrw_perturb::singularity::{
    build_series, fit_asymptotic_data, fit_singularity_general, reconstruct_sampled, write_series, FitOptions,
    SingularityData,
};
use flrw_perturb::spectral::{forward_transform, read_field, write_field, FieldData, SpectralField, TorusGeometry};
use flrw_perturb::EquationOfState;

use crate::config::*;
use crate::CliError;

type Out<T> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn require<T>(v: Option<T>, name: &str) -> Out<T> {
    v.ok_or_else(|| invalid(format!("missing field `{name}` for this mode")))
}

fn check_positive(name: &str, v: f64) -> Out<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("`{name}` = {v} must be positive and finite")))
    }
}

fn check_window(w: [f64; 2]) -> Out<()> {
    check_positive("window[0]", w[0])?;
    if w[1] > w[0] && w[1].is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("window [{}, {}] is empty", w[0], w[1])))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Out<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Out<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_spectral(path: &Path) -> Out<SpectralField> {
    let data = read_field(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(match data {
        FieldData::Spectral(f) => f,
        FieldData::Grid(g, values) => forward_transform(g, &values)?,
    })
}

fn field_pair(src: &FieldSource, g: TorusGeometry, rng: &mut ChaCha8Rng) -> Out<(SpectralField, SpectralField)> {
    match src {
        FieldSource::Random { band, with_mean } => {
            let a = band_limited(g, *band, *with_mean, rng)?;
            let b = band_limited(g, *band, *with_mean, rng)?;
            Ok((a, b))
        }
        FieldSource::Modes { modes } => {
            let mut a = SpectralField::zeros(g);
            let mut b = SpectralField::zeros(g);
            for m in modes {
                a.set_pair(m.k, Complex64::new(m.first[0], m.first[1]))?;
                b.set_pair(m.k, Complex64::new(m.second[0], m.second[1]))?;
            }
            Ok((a, b))
        }
        FieldSource::File { first, second } => {
            let a = read_spectral(first)?;
            let b = read_spectral(second)?;
            if a.geometry() != b.geometry() {
                return Err(CliError::Io("field files have different geometries".into()));
            }
            Ok((a, b))
        }
    }
}

fn write_spectral(dir: &Path, name: &str, f: &SpectralField) -> Out<()> {
    write_field(&dir.join(format!("{name}.json")), &FieldData::Spectral(f.clone()))?;
    Ok(())
}

fn check_times(times: &[f64]) -> Out<()> {
    if times.is_empty() {
        return Err(invalid("`times` is empty"));
    }
    for &t in times {
        check_positive("times[]", t)?;
    }
    Ok(())
}

pub fn background(cfg: &BgConfig, out: &Path) -> Out<String> {
    let [lo, hi] = cfg.eta_range;
    check_window(cfg.eta_range)?;
    for (n, v) in [("eta0", cfg.eta0), ("a0", cfg.a0), ("eps0", cfg.eps0), ("tol", cfg.tol)] {
        check_positive(n, v)?;
    }
    let mut opts = background_options(cfg.g)?;
    if let Some(s) = cfg.samples_per_efold {
        opts.samples_per_efold = s;
    }
    let traj = solve_background_with(&cfg.eos, cfg.eta0, cfg.a0, cfg.eps0, (lo, hi), cfg.tol, &opts)?;
    let mut f = create(&out.join("background.csv"))?;
    traj.write_csv(&mut f)?;
    f.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let residual = traj.constraint_residuals().into_iter().fold(0.0, f64::max);
    let s = traj.samples();
    let ma3: Vec<f64> = s.iter().map(|p| p.m * p.a.powi(3)).collect();
    let mass_drift = ma3.iter().map(|v| (v / ma3[0] - 1.0).abs()).fold(0.0, f64::max);
    let tau = match tau_time(&traj) {
        Ok(r) => json!({
            "regime": r.regime.map(|c| c.regime),
            "sigma": r.regime.and_then(|c| c.sigma),
            "tau_end": s.last().map(|p| p.tau),
            "tau_inf": r.limit.map(|l| l.tau_inf),
            "tau_exponent": r.limit.map(|l| l.exponent),
        }),
        Err(e) => json!({ "undefined": e.to_string() }),
    };
    write_json(
        &out.join("summary.json"),
        &json!({
            "samples": s.len(),
            "max_constraint_residual": residual,
            "mass_drift": mass_drift,
            "tau": tau,
        }),
    )?;
    Ok(format!("{} background samples, constraint residual {residual:.2e}", s.len()))
}

/// Linear dynamics for a linear law, otherwise a background covering `range`.
fn trajectory(
    eos: &EquationOfState,
    bg: Option<BackgroundData>,
    g: Option<f64>,
    eta0: f64,
    range: (f64, f64),
    tol: f64,
) -> Out<Option<BackgroundTrajectory>> {
    if eos.is_linear() {
        return Ok(None);
    }
    let bg = require(bg, "background")?;
    check_positive("background.a0", bg.a0)?;
    check_positive("background.eps0", bg.eps0)?;
    let opts = background_options(g)?;
    let lo = range.0.min(eta0);
    let hi = range.1.max(eta0);
    Ok(Some(solve_background_with(eos, eta0, bg.a0, bg.eps0, (lo, hi), tol.min(1e-10), &opts)?))
}

fn dynamics<'a>(eos: &EquationOfState, traj: &'a Option<BackgroundTrajectory>) -> Out<Dynamics<'a>> {
    match (traj, eos) {
        (Some(t), _) => Ok(Dynamics::General(t)),
        (None, EquationOfState::Linear { w }) => Ok(Dynamics::linear(*w)?),
        _ => Err(invalid("non-linear law without a background")),
    }
}

fn span(times: &[f64]) -> (f64, f64) {
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn evolve(cfg: &EvolveConfig, out: &Path, rng: &mut ChaCha8Rng) -> Out<String> {
    check_times(&cfg.times)?;
    check_positive("eta0", cfg.eta0)?;
    check_positive("tol", cfg.tol)?;
    let g = cfg.geometry.torus()?;
    let traj = trajectory(&cfg.eos, cfg.background, cfg.g, cfg.eta0, span(&cfg.times), cfg.tol)?;
    let (phi, dphi) = field_pair(&cfg.data, g, rng)?;
    let state = PerturbationState::new(cfg.eta0, phi, dphi)?;
    let sol = sample(&state, dynamics(&cfg.eos, &traj)?, &cfg.times, cfg.tol)?;
    let states: Vec<PerturbationState> = (0..cfg.times.len()).map(|i| sol.state(i)).collect();
    for (i, s) in states.iter().enumerate() {
        write_spectral(out, &format!("snap_{i:03}_phi"), &s.phi)?;
        write_spectral(out, &format!("snap_{i:03}_dphi"), &s.dphi)?;
    }
    if let EquationOfState::Linear { w } = cfg.eos {
        let mut f = create(&out.join("energy.csv"))?;
        write_energy_csv(&mut f, &states, w)?;
        f.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut f = create(&out.join("trace.csv"))?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(f, "eta,mean_phi,phi_l2,dphi_l2").map_err(io)?;
    for s in &states {
        writeln!(f, "{:e},{:e},{:e},{:e}", s.eta, s.phi.mean(), s.phi.norm_l2(), s.dphi.norm_l2()).map_err(io)?;
    }
    f.flush().map_err(io)?;
    Ok(format!("{} snapshots", states.len()))
}

fn fit_options(cfg: Option<FitConfig>) -> Out<FitOptions> {
    let mut o = FitOptions::default();
    if let Some(c) = cfg {
        if let Some(w) = c.window {
            check_window(w)?;
            o.window = (w[0], w[1]);
        }
        if let Some(s) = c.samples {
            o.samples = s;
        }
        if let Some(k) = c.k_fit {
            o.k_fit = k;
        }
        o.force_logs = c.force_logs;
    }
    Ok(o)
}

fn rel_max(a: &SpectralField, b: &SpectralField) -> Out<f64> {
    Ok(a.sub(b)?.max_abs() / b.max_abs())
}

#[derive(Serialize)]
struct RoundtripEntry {
    w: f64,
    max_rel_error: f64,
    log_terms_present: bool,
    log_ratio: f64,
    /// Fitted `Phi_{0,1}` against the recursion value.
    log_rel_error: Option<f64>,
    cond: f64,
    max_residual: f64,
}

pub fn singularity(cfg: &SingConfig, out: &Path, rng: &mut ChaCha8Rng) -> Out<String> {
    let g = cfg.geometry.torus()?;
    check_positive("tol", cfg.tol)?;
    if !(cfg.k_max >= 0.0) {
        return Err(invalid("`k_max` must be non-negative"));
    }
    let opts = fit_options(cfg.fit)?;
    match cfg.mode {
        SingMode::Build => {
            let (psi1, psi2) = field_pair(&cfg.data, g, rng)?;
            let data = SingularityData { psi1, psi2 };
            let mut report = Vec::new();
            for (i, w) in require(cfg.w.as_ref(), "w")?.values().into_iter().enumerate() {
                let s = build_series(w, &data, cfg.k_max)?;
                write_series(out, &format!("series_{i}"), &s)?;
                report.push(json!({ "w": w, "terms": s.terms.len(), "log_terms_present": s.has_logs(), "warnings": s.warnings }));
            }
            write_json(&out.join("report.json"), &report)?;
            Ok(format!("{} series written", report.len()))
        }
        SingMode::Roundtrip => {
            check_positive("eta_start", cfg.eta_start)?;
            let (psi1, psi2) = field_pair(&cfg.data, g, rng)?;
            let data = SingularityData { psi1, psi2 };
            let mut entries = Vec::new();
            for (i, w) in require(cfg.w.as_ref(), "w")?.values().into_iter().enumerate() {
                let sol = reconstruct_sampled(w, &data, cfg.eta_start, &opts.times(), cfg.k_max, cfg.tol)?;
                let fit = fit_asymptotic_data(&sol, w, &opts)?;
                write_spectral(out, &format!("roundtrip_{i}_psi1"), &fit.data.psi1)?;
                write_spectral(out, &format!("roundtrip_{i}_psi2"), &fit.data.psi2)?;
                let log_rel_error = match (&fit.log_zero, NuIndex::new(w)?.is_integer()) {
                    (Some(l), true) => {
                        let s = build_series(w, &data, cfg.k_max)?;
                        match s.term(0.0, 1) {
                            Some(t) if t.max_abs() > 0.0 => Some(rel_max(l, t)?),
                            _ => None,
                        }
                    }
                    _ => None,
                };
                entries.push(RoundtripEntry {
                    w,
                    max_rel_error: fit.data.relative_error(&data)?,
                    log_terms_present: fit.log_zero.is_some() && fit.log_ratio() > 1e-6,
                    log_ratio: fit.log_ratio(),
                    log_rel_error,
                    cond: fit.cond,
                    max_residual: fit.max_residual(),
                });
            }
            let worst = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
            write_json(&out.join("report.json"), &json!({ "max_rel_error": worst, "entries": entries }))?;
            Ok(format!("roundtrip max relative error {worst:.2e}"))
        }
        SingMode::Fit => {
            let w = match require(cfg.w.as_ref(), "w")?.values().as_slice() {
                [w] => *w,
                _ => return Err(invalid("fit takes a single `w`")),
            };
            let eta0 = require(cfg.eta0, "eta0")?;
            check_positive("eta0", eta0)?;
            let (phi, dphi) = field_pair(&cfg.data, g, rng)?;
            let sol = sample(&PerturbationState::new(eta0, phi, dphi)?, Dynamics::linear(w)?, &opts.times(), cfg.tol)?;
            let fit = fit_asymptotic_data(&sol, w, &opts)?;
            write_spectral(out, "fit_psi1", &fit.data.psi1)?;
            write_spectral(out, "fit_psi2", &fit.data.psi2)?;
            if let Some(l) = &fit.log_zero {
                write_spectral(out, "fit_log0", l)?;
            }
            write_json(
                &out.join("report.json"),
                &json!({
                    "w": w,
                    "cond": fit.cond,
                    "log_ratio": fit.log_ratio(),
                    "max_residual": fit.max_residual(),
                    "residuals": fit.residuals,
                }),
            )?;
            Ok(format!("fit condition number {:.2e}", fit.cond))
        }
        SingMode::Exponent => {
            let eos = require(cfg.eos.as_ref(), "eos")?;
            let eta0 = cfg.eta0.unwrap_or(1.0);
            check_positive("eta0", eta0)?;
            let traj = solve_background_from_bang(eos, 1e-8, 1e-8, eta0, cfg.tol, &background_options(None)?)?;
            let (phi, dphi) = field_pair(&cfg.data, g, rng)?;
            let sol = sample(&PerturbationState::new(eta0, phi, dphi)?, Dynamics::General(&traj), &opts.times(), cfg.tol)?;
            let fit = fit_singularity_general(&traj, &sol, &opts)?;
            let modes: Vec<_> = fit.mode_exponents.iter().map(|(k, e)| json!({ "k": k, "exponent": e })).collect();
            write_json(
                &out.join("report.json"),
                &json!({
                    "w": fit.w,
                    "expected_exponent": fit.expected_exponent,
                    "max_exponent_error": fit.max_exponent_error(),
                    "modes": modes,
                }),
            )?;
            Ok(format!("leading exponent error {:.2e}", fit.max_exponent_error()))
        }
    }
}

pub fn gowdy(cfg: &GowdyConfig, out: &Path, rng: &mut ChaCha8Rng) -> Out<String> {
    check_positive("L", cfg.l)?;
    if cfg.n < 3 || cfg.n % 2 == 0 {
        return Err(invalid(format!("N = {} must be odd and at least 3", cfg.n)));
    }
    check_window([cfg.t_start, cfg.t_end])?;
    let (k, omega) = match &cfg.data {
        CircleSource::Random { band } => (
            band_limited_circle(cfg.n, cfg.l, *band, rng)?,
            band_limited_circle(cfg.n, cfg.l, *band, rng)?,
        ),
        CircleSource::Grid { k, omega } => {
            if k.len() != cfg.n || omega.len() != cfg.n {
                return Err(invalid(format!("grid data must have N = {} samples", cfg.n)));
            }
            (CircleField::from_grid(cfg.l, k)?, CircleField::from_grid(cfg.l, omega)?)
        }
    };
    let mut opts = GowdyOptions::default();
    if let Some(v) = cfg.k_max {
        opts.k_max = v;
    }
    if let Some(v) = cfg.tol {
        check_positive("tol", v)?;
        opts.tol = v;
    }
    if let Some(w) = cfg.window {
        check_window(w)?;
        opts.window = (w[0], w[1]);
    }
    if let Some(s) = cfg.samples {
        opts.samples = s;
    }
    let r = gowdy_evolve_and_prescribe(&k, &omega, cfg.t_start, cfg.t_end, &opts)?;
    write_json(&out.join("report.json"), &r)?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let mut f = create(&out.join("gowdy.csv"))?;
    writeln!(f, "x,k,omega,k_fit,omega_fit,P_end,dP_end").map_err(io)?;
    let cols = [k.to_grid(), omega.to_grid(), r.k_fit.to_grid(), r.omega_fit.to_grid(), r.p_end.to_grid(), r.dp_end.to_grid()];
    for j in 0..cfg.n {
        let x = cfg.l * j as f64 / cfg.n as f64;
        let row: Vec<String> = cols.iter().map(|c| format!("{:e}", c[j])).collect();
        writeln!(f, "{x:e},{}", row.join(",")).map_err(io)?;
    }
    f.flush().map_err(io)?;
    Ok(format!("gowdy roundtrip max relative error {:.2e}", r.max_rel_error()))
}

fn extract_options(cfg: &LateConfig) -> ExtractOptions {
    let mut o = ExtractOptions::default();
    if let Some(r) = cfg.residual_max {
        o.residual_max = r;
    }
    o
}

fn write_profile(out: &Path, p: &WaveProfile) -> Out<()> {
    let mut f = create(&out.join("profile.csv"))?;
    p.write_csv(&mut f)?;
    f.flush().map_err(|e| CliError::Io(e.to_string()))?;
    write_json(
        &out.join("homogeneous.json"),
        &json!({
            "time_variable": p.time_variable,
            "homogeneous": p.homogeneous,
            "max_residual": p.max_residual(),
        }),
    )
}

pub fn latetime(cfg: &LateConfig, out: &Path, rng: &mut ChaCha8Rng) -> Out<String> {
    if cfg.mode == LateMode::Regimes {
        return regimes(require(cfg.grid.as_ref(), "grid")?, out);
    }
    let g = cfg.geometry.torus()?;
    let window = require(cfg.window, "window")?;
    check_window(window)?;
    check_positive("eta0", cfg.eta0)?;
    check_positive("tol", cfg.tol)?;
    if cfg.samples < 5 {
        return Err(invalid("`samples` must be at least 5"));
    }
    let times = linspace(window[0], window[1], cfg.samples);
    let (phi, dphi) = field_pair(require(cfg.data.as_ref(), "data")?, g, rng)?;
    let state = PerturbationState::new(cfg.eta0, phi, dphi)?;
    let opts = extract_options(cfg);
    match cfg.mode {
        LateMode::Extract | LateMode::Reconstruct => {
            let w = require(cfg.w, "w")?;
            let sol = sample(&state, Dynamics::linear(w)?, &times, cfg.tol)?;
            let profile = extract_wave_profile(&sol, w, &opts)?;
            write_profile(out, &profile)?;
            if cfg.mode == LateMode::Extract {
                return Ok(format!("{} modes, max residual {:.2e}", profile.modes.len(), profile.max_residual()));
            }
            let far = cfg.eta_far.clone().unwrap_or_else(|| vec![2.0 * window[1], 4.0 * window[1]]);
            for &e in &far {
                if !(e >= window[1]) {
                    return Err(invalid(format!("eta_far = {e} lies before the window end")));
                }
            }
            let target = cfg.eta_target.unwrap_or(window[0]);
            check_positive("eta_target", target)?;
            let mut gaps = Vec::new();
            let mut previous: Option<WaveProfile> = None;
            let mut doubling = Vec::new();
            for &e in &far {
                let rec = reconstruct_sampled_from_wave_profile(&profile, e, &times, cfg.tol)?;
                let again = extract_wave_profile(&rec, w, &opts)?;
                gaps.push(profile.max_gap(&again));
                if let Some(p) = &previous {
                    doubling.push(p.max_gap(&again));
                }
                previous = Some(again);
            }
            let last = *far.last().ok_or_else(|| invalid("`eta_far` is empty"))?;
            let rec = reconstruct_sampled_from_wave_profile(&profile, last, &[target], cfg.tol)?.state(0);
            write_spectral(out, "reconstructed_phi", &rec.phi)?;
            write_spectral(out, "reconstructed_dphi", &rec.dphi)?;
            let worst = gaps.iter().chain(&doubling).copied().fold(0.0, f64::max);
            write_json(
                &out.join("report.json"),
                &json!({ "eta_far": far, "gap_to_original": gaps, "gap_between_far_times": doubling, "eta_target": target }),
            )?;
            Ok(format!("reconstruct-extract gap {worst:.2e}"))
        }
        LateMode::General => {
            let eos = require(cfg.eos.as_ref(), "eos")?;
            let traj = trajectory(eos, cfg.background, cfg.g, cfg.eta0, (window[0], window[1]), cfg.tol)?
                .ok_or_else(|| invalid("general mode needs a non-linear `eos`; use extract for linear laws"))?;
            let sol = sample(&state, Dynamics::General(&traj), &times, cfg.tol)?;
            match general_latetime_extract(&traj, &sol, &opts)? {
                LateTimeResult::Wave(p) => {
                    write_profile(out, &p)?;
                    Ok(format!("underdamped: {} modes in tau", p.modes.len()))
                }
                LateTimeResult::Frozen(p) => {
                    p.write(out, "frozen")?;
                    Ok(format!("overdamped: tau_inf {:.6e}, coefficient ratio {:.6e}", p.tau_inf, p.coefficient_ratio))
                }
                LateTimeResult::Critical(r) => {
                    write_json(&out.join("critical.json"), &r)?;
                    Ok(format!("critical: Htilde variation {:.2e}", r.htilde_variation))
                }
            }
        }
        LateMode::Regimes => unreachable!("handled above"),
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Underdamped => "underdamped",
        Regime::Critical => "critical",
        Regime::Overdamped => "overdamped",
    }
}

/// `w,sigma,regime[,dlog_sqrt_fprime,predicted]` over a grid.
pub fn regimes(grid: &RegimeGrid, out: &Path) -> Out<String> {
    if grid.w.is_empty() || grid.sigma.is_empty() {
        return Err(invalid("regime grid is empty"));
    }
    if grid.measure {
        check_positive("f1", grid.f1)?;
        if !(grid.eta_max > 10.0) {
            return Err(invalid("`eta_max` must exceed 10"));
        }
    }
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let mut f = create(&out.join("regimes.csv"))?;
    if grid.measure {
        writeln!(f, "w,sigma,regime,sound_speed_exponent,predicted").map_err(io)?;
    } else {
        writeln!(f, "w,sigma,regime").map_err(io)?;
    }
    let mut mismatches = 0;
    for &w in &grid.w {
        for &sigma in &grid.sigma {
            let eos = EquationOfState::power_law(w, vec![PowerTerm { coeff: grid.f1, exponent: sigma + 1.0 }])
                .map_err(|e| invalid(e.to_string()))?;
            let class = classify_regime(&eos)?;
            if class.regime != regime_of(w, sigma) {
                mismatches += 1;
            }
            let name = regime_name(class.regime);
            if grid.measure {
                let predicted = if w > 0.0 { 0.0 } else { -3.0 * sigma };
                let measured = match sound_speed_exponent(&eos, w, sigma, grid) {
                    Ok(v) => format!("{v:e}"),
                    // e.g. a superluminal law at this density
                    Err(_) => "nan".to_string(),
                };
                writeln!(f, "{w:e},{sigma:e},{name},{measured},{predicted:e}").map_err(io)?;
            } else {
                writeln!(f, "{w:e},{sigma:e},{name}").map_err(io)?;
            }
        }
    }
    f.flush().map_err(io)?;
    Ok(format!("{} grid points, {mismatches} classifier mismatches", grid.w.len() * grid.sigma.len()))
}

/// Log-log slope of `sqrt f'` over the last decade of a background that
/// starts where the correction is 1% of `eps`, with `a0` chosen so that the
/// big bang sits near `eta = 0`.
fn sound_speed_exponent(eos: &EquationOfState, w: f64, sigma: f64, grid: &RegimeGrid) -> Out<f64> {
    let opts = background_options(None)?;
    let eps0 = (0.01 / grid.f1).powf(1.0 / sigma);
    let a0 = 2.0 / ((1.0 + 3.0 * w) * (opts.kappa * eps0).sqrt());
    let traj = solve_background_with(eos, 1.0, a0, eps0, (1.0, grid.eta_max), 1e-10, &opts)?;
    let (x, y): (Vec<f64>, Vec<f64>) = traj
        .samples()
        .iter()
        .zip(traj.eos_samples())
        .filter(|(s, _)| s.eta >= grid.eta_max / 10.0)
        .map(|(s, d)| (s.eta, d.df.sqrt()))
        .unzip();
    Ok(loglog_slope(&x, &y)?)
}

pub fn classify(cfg: &ClassifyConfig, out: &Path) -> Out<String> {
    match (&cfg.eos, &cfg.grid) {
        (Some(eos), None) => {
            let c = classify_regime(eos)?;
            write_json(&out.join("classify.json"), &c)?;
            Ok(format!("{}", regime_name(c.regime)))
        }
        (None, Some(grid)) => regimes(grid, out),
        _ => Err(invalid("give exactly one of `eos` and `grid`")),
    }
}
