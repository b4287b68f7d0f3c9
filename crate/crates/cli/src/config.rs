//! JSON experiment configurations. Unknown fields are rejected.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::Deserialize;

use flrw_perturb::background::BackgroundOptions;
use flrw_perturb::spectral::TorusGeometry;
use flrw_perturb::EquationOfState;

use crate::CliError;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
}

fn default_n() -> usize {
    17
}

fn default_l() -> f64 {
    2.0 * PI
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            n: default_n(),
            l: default_l(),
        }
    }
}

impl Geometry {
    pub fn torus(&self) -> Result<TorusGeometry, CliError> {
        TorusGeometry::new(self.n, self.l).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Initial data for one field pair.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSource {
    /// Seeded band-limited random fields.
    Random {
        #[serde(default = "default_band")]
        band: i64,
        #[serde(default = "yes")]
        with_mean: bool,
    },
    /// Explicit Fourier modes; each entry also sets the conjugate mode.
    Modes { modes: Vec<ModeEntry> },
    /// Field files in the spectral or grid format.
    File { first: PathBuf, second: PathBuf },
}

fn default_band() -> i64 {
    flrw_perturb::random::DEFAULT_BAND
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: [i64; 3],
    #[serde(default)]
    pub first: [f64; 2],
    #[serde(default)]
    pub second: [f64; 2],
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundData {
    pub a0: f64,
    pub eps0: f64,
}

/// `8 pi G / 3` from an optional `G`.
pub fn background_options(g: Option<f64>) -> Result<BackgroundOptions, CliError> {
    let mut opts = BackgroundOptions::default();
    if let Some(g) = g {
        if !(g > 0.0 && g.is_finite()) {
            return Err(CliError::Config(format!("G = {g} must be positive")));
        }
        opts.kappa = 8.0 * PI * g / 3.0;
    }
    Ok(opts)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BgConfig {
    pub eos: EquationOfState,
    #[serde(default = "one")]
    pub eta0: f64,
    #[serde(default = "one")]
    pub a0: f64,
    pub eps0: f64,
    pub eta_range: [f64; 2],
    #[serde(default = "default_bg_tol")]
    pub tol: f64,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    pub samples_per_efold: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn default_bg_tol() -> f64 {
    1e-10
}

fn default_tol() -> f64 {
    1e-11
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub eos: EquationOfState,
    /// Required when `eos` is not linear.
    pub background: Option<BackgroundData>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    #[serde(default)]
    pub geometry: Geometry,
    pub eta0: f64,
    pub times: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// `first` is `Phi`, `second` is `Phi'`.
    pub data: FieldSource,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SingMode {
    Build,
    Fit,
    Roundtrip,
    Exponent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub window: Option<[f64; 2]>,
    pub samples: Option<usize>,
    pub k_fit: Option<f64>,
    #[serde(default)]
    pub force_logs: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingConfig {
    pub mode: SingMode,
    /// Linear `w` values (build, fit, roundtrip).
    pub w: Option<OneOrMany>,
    /// Equation of state with a high-density limit (exponent).
    pub eos: Option<EquationOfState>,
    #[serde(default)]
    pub geometry: Geometry,
    /// `(psi1, psi2)` for build and roundtrip; `(Phi, Phi')` at `eta0` for fit
    /// and exponent.
    pub data: FieldSource,
    pub eta0: Option<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
    #[serde(default = "default_eta_start")]
    pub eta_start: f64,
    #[serde(default = "default_sing_tol")]
    pub tol: f64,
    pub fit: Option<FitConfig>,
}

fn default_k_max() -> f64 {
    8.0
}

fn default_eta_start() -> f64 {
    1e-3
}

fn default_sing_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CircleSource {
    Random {
        #[serde(default = "default_circle_band")]
        band: i64,
    },
    /// Grid samples of `k` and `omega`.
    Grid { k: Vec<f64>, omega: Vec<f64> },
}

fn default_circle_band() -> i64 {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GowdyConfig {
    #[serde(rename = "N", default = "default_gowdy_n")]
    pub n: usize,
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
    pub data: CircleSource,
    #[serde(default = "default_gowdy_start")]
    pub t_start: f64,
    #[serde(default = "default_gowdy_end")]
    pub t_end: f64,
    pub k_max: Option<f64>,
    pub tol: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub samples: Option<usize>,
}

fn default_gowdy_n() -> usize {
    33
}

fn default_gowdy_start() -> f64 {
    1e-3
}

fn default_gowdy_end() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum LateMode {
    Extract,
    Reconstruct,
    General,
    Regimes,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeGrid {
    pub w: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Also solve a background per point and measure the growth exponent of
    /// `tau`.
    #[serde(default)]
    pub measure: bool,
    #[serde(default = "default_f1")]
    pub f1: f64,
    #[serde(default = "default_measure_eta")]
    pub eta_max: f64,
}

fn default_f1() -> f64 {
    0.1
}

fn default_measure_eta() -> f64 {
    1e4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateConfig {
    pub mode: LateMode,
    /// Linear law for extract and reconstruct.
    pub w: Option<f64>,
    /// General law for the general mode.
    pub eos: Option<EquationOfState>,
    pub background: Option<BackgroundData>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    #[serde(default)]
    pub geometry: Geometry,
    pub data: Option<FieldSource>,
    #[serde(default = "one")]
    pub eta0: f64,
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_late_samples")]
    pub samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub residual_max: Option<f64>,
    /// Far times for reconstruct; each is used in turn and compared.
    pub eta_far: Option<Vec<f64>>,
    /// Where reconstruct writes the recovered state.
    pub eta_target: Option<f64>,
    pub grid: Option<RegimeGrid>,
}

fn default_late_samples() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub eos: Option<EquationOfState>,
    pub grid: Option<RegimeGrid>,
}
