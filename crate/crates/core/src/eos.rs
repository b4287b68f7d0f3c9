//! Barotropic equations of state `p = f(eps)`.

use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking `f'(eps)` against the physical interval [0, 1].
const SOUND_SPEED_SLACK: f64 = 1e-12;

/// One correction term `coeff * eps^exponent` of a power-law expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coeff: f64,
    pub exponent: f64,
}

/// Density regime in which a power-law expansion is meant to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionSide {
    /// All exponents below one, decreasing: valid as `eps -> infinity`.
    HighDensity,
    /// All exponents above one, increasing: valid as `eps -> 0`.
    LowDensity,
}

/// Values of `f` and its first three derivatives at one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EosDerivatives {
    pub eps: f64,
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
    pub d3f: f64,
}

/// Equation of state. Construct through [`EquationOfState::linear`],
/// [`EquationOfState::power_law`] or [`EquationOfState::polytropic`], or
/// deserialize from JSON with a `type` discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EosSpec", into = "EosSpec")]
pub enum EquationOfState {
    Linear {
        w: f64,
    },
    PowerLaw {
        w: f64,
        terms: Vec<PowerTerm>,
        side: ExpansionSide,
    },
    /// `eps = m + K n m^((n+1)/n)`, `p = K m^((n+1)/n)`.
    Polytropic {
        k: f64,
        n: f64,
    },
}

/// Wire form of an equation of state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum EosSpec {
    Linear {
        w: f64,
    },
    #[serde(rename = "powerlaw")]
    PowerLaw {
        w: f64,
        terms: Vec<PowerTerm>,
    },
    Polytropic {
        #[serde(rename = "K")]
        k: f64,
        n: f64,
    },
}

impl TryFrom<EosSpec> for EquationOfState {
    type Error = Error;

    fn try_from(spec: EosSpec) -> Result<Self> {
        match spec {
            EosSpec::Linear { w } => Self::linear(w),
            EosSpec::PowerLaw { w, terms } => Self::power_law(w, terms),
            EosSpec::Polytropic { k, n } => Self::polytropic(k, n),
        }
    }
}

impl From<EquationOfState> for EosSpec {
    fn from(eos: EquationOfState) -> Self {
        match eos {
            EquationOfState::Linear { w } => EosSpec::Linear { w },
            EquationOfState::PowerLaw { w, terms, .. } => EosSpec::PowerLaw { w, terms },
            EquationOfState::Polytropic { k, n } => EosSpec::Polytropic { k, n },
        }
    }
}

impl EquationOfState {
    pub fn linear(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("linear w = {w} outside [0, 1]")));
        }
        Ok(Self::Linear { w })
    }

    pub fn dust() -> Self {
        Self::Linear { w: 0.0 }
    }

    pub fn radiation() -> Self {
        Self::Linear { w: 1.0 / 3.0 }
    }

    /// `f(eps) = w eps + sum_j f_j eps^(a_j)`. The side of validity is read off
    /// the exponents: all below one and decreasing, or all above one and
    /// increasing.
    pub fn power_law(w: f64, terms: Vec<PowerTerm>) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("power-law w = {w} outside [0, 1]")));
        }
        let Some(first) = terms.first() else {
            return Err(Error::Domain(
                "power-law equation of state needs at least one correction term".into(),
            ));
        };
        if terms.iter().any(|t| !t.coeff.is_finite() || !t.exponent.is_finite()) {
            return Err(Error::Domain("non-finite power-law term".into()));
        }
        let side = if terms.iter().all(|t| t.exponent < 1.0)
            && terms.windows(2).all(|p| p[1].exponent < p[0].exponent)
        {
            ExpansionSide::HighDensity
        } else if terms.iter().all(|t| t.exponent > 1.0)
            && terms.windows(2).all(|p| p[1].exponent > p[0].exponent)
        {
            ExpansionSide::LowDensity
        } else {
            return Err(Error::Domain(
                "power-law exponents must be all < 1 and decreasing, or all > 1 and increasing"
                    .into(),
            ));
        };
        if w == 0.0 && first.coeff <= 0.0 {
            return Err(Error::Domain(
                "power law with w = 0 needs a positive leading coefficient".into(),
            ));
        }
        Ok(Self::PowerLaw { w, terms, side })
    }

    /// Pure power `f = f1 eps^(sigma + 1)` (w = 0), the model used for the
    /// late-time regime study.
    pub fn pure_power(f1: f64, sigma: f64) -> Result<Self> {
        Self::power_law(
            0.0,
            vec![PowerTerm {
                coeff: f1,
                exponent: sigma + 1.0,
            }],
        )
    }

    pub fn polytropic(k: f64, n: f64) -> Result<Self> {
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::Domain(format!("polytropic K = {k} outside (0, 1)")));
        }
        if !(n > 1.0) || !n.is_finite() {
            return Err(Error::Domain(format!("polytropic n = {n} must exceed 1")));
        }
        Ok(Self::Polytropic { k, n })
    }

    pub fn is_dust(&self) -> bool {
        matches!(self, Self::Linear { w } if *w == 0.0)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear { .. })
    }

    /// Limit of `f(eps)/eps` as `eps -> infinity`, the effective `w` near the
    /// big-bang singularity.
    pub fn high_density_w(&self) -> f64 {
        match self {
            Self::Linear { w } | Self::PowerLaw { w, .. } => *w,
            Self::Polytropic { n, .. } => 1.0 / n,
        }
    }

    /// Smallest positive exponent by which `f(eps)/eps` approaches its
    /// high-density limit, expressed as a power of `eps^-1`: for
    /// `f ~ w eps + f1 eps^a1` this is `1 - a1`. `None` for a linear law.
    pub fn high_density_correction(&self) -> Option<f64> {
        match self {
            Self::Linear { .. } => None,
            Self::PowerLaw { terms, side, .. } => match side {
                ExpansionSide::HighDensity => Some(1.0 - terms[0].exponent),
                ExpansionSide::LowDensity => None,
            },
            Self::Polytropic { n, .. } => Some(1.0 / (n + 1.0)),
        }
    }

    /// `f(eps)`.
    pub fn pressure(&self, eps: f64) -> Result<f64> {
        check_density(eps, true)?;
        if eps == 0.0 {
            return Ok(0.0);
        }
        Ok(self.derivatives(eps)?.f)
    }

    /// `f'(eps)`, the squared sound speed, checked against [0, 1].
    pub fn sound_speed_sq(&self, eps: f64) -> Result<f64> {
        check_density(eps, false)?;
        let df = self.derivatives(eps)?.df;
        if !(-SOUND_SPEED_SLACK..=1.0 + SOUND_SPEED_SLACK).contains(&df) {
            return Err(Error::Unphysical(format!(
                "f'({eps:e}) = {df} outside [0, 1]"
            )));
        }
        Ok(df.clamp(0.0, 1.0))
    }

    /// `f` and its first three derivatives at `eps > 0`. No physicality check.
    pub fn derivatives(&self, eps: f64) -> Result<EosDerivatives> {
        check_density(eps, false)?;
        Ok(match self {
            Self::Linear { w } => EosDerivatives {
                eps,
                f: w * eps,
                df: *w,
                d2f: 0.0,
                d3f: 0.0,
            },
            Self::PowerLaw { w, terms, .. } => {
                let mut d = EosDerivatives {
                    eps,
                    f: w * eps,
                    df: *w,
                    d2f: 0.0,
                    d3f: 0.0,
                };
                for t in terms {
                    let a = t.exponent;
                    let base = t.coeff * eps.powf(a - 3.0);
                    d.f += base * eps * eps * eps;
                    d.df += a * base * eps * eps;
                    d.d2f += a * (a - 1.0) * base * eps;
                    d.d3f += a * (a - 1.0) * (a - 2.0) * base;
                }
                d
            }
            Self::Polytropic { k, n } => {
                let m = polytropic_parameter(*k, *n, eps)?;
                polytropic_derivatives(*k, *n, m)
            }
        })
    }

    /// Parameter `m` of a polytropic law at energy density `eps`.
    pub fn polytropic_parameter(&self, eps: f64) -> Result<f64> {
        match self {
            Self::Polytropic { k, n } => {
                check_density(eps, false)?;
                polytropic_parameter(*k, *n, eps)
            }
            _ => Err(Error::Domain("not a polytropic equation of state".into())),
        }
    }

    /// `(eps, p)` of a polytropic law at parameter `m`.
    pub fn polytropic_state(&self, m: f64) -> Result<(f64, f64)> {
        match self {
            Self::Polytropic { k, n } => {
                if m < 0.0 {
                    return Err(Error::Domain(format!("polytropic parameter m = {m} < 0")));
                }
                let p = k * m.powf((n + 1.0) / n);
                Ok((m + n * p, p))
            }
            _ => Err(Error::Domain("not a polytropic equation of state".into())),
        }
    }
}

fn check_density(eps: f64, allow_zero: bool) -> Result<()> {
    if !eps.is_finite() || eps < 0.0 || (!allow_zero && eps == 0.0) {
        return Err(Error::Domain(format!("energy density {eps} not admissible")));
    }
    Ok(())
}

/// Inverts `eps = m + K n m^((n+1)/n)` for `m` by a bracketed root search in
/// `log m`, polished by one Newton step.
fn polytropic_parameter(k: f64, n: f64, eps: f64) -> Result<f64> {
    let kn = k * n;
    let e = (n + 1.0) / n;
    let hi = eps.min((eps / kn).powf(1.0 / e));
    let lo = (0.5 * eps).min((0.5 * eps / kn).powf(1.0 / e));
    let g = |x: f64| {
        let m = x.exp();
        (m + kn * m.powf(e)).ln() - eps.ln()
    };
    let (xl, xh) = (lo.ln(), hi.ln());
    let x = if (xh - xl).abs() < 1e-15 {
        xl
    } else {
        let mut conv = SimpleConvergency {
            // absolute in log m, so it must scale with |x| at extreme densities
            eps: 1e-14 * (1.0 + xl.abs().max(xh.abs())),
            max_iter: 200,
        };
        find_root_brent(xl, xh, g, &mut conv)
            .map_err(|e| Error::Numeric(format!("polytropic inversion at eps = {eps}: {e:?}")))?
    };
    let mut m = x.exp();
    let resid = m + kn * m.powf(e) - eps;
    let slope = 1.0 + kn * e * m.powf(e - 1.0);
    m -= resid / slope;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Numeric(format!("polytropic inversion at eps = {eps}")));
    }
    Ok(m)
}

fn polytropic_derivatives(k: f64, n: f64, m: f64) -> EosDerivatives {
    // With q = m^(1/n) and c = K (n+1):
    //   eps_m = 1 + c q, p_m = c q / n, f' = p_m / eps_m,
    //   f'' = c q / (n^2 m (1 + c q)^3).
    let c = k * (n + 1.0);
    let q = m.powf(1.0 / n);
    let p = k * m * q;
    let eps = m + n * p;
    let one_cq = 1.0 + c * q;
    let df = c * q / (n * one_cq);
    let d2f = c * q / (n * n * m * one_cq.powi(3));
    // d/dm of q/(m (1+cq)^3), divided by eps_m
    let g_m = (1.0 / n - 1.0) * q / (m * m * one_cq.powi(3))
        - 3.0 * c * q * q / (n * m * m * one_cq.powi(4));
    let d3f = c / (n * n) * g_m / one_cq;
    EosDerivatives {
        eps,
        f: p,
        df,
        d2f,
        d3f,
    }
}
