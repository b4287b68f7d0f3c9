//! Formal expansions `sum_k (Phi_{k,0} + Phi_{k,1} ln eta) eta^k` of solutions
//! of `Phi'' + (2 nu + 1) Phi' / eta = w Delta Phi` near `eta = 0`.
//!
//! Substituting the series gives, for every exponent `k`,
//!
//! ```text
//! k (k + 2 nu) Phi_{k,0} = w Delta Phi_{k-2,0} - (2k + 2 nu) Phi_{k,1}
//! k (k + 2 nu) Phi_{k,1} = w Delta Phi_{k-2,1}
//! ```
//!
//! so everything is determined by the coefficients at the two roots `-2 nu`
//! and `0` of the indicial polynomial. Exponents live on the lattice
//! `{-2 nu + 2i} u {2i}`.

use crate::error::{Error, Result};

/// Operations the recursion needs from a coefficient field.
pub trait SeriesField: Clone {
    fn zero_like(&self) -> Self;
    /// `a * self + b * other`.
    fn combine(&self, a: f64, other: &Self, b: f64) -> Self;
    fn laplace(&self) -> Self;
    fn max_abs(&self) -> f64;
    fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }
}

impl SeriesField for crate::spectral::SpectralField {
    fn zero_like(&self) -> Self {
        Self::zeros(*self.geometry())
    }

    fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        self.scale(a).axpy(b, other).expect("series fields share a geometry")
    }

    fn laplace(&self) -> Self {
        crate::spectral::laplacian(self)
    }

    fn max_abs(&self) -> f64 {
        crate::spectral::SpectralField::max_abs(self)
    }
}

/// Exponents closer than this are identified.
const SAME_EXPONENT: f64 = 1e-9;
/// Indicial factors below this (but not identically zero) trigger a warning.
const SMALL_DIVISOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTerm<F> {
    pub k: f64,
    /// Power of `ln eta`: 0 or 1.
    pub l: u8,
    pub coeff: F,
}

/// Truncated expansion. Terms are sorted by `(k, l)`.
#[derive(Debug, Clone)]
pub struct Series<F> {
    pub two_nu: f64,
    pub w: f64,
    pub k_max: f64,
    pub terms: Vec<SeriesTerm<F>>,
    pub warnings: Vec<String>,
}

/// Sorted exponent lattice `{-p + 2i} u {2i}` up to `k_max`.
pub fn exponent_lattice(two_nu: f64, k_max: f64) -> Vec<f64> {
    let mut ks: Vec<f64> = Vec::new();
    let mut push = |k: f64| {
        if let Some(existing) = ks.iter_mut().find(|e| (**e - k).abs() < SAME_EXPONENT) {
            // prefer the exactly even representative
            if (k - k.round()).abs() < (*existing - existing.round()).abs() {
                *existing = k;
            }
        } else {
            ks.push(k);
        }
    };
    let mut i = 0;
    while -two_nu + 2.0 * i as f64 <= k_max + SAME_EXPONENT {
        push(-two_nu + 2.0 * i as f64);
        i += 1;
    }
    let mut i = 0;
    while 2.0 * i as f64 <= k_max + SAME_EXPONENT {
        push(2.0 * i as f64);
        i += 1;
    }
    ks.sort_by(f64::total_cmp);
    ks
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() < SAME_EXPONENT
}

/// Builds the series from the free data.
///
/// * `lead`: coefficient at `k = -2 nu` (ignored when `2 nu = 0`);
/// * `zero`: coefficient `Phi_{0,0}`;
/// * `log_zero`: `Phi_{0,1}`, free only when `2 nu = 0` (double root), otherwise
///   forced by the recursion and must be `None`.
pub fn build_generic<F: SeriesField>(
    two_nu: f64,
    w: f64,
    lead: Option<F>,
    zero: F,
    log_zero: Option<F>,
    k_max: f64,
) -> Result<Series<F>> {
    if !(k_max >= 0.0) {
        return Err(Error::Domain(format!("K_max = {k_max} must be non-negative")));
    }
    let double_root = same(two_nu, 0.0);
    if log_zero.is_some() && !double_root {
        return Err(Error::Precondition("Phi_{0,1} is not free unless 2 nu = 0".into()));
    }
    let ks = exponent_lattice(two_nu, k_max);
    let mut warnings = Vec::new();
    let nu = 0.5 * two_nu;
    let gap = (nu - nu.round()).abs();
    if gap >= SAME_EXPONENT && gap < 1e-3 {
        warnings.push(format!(
            "nu = {nu} is within {gap:.1e} of an integer; the recursion is nearly resonant"
        ));
    }
    let zero_field = zero.zero_like();
    let mut c0: Vec<F> = Vec::with_capacity(ks.len());
    let mut c1: Vec<F> = Vec::with_capacity(ks.len());
    let prev = |ks: &[f64], j: usize| ks[..j].iter().position(|&e| same(e, ks[j] - 2.0));
    for j in 0..ks.len() {
        let k = ks[j];
        let below = prev(&ks, j);
        let src0 = below.map(|i| c0[i].laplace().combine(w, &zero_field, 0.0));
        let src1 = below.map(|i| c1[i].laplace().combine(w, &zero_field, 0.0));
        let (v0, v1) = if same(k, 0.0) {
            let l1 = if double_root {
                log_zero.clone().unwrap_or_else(|| zero_field.clone())
            } else {
                // k (k + 2 nu) = 0 forces 2 nu Phi_{0,1} = w Delta Phi_{-2,0}
                src0.clone()
                    .map_or_else(|| zero_field.clone(), |s| s.combine(1.0 / two_nu, &zero_field, 0.0))
            };
            (zero.clone(), l1)
        } else if same(k, -two_nu) {
            let lead = lead
                .clone()
                .ok_or_else(|| Error::Precondition("missing leading coefficient".into()))?;
            (lead, zero_field.clone())
        } else {
            let d = k * (k + two_nu);
            if d.abs() < SMALL_DIVISOR {
                warnings.push(format!("small indicial factor {d:e} at k = {k}"));
            }
            let l1 = src1.unwrap_or_else(|| zero_field.clone()).combine(1.0 / d, &zero_field, 0.0);
            let l0 = src0
                .unwrap_or_else(|| zero_field.clone())
                .combine(1.0 / d, &l1, -(2.0 * k + two_nu) / d);
            (l0, l1)
        };
        c0.push(v0);
        c1.push(v1);
    }
    let mut terms = Vec::new();
    for ((k, v0), v1) in ks.iter().zip(c0).zip(c1) {
        let datum = same(*k, 0.0) || same(*k, -two_nu);
        if datum || !v0.is_zero() {
            terms.push(SeriesTerm { k: *k, l: 0, coeff: v0 });
        }
        // no log terms at negative exponents
        if *k >= -SAME_EXPONENT && !v1.is_zero() {
            terms.push(SeriesTerm { k: *k, l: 1, coeff: v1 });
        }
    }
    Ok(Series {
        two_nu,
        w,
        k_max,
        terms,
        warnings,
    })
}

impl<F: SeriesField> Series<F> {
    pub fn term(&self, k: f64, l: u8) -> Option<&F> {
        self.terms
            .iter()
            .find(|t| t.l == l && same(t.k, k))
            .map(|t| &t.coeff)
    }

    pub fn has_logs(&self) -> bool {
        self.terms.iter().any(|t| t.l == 1)
    }

    /// `(Phi, Phi')` at `eta`, summed in increasing order of `k`.
    pub fn evaluate(&self, eta: f64) -> Result<(F, F)> {
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("series evaluated at eta = {eta}")));
        }
        let zero = self.terms[0].coeff.zero_like();
        let (mut phi, mut dphi) = (zero.clone(), zero);
        let ln = eta.ln();
        for t in &self.terms {
            let p = eta.powf(t.k);
            let dp = eta.powf(t.k - 1.0);
            if t.l == 0 {
                phi = phi.combine(1.0, &t.coeff, p);
                dphi = dphi.combine(1.0, &t.coeff, t.k * dp);
            } else {
                phi = phi.combine(1.0, &t.coeff, p * ln);
                dphi = dphi.combine(1.0, &t.coeff, (t.k * ln + 1.0) * dp);
            }
        }
        Ok((phi, dphi))
    }

    /// Largest residual of the two recursions over all stored exponents,
    /// relative to the largest coefficient.
    pub fn recursion_residual(&self) -> f64 {
        let zero = self.terms[0].coeff.zero_like();
        let get = |k: f64, l: u8| self.term(k, l).cloned().unwrap_or_else(|| zero.clone());
        let scale = self.terms.iter().map(|t| t.coeff.max_abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let ks = exponent_lattice(self.two_nu, self.k_max);
        let mut worst: f64 = 0.0;
        for &k in &ks {
            let d = k * (k + self.two_nu);
            let (p0, p1) = (get(k, 0), get(k, 1));
            let (s0, s1) = (get(k - 2.0, 0).laplace(), get(k - 2.0, 1).laplace());
            let r1 = p1.combine(d, &s1, -self.w);
            let r0 = p0.combine(d, &s0, -self.w).combine(1.0, &p1, 2.0 * k + self.two_nu);
            let free_log = same(k, 0.0) && same(self.two_nu, 0.0);
            if !free_log {
                worst = worst.max(r1.max_abs()).max(r0.max_abs());
            }
        }
        worst / scale
    }
}
