//! Small dense least-squares helpers shared by the asymptotic fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of a linear least-squares problem.
#[derive(Debug, Clone)]
pub struct LstsqFit {
    pub coeffs: Vec<f64>,
    /// Ratio of extreme singular values of the column-normalised design.
    pub cond: f64,
    /// Root-mean-square of the (weighted) residual.
    pub rms_residual: f64,
}

/// Solves `min |W (A c - b)|` where the rows of `A` are `rows` and `W` is
/// diagonal. Columns are normalised before the SVD so that the reported
/// condition number reflects the shape of the basis rather than its scale.
pub fn lstsq(rows: &[Vec<f64>], rhs: &[f64], weights: Option<&[f64]>, max_cond: f64) -> Result<LstsqFit> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m < n || n == 0 {
        return Err(Error::Precondition(format!(
            "least squares with {m} samples and {n} unknowns"
        )));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut a = DMatrix::from_fn(m, n, |i, j| rows[i][j] * w(i));
    let b = DVector::from_fn(m, |i, _| rhs[i] * w(i));
    let mut scale = vec![1.0; n];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        if norm > 0.0 {
            *s = norm;
            a.column_mut(j).unscale_mut(norm);
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= max_cond) {
        return Err(Error::IllConditioned { cond });
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Numeric(format!("least squares: {e}")))?;
    let resid = &a * &x - &b;
    let coeffs = x.iter().zip(&scale).map(|(c, s)| c / s).collect();
    Ok(LstsqFit {
        coeffs,
        cond,
        rms_residual: resid.norm() / (m as f64).sqrt(),
    })
}

/// Factorised weighted least-squares problem, reusable for many right-hand
/// sides sharing the same design matrix.
#[derive(Debug, Clone)]
pub struct LstsqSolver {
    pinv: DMatrix<f64>,
    design: DMatrix<f64>,
    weights: Vec<f64>,
    scale: Vec<f64>,
    pub cond: f64,
}

impl LstsqSolver {
    pub fn new(rows: &[Vec<f64>], weights: &[f64], max_cond: f64) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m < n || n == 0 || weights.len() != m {
            return Err(Error::Precondition(format!(
                "least squares with {m} samples and {n} unknowns"
            )));
        }
        let mut a = DMatrix::from_fn(m, n, |i, j| rows[i][j] * weights[i]);
        let mut scale = vec![1.0; n];
        for (j, s) in scale.iter_mut().enumerate() {
            let norm = a.column(j).norm();
            if norm > 0.0 {
                *s = norm;
                a.column_mut(j).unscale_mut(norm);
            }
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(cond <= max_cond) {
            return Err(Error::IllConditioned { cond });
        }
        let pinv = svd
            .pseudo_inverse(0.0)
            .map_err(|e| Error::Numeric(format!("least squares: {e}")))?;
        Ok(Self {
            pinv,
            design: a,
            weights: weights.to_vec(),
            scale,
            cond,
        })
    }

    /// Coefficients and weighted rms residual for one right-hand side.
    pub fn solve(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let b = DVector::from_fn(rhs.len(), |i, _| rhs[i] * self.weights[i]);
        let x = &self.pinv * &b;
        let resid = &self.design * &x - &b;
        let coeffs = x.iter().zip(&self.scale).map(|(c, s)| c / s).collect();
        (coeffs, resid.norm() / (rhs.len() as f64).sqrt())
    }
}

/// Straight-line fit `y = c0 + c1 x`; returns `(c0, c1)`.
pub fn line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&x| vec![1.0, x]).collect();
    let fit = lstsq(&rows, y, None, 1e12)?;
    Ok((fit.coeffs[0], fit.coeffs[1]))
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(line(&lx, &ly)?.1)
}

/// `n` points spaced geometrically from `a` to `b` inclusive.
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                a
            } else if i == n - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` points spaced evenly from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
        .collect()
}
