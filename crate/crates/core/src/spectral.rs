//! Real scalar fields on the flat three-torus, stored by Fourier coefficients.
//!
//! Coefficients are kept in FFT order along each axis: index `j` stands for
//! the wave number `j` when `j <= M` and `j - N` otherwise, with
//! `M = (N - 1) / 2`. The cube is stored row-major over `(kx, ky, kz)`. The
//! normalisation is `c_k = N^-3 sum_x f(x) exp(-i 2 pi k.x / L)`, so `c_0` is
//! the spatial mean and `f(x) = sum_k c_k exp(i 2 pi k.x / L)`.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Wavevector = [i64; 3];

/// Periodic box of side `l` resolved by `n` modes per direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    pub n: usize,
    pub l: f64,
}

impl Default for TorusGeometry {
    fn default() -> Self {
        Self { n: 17, l: 2.0 * PI }
    }
}

impl TorusGeometry {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::Domain(format!("N = {n} must be odd and at least 3")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Domain(format!("L = {l} must be positive")));
        }
        Ok(Self { n, l })
    }

    /// Largest resolved wave number `(N - 1) / 2`.
    pub fn kmax(&self) -> i64 {
        (self.n as i64 - 1) / 2
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn volume(&self) -> f64 {
        self.l * self.l * self.l
    }

    /// `2 pi / L`.
    pub fn k_unit(&self) -> f64 {
        2.0 * PI / self.l
    }

    pub fn wavenumber(&self, j: usize) -> i64 {
        let j = j as i64;
        if j <= self.kmax() {
            j
        } else {
            j - self.n as i64
        }
    }

    fn slot(&self, k: i64) -> Option<usize> {
        if k.abs() > self.kmax() {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.n as i64) as usize)
        }
    }

    /// Storage index of a wave vector, if it is resolved.
    pub fn index(&self, k: Wavevector) -> Option<usize> {
        let (a, b, c) = (self.slot(k[0])?, self.slot(k[1])?, self.slot(k[2])?);
        Some((a * self.n + b) * self.n + c)
    }

    pub fn wavevector(&self, idx: usize) -> Wavevector {
        let n = self.n;
        [
            self.wavenumber(idx / (n * n)),
            self.wavenumber((idx / n) % n),
            self.wavenumber(idx % n),
        ]
    }

    /// Index of `-k` for the wave vector stored at `idx`.
    pub fn mirror(&self, idx: usize) -> usize {
        let n = self.n;
        let flip = |j: usize| if j == 0 { 0 } else { n - j };
        let (a, b, c) = (idx / (n * n), (idx / n) % n, idx % n);
        (flip(a) * n + flip(b)) * n + flip(c)
    }

    /// Integer `|k|^2` of the wave vector at `idx`.
    pub fn k2(&self, idx: usize) -> i64 {
        let k = self.wavevector(idx);
        k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
    }

    /// Physical `|2 pi k / L|^2`, minus the Laplacian eigenvalue.
    pub fn laplacian_magnitude(&self, idx: usize) -> f64 {
        let u = self.k_unit();
        u * u * self.k2(idx) as f64
    }

    /// Grid point coordinates for row-major grid index `i`.
    pub fn point(&self, i: usize) -> [f64; 3] {
        let n = self.n;
        let h = self.l / n as f64;
        [(i / (n * n)) as f64 * h, ((i / n) % n) as f64 * h, (i % n) as f64 * h]
    }
}

/// Fourier representation of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    geometry: TorusGeometry,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(geometry: TorusGeometry) -> Self {
        Self {
            geometry,
            coeffs: vec![Complex64::new(0.0, 0.0); geometry.len()],
        }
    }

    pub fn constant(geometry: TorusGeometry, c: f64) -> Self {
        let mut f = Self::zeros(geometry);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Builds a field from raw coefficients, enforcing Hermitian symmetry by
    /// averaging each pair.
    pub fn from_coeffs(geometry: TorusGeometry, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != geometry.len() {
            return Err(Error::Data(format!(
                "{} coefficients for a cube of {}",
                coeffs.len(),
                geometry.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Data("non-finite coefficient".into()));
        }
        let mut f = Self { geometry, coeffs };
        f.symmetrize();
        Ok(f)
    }

    /// Field whose coefficients at the given wave vectors (and the mirrored
    /// conjugates) are set; everything else zero.
    pub fn from_modes(geometry: TorusGeometry, modes: &[(Wavevector, Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(geometry);
        for &(k, c) in modes {
            f.set_pair(k, c)?;
        }
        Ok(f)
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, k: Wavevector) -> Complex64 {
        self.geometry
            .index(k)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    /// Sets `c_k = c` and `c_-k = conj(c)`. For `k = 0` only the real part is kept.
    pub fn set_pair(&mut self, k: Wavevector, c: Complex64) -> Result<()> {
        let i = self
            .geometry
            .index(k)
            .ok_or_else(|| Error::Domain(format!("wave vector {k:?} not resolved")))?;
        let j = self.geometry.mirror(i);
        if i == j {
            self.coeffs[i] = Complex64::new(c.re, 0.0);
        } else {
            self.coeffs[i] = c;
            self.coeffs[j] = c.conj();
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Applies `c_k -> g(idx, c_k)` and restores exact Hermitian symmetry.
    pub fn map_indexed(&self, mut g: impl FnMut(usize, Complex64) -> Complex64) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(i, &c)| g(i, c)).collect();
        let mut f = Self {
            geometry: self.geometry,
            coeffs,
        };
        f.symmetrize();
        f
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            geometry: self.geometry,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            geometry: self.geometry,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b * s)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self.geometry != other.geometry {
            return Err(Error::Precondition("fields live on different geometries".into()));
        }
        Ok(())
    }

    /// Spatial `L^2` norm, `sqrt(integral f^2) = sqrt(L^3 sum |c_k|^2)`.
    pub fn norm_l2(&self) -> f64 {
        (self.geometry.volume() * self.sum_sq()).sqrt()
    }

    /// `sum_k |c_k|^2`, the mean of `f^2`, summed in storage order.
    pub fn sum_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.geometry.mirror(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    fn symmetrize(&mut self) {
        for i in 0..self.coeffs.len() {
            let j = self.geometry.mirror(i);
            if j < i {
                continue;
            }
            if i == j {
                self.coeffs[i].im = 0.0;
            } else {
                let avg = (self.coeffs[i] + self.coeffs[j].conj()) * 0.5;
                self.coeffs[i] = avg;
                self.coeffs[j] = avg.conj();
            }
        }
    }

    /// Indices of resolved wave vectors with `k` in the half space
    /// `kx > 0, or kx = 0 and ky > 0, or kx = ky = 0 and kz > 0`.
    pub fn half_space(&self) -> Vec<usize> {
        (0..self.coeffs.len())
            .filter(|&i| {
                let k = self.geometry.wavevector(i);
                k[0] > 0 || (k[0] == 0 && (k[1] > 0 || (k[1] == 0 && k[2] > 0)))
            })
            .collect()
    }
}

fn fft3(n: usize, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    // last axis is contiguous
    fft.process(data);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for stride in [n, n * n] {
        for block in 0..n * n {
            let base = if stride == n {
                (block / n) * n * n + block % n
            } else {
                block
            };
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[base + j * stride];
            }
            fft.process(&mut line);
            for (j, v) in line.iter().enumerate() {
                data[base + j * stride] = *v;
            }
        }
    }
}

/// Fourier coefficients of `n^3` real samples on the uniform row-major grid.
pub fn forward_transform(geometry: TorusGeometry, grid: &[f64]) -> Result<SpectralField> {
    if grid.len() != geometry.len() {
        return Err(Error::Data(format!(
            "{} samples for a grid of {}",
            grid.len(),
            geometry.len()
        )));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite grid sample".into()));
    }
    let mut data: Vec<Complex64> = grid.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft3(geometry.n, &mut data, false);
    let norm = 1.0 / geometry.len() as f64;
    for c in &mut data {
        *c *= norm;
    }
    SpectralField::from_coeffs(geometry, data)
}

/// Grid samples of a spectral field.
pub fn inverse_transform(field: &SpectralField) -> Vec<f64> {
    let mut data = field.coeffs.clone();
    fft3(field.geometry.n, &mut data, true);
    data.into_iter().map(|c| c.re).collect()
}

/// Multiplies each coefficient by `-|2 pi k / L|^2`.
pub fn laplacian(field: &SpectralField) -> SpectralField {
    let g = field.geometry;
    field.map_indexed(|i, c| c * -g.laplacian_magnitude(i))
}

/// Splits off the spatial mean.
pub fn zero_mean_split(field: &SpectralField) -> (f64, SpectralField) {
    let mut residual = field.clone();
    residual.coeffs[0] = Complex64::new(0.0, 0.0);
    (field.mean(), residual)
}

/// Spatial `L^2` norm of grid samples by the rectangle rule.
pub fn grid_norm_l2(geometry: &TorusGeometry, grid: &[f64]) -> f64 {
    let cell = geometry.volume() / geometry.len() as f64;
    (grid.iter().map(|v| v * v).sum::<f64>() * cell).sqrt()
}

/// Contents of a field file.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Grid(TorusGeometry, Vec<f64>),
    Spectral(SpectralField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Grid,
    Spectral,
}

/// JSON header of a field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub layout: String,
    pub kind: FieldKind,
    /// Sidecar file name, relative to the header.
    pub data: String,
}

/// Writes `path` (JSON header) and a sidecar `.bin` next to it.
pub fn write_field(path: &Path, data: &FieldData) -> Result<()> {
    let (geometry, kind, values): (TorusGeometry, FieldKind, Vec<f64>) = match data {
        FieldData::Grid(g, v) => (*g, FieldKind::Grid, v.clone()),
        FieldData::Spectral(f) => (
            f.geometry,
            FieldKind::Spectral,
            f.coeffs.iter().flat_map(|c| [c.re, c.im]).collect(),
        ),
    };
    let bin = path.with_extension("bin");
    let bin_name = bin
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Format(format!("bad field path {}", path.display())))?
        .to_string();
    let header = FieldHeader {
        n: geometry.n,
        l: geometry.l,
        layout: "row-major".into(),
        kind,
        data: bin_name,
    };
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in &values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    let mut out = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut out, &header)?;
    writeln!(out)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldData> {
    let text = fs::read_to_string(path)?;
    let header: FieldHeader =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.layout != "row-major" {
        return Err(Error::Format(format!("unsupported layout {:?}", header.layout)));
    }
    let geometry =
        TorusGeometry::new(header.n, header.l).map_err(|e| Error::Format(e.to_string()))?;
    let bin: PathBuf = path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let bytes = fs::read(&bin)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{} is not a sequence of f64", bin.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    match header.kind {
        FieldKind::Grid => {
            if values.len() != geometry.len() {
                return Err(Error::Format("grid sidecar has the wrong length".into()));
            }
            Ok(FieldData::Grid(geometry, values))
        }
        FieldKind::Spectral => {
            if values.len() != 2 * geometry.len() {
                return Err(Error::Format("spectral sidecar has the wrong length".into()));
            }
            let coeffs = values
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            let f = SpectralField::from_coeffs(geometry, coeffs)
                .map_err(|e| Error::Format(e.to_string()))?;
            Ok(FieldData::Spectral(f))
        }
    }
}
