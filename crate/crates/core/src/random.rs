//! Seeded random band-limited fields.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::singularity::gowdy::CircleField;
use crate::spectral::{SpectralField, TorusGeometry};

/// Band limit used when none is given.
pub const DEFAULT_BAND: i64 = 4;

/// Random real field with modes `|k|_inf <= band`, amplitudes
/// `~ 1 / (1 + |k|^2)` and uniform random phases. The spatial mean is drawn
/// only if `with_mean` is set.
pub fn band_limited(
    geometry: TorusGeometry,
    band: i64,
    with_mean: bool,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralField> {
    if band < 0 || band > geometry.kmax() {
        return Err(Error::Domain(format!(
            "band {band} outside the resolved range 0..={}",
            geometry.kmax()
        )));
    }
    let mut f = SpectralField::zeros(geometry);
    if with_mean {
        f.set_pair([0, 0, 0], Complex64::new(rng.random_range(-1.0..1.0), 0.0))?;
    }
    // visit each +/- pair once, in a fixed order
    for kx in 0..=band {
        for ky in -band..=band {
            for kz in -band..=band {
                let k = [kx, ky, kz];
                let positive = kx > 0 || (kx == 0 && (ky > 0 || (ky == 0 && kz > 0)));
                if !positive {
                    continue;
                }
                let k2 = (kx * kx + ky * ky + kz * kz) as f64;
                let amp = rng.random_range(0.5..1.0) / (1.0 + k2);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                f.set_pair(k, Complex64::from_polar(amp, phase))?;
            }
        }
    }
    Ok(f)
}

/// Random real function on the circle of length `l`, `n` samples, modes
/// `|m| <= band` with the same amplitude law as [`band_limited`]. The mean is
/// drawn from `[-1, 1)`, so the field is typically sign-indefinite.
pub fn band_limited_circle(n: usize, l: f64, band: i64, rng: &mut ChaCha8Rng) -> Result<CircleField> {
    let mut f = CircleField::zeros(n, l)?;
    if band < 0 || band > f.kmax() {
        return Err(Error::Domain(format!("band {band} outside the resolved range 0..={}", f.kmax())));
    }
    f.set_pair(0, Complex64::new(rng.random_range(-1.0..1.0), 0.0))?;
    for m in 1..=band {
        let amp = rng.random_range(0.5..1.0) / (1.0 + (m * m) as f64);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        f.set_pair(m, Complex64::from_polar(amp, phase))?;
    }
    Ok(f)
}

/// Seeded generator shared by all random data in an experiment.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
