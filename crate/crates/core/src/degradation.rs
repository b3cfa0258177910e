//! Synthetic STM acquisition artefacts: thermal drift, tip blur, scan-line jumps and
//! electronic noise, applied in that order.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::ScalarField2D;
use crate::filter::{gaussian_kernel, separable, Boundary};
use crate::rng::{derive_seed, rng_for, stream_id};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    /// Gaussian blur standard deviation, pixels.
    pub blur_sigma: f64,
    /// White-noise standard deviation as a fraction of the image's dynamic range.
    pub noise_sigma: f64,
    /// Per-row offsets are uniform in `[-line_amp, line_amp]` times the dynamic range.
    pub line_amp: f64,
    /// Largest horizontal displacement (pixels) accumulated from the first row to the last.
    pub drift_shear: f64,
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig { blur_sigma: 1.5, noise_sigma: 0.03, line_amp: 0.05, drift_shear: 2.0, seed: 0 }
    }
}

impl DegradationConfig {
    /// All amplitudes zero: `degrade` returns its input.
    pub fn identity() -> Self {
        DegradationConfig { blur_sigma: 0.0, noise_sigma: 0.0, line_amp: 0.0, drift_shear: 0.0, seed: 0 }
    }

    /// Stand-in for real instrument data: stronger blur and line noise, more drift.
    ///
    /// Used to build a pseudo-experimental domain when no measured images are supplied, so the
    /// domain-adaptation branch sees an actual distribution shift.
    pub fn pseudo_experimental() -> Self {
        DegradationConfig { blur_sigma: 2.0, noise_sigma: 0.05, line_amp: 0.08, drift_shear: 3.0, seed: 0x5EED }
    }

    /// Every amplitude multiplied by `factor`; the seed is kept.
    pub fn scaled(&self, factor: f64) -> Self {
        DegradationConfig {
            blur_sigma: self.blur_sigma * factor,
            noise_sigma: self.noise_sigma * factor,
            line_amp: self.line_amp * factor,
            drift_shear: self.drift_shear * factor,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("degrade.blur_sigma", self.blur_sigma),
            ("degrade.noise_sigma", self.noise_sigma),
            ("degrade.line_amp", self.line_amp),
            ("degrade.drift_shear", self.drift_shear),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoreError::Config(format!("{key} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn dynamic_range<T: Scalar>(img: &ScalarField2D<T>) -> f64 {
    let r = (img.max() - img.min()).as_f64();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Separable Gaussian blur with reflect padding, kernel truncated at 4 sigma.
pub fn gaussian_blur<T: Scalar>(img: &ScalarField2D<T>, sigma: f64) -> Result<ScalarField2D<T>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CoreError::Validation(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let kernel = gaussian_kernel::<T>(sigma, radius);
    let (h, w) = img.shape();
    Ok(img.with_values(separable(img.values(), h, w, &kernel, Boundary::Reflect)))
}

/// Adds one offset, uniform in `[-amp, amp]` times the dynamic range, to every pixel of a row.
pub fn scan_line_noise<T: Scalar>(img: &ScalarField2D<T>, amp: f64, seed: u64) -> ScalarField2D<T> {
    if amp == 0.0 {
        return img.clone();
    }
    let mut rng = rng_for(seed, "scan-lines", 0);
    let scale = amp * dynamic_range(img);
    let w = img.width();
    let mut out = img.values().to_vec();
    for row in out.chunks_mut(w) {
        let off = T::lit(rng.random_range(-1.0..=1.0) * scale);
        row.iter_mut().for_each(|v| *v += off);
    }
    img.with_values(out)
}

/// Linear horizontal shear: row `y` moves by `shift * y / (H - 1)` pixels, linearly
/// interpolated, reflect padding at the sides.
pub fn shear<T: Scalar>(img: &ScalarField2D<T>, shift: f64) -> ScalarField2D<T> {
    if shift == 0.0 {
        return img.clone();
    }
    let (h, w) = img.shape();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let s = shift * y as f64 / (h - 1) as f64;
        let row = img.row(y);
        for x in 0..w {
            let src = x as f64 - s;
            let x0 = src.floor();
            let f = T::lit(src - x0);
            let a = row[Boundary::Reflect.index(x0 as isize, w)];
            let b = row[Boundary::Reflect.index(x0 as isize + 1, w)];
            out.push(a + (b - a) * f);
        }
    }
    img.with_values(out)
}

/// Drift, blur, scan-line offsets, white noise, then clip to [0, 1].
///
/// Deterministic in `(img, cfg)`; `cfg.seed` selects the random draws.
pub fn degrade<T: Scalar>(img: &ScalarField2D<T>, cfg: &DegradationConfig) -> Result<ScalarField2D<T>> {
    cfg.validate()?;
    if cfg.blur_sigma == 0.0 && cfg.noise_sigma == 0.0 && cfg.line_amp == 0.0 && cfg.drift_shear == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = rng_for(cfg.seed, "drift", 0);
    let drift = if cfg.drift_shear > 0.0 { rng.random_range(-cfg.drift_shear..=cfg.drift_shear) } else { 0.0 };
    let range = dynamic_range(img);
    let sheared = shear(img, drift);
    let blurred = gaussian_blur(&sheared, cfg.blur_sigma)?;
    let lined = scan_line_noise(&blurred, cfg.line_amp, cfg.seed);
    let mut values = lined.into_values();
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma * range).map_err(|e| CoreError::Config(e.to_string()))?;
        let mut rng = rng_for(cfg.seed, "white-noise", 0);
        values.iter_mut().for_each(|v| *v += T::lit(normal.sample(&mut rng)));
    }
    values.iter_mut().for_each(|v| *v = v.max(T::zero()).min(T::one()));
    ScalarField2D::new(img.height(), img.width(), values, img.extent())
}

/// Degrade a whole set; image `i` draws from the seed `derive(cfg.seed, i)`.
pub fn degrade_all<T: Scalar>(images: &[ScalarField2D<T>], cfg: &DegradationConfig) -> Result<Vec<ScalarField2D<T>>> {
    cfg.validate()?;
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| degrade(img, &image_config(cfg, i as u64)))
        .collect()
}

/// Per-image configuration used by [`degrade_all`].
pub fn image_config(cfg: &DegradationConfig, index: u64) -> DegradationConfig {
    DegradationConfig { seed: derive_seed(cfg.seed, stream_id("degrade"), index), ..*cfg }
}
