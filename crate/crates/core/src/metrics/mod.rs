//! Full-reference (MSE, PSNR, SSIM) and no-reference (PIQE, BRISQUE) image quality.
//!
//! All metrics work on the 8-bit scale: images in [0, 1] are quantised with [`quantize`] first.

mod brisque;
mod calibration;
mod mscn;
mod piqe;
mod report;

pub use brisque::{aggd_fit, brisque, brisque_features, ggd_fit, AggdParams, BrisqueModel, BRISQUE_FEATURES};
pub use calibration::{calibration_corpus, fractal_texture, NATURAL_SLOPE};
pub use mscn::mscn;
pub use piqe::{piqe, PiqeConfig};
pub use report::{evaluate_suite, ImageMetrics, MetricReport, MetricsConfig, ReportKind, Summary};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::ScalarField2D;
use crate::filter::{gaussian_kernel, separable_valid};
use crate::scalar::Scalar;

pub const PIXEL_MAX: f64 = 255.0;

/// `[0, 1] -> {0, 1, ..., 255}` by rounding, as `f64`.
pub fn quantize<T: Scalar>(img: &ScalarField2D<T>) -> ScalarField2D<f64> {
    let v = img.values().iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * PIXEL_MAX).round()).collect();
    ScalarField2D::new(img.height(), img.width(), v, img.extent()).expect("quantised values are finite")
}

fn same_shape<T: Scalar>(a: &ScalarField2D<T>, b: &ScalarField2D<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CoreError::Validation(format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared difference. Inputs are expected on the 0-255 scale.
pub fn mse<T: Scalar>(a: &ScalarField2D<T>, b: &ScalarField2D<T>) -> Result<f64> {
    same_shape(a, b)?;
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    Ok(s / a.values().len() as f64)
}

/// `10 log10(255^2 / mse)`; `mse = 0` gives `+inf`.
pub fn psnr(mse: f64) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(CoreError::Domain(format!("mse must be >= 0, got {mse}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PIXEL_MAX * PIXEL_MAX / mse).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    /// Odd window side.
    pub window: usize,
    pub sigma: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { c1: (0.01 * PIXEL_MAX).powi(2), c2: (0.03 * PIXEL_MAX).powi(2), window: 11, sigma: 1.5 }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(CoreError::Config("metrics.ssim.c1 and c2 must be > 0".into()));
        }
        if self.window % 2 == 0 || self.window < 3 || !(self.sigma > 0.0) {
            return Err(CoreError::Config("metrics.ssim.window must be odd >= 3 and sigma > 0".into()));
        }
        Ok(())
    }
}

/// Mean SSIM over every position where the Gaussian window fits inside the image.
pub fn ssim<T: Scalar>(a: &ScalarField2D<T>, b: &ScalarField2D<T>, cfg: &SsimConfig) -> Result<f64> {
    same_shape(a, b)?;
    cfg.validate()?;
    let (h, w) = a.shape();
    if h < cfg.window || w < cfg.window {
        return Err(CoreError::Validation(format!("image {h}x{w} is smaller than the {0}x{0} SSIM window", cfg.window)));
    }
    let k = gaussian_kernel::<f64>(cfg.sigma, cfg.window / 2);
    let x: Vec<f64> = a.values().iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = b.values().iter().map(|v| v.as_f64()).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let f = |v: &[f64]| separable_valid(v, h, w, &k).0;
    let (mx, my, sxx, syy, sxy) = (f(&x), f(&y), f(&xx), f(&yy), f(&xy));
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + cfg.c1) * (2.0 * cxy + cfg.c2)) / ((ux * ux + uy * uy + cfg.c1) * (vx + vy + cfg.c2));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Extent;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ScalarField2D<f64> {
        ScalarField2D::from_fn(h, w, Extent::pixels(h, w), f).unwrap()
    }

    #[test]
    fn mse_hand_values() {
        let a = img(2, 2, |_, _| 10.0);
        let b = img(2, 2, |_, _| 11.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        assert!(mse(&a, &img(2, 3, |_, _| 0.0)).is_err());
    }

    #[test]
    fn psnr_closed_form() {
        assert!((psnr(1.0).unwrap() - 48.130_803_608_679_1).abs() < 1e-9);
        assert!(psnr(255.0 * 255.0).unwrap().abs() < 1e-12);
        assert_eq!(psnr(0.0).unwrap(), f64::INFINITY);
        assert!(psnr(-1.0).is_err());
        assert!(psnr(2.0).unwrap() < psnr(1.0).unwrap());
    }

    #[test]
    fn ssim_identity_and_constant_images() {
        let cfg = SsimConfig::default();
        let a = img(16, 16, |y, x| ((y * 7 + x * 3) % 17) as f64 * 10.0);
        assert!((ssim(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let (p, q) = (100.0, 130.0);
        let s = ssim(&img(12, 12, |_, _| p), &img(12, 12, |_, _| q), &cfg).unwrap();
        let expect = (2.0 * p * q + cfg.c1) / (p * p + q * q + cfg.c1);
        assert!((s - expect).abs() < 1e-9, "{s} vs {expect}");
        assert!(ssim(&img(8, 8, |_, _| 0.0), &img(8, 8, |_, _| 0.0), &cfg).is_err());
    }

    #[test]
    fn quantisation_rounds_to_integers() {
        let q = quantize(&img(2, 2, |y, x| (y * 2 + x) as f64 / 3.0));
        assert_eq!(q.values(), &[0.0, 85.0, 170.0, 255.0]);
    }
}
