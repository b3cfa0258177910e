//! Blind/referenceless spatial quality evaluator.
//!
//! 18 features per scale (GGD fit of the MSCN map, AGGD fits of its four neighbour products)
//! at full and half resolution, scaled to [-1, 1] and fed to an RBF support-vector regressor.
//!
//! Model file (little-endian): `b"BRSQ"`, `u32` version 1, `u32` feature count, `u32` support
//! vector count, `f64` gamma, `f64` rho, one `(f64 min, f64 max)` range per feature, then per
//! support vector its `f64` coefficient followed by the feature values. The bundled model is
//! the LIVE-trained regressor distributed with the reference implementation.

use std::path::Path;

use libm::tgamma;

use super::mscn::mscn;
use super::quantize;
use crate::error::{CoreError, Result};
use crate::field::ScalarField2D;
use crate::filter::Boundary;
use crate::scalar::Scalar;

pub const BRISQUE_FEATURES: usize = 36;
const MAGIC: &[u8; 4] = b"BRSQ";
const BUNDLED: &[u8] = include_bytes!("../../models/brisque_live.bin");

/// Shape grid searched by the moment-matching fits.
fn shape_grid() -> impl Iterator<Item = f64> {
    (0..=9800).map(|i| 0.2 + i as f64 * 0.001)
}

/// Generalised Gaussian fit by moment matching: `(shape, variance)`.
pub fn ggd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sigma_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let e = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if !(sigma_sq > 0.0 && e > 0.0) {
        // Degenerate (constant) input: report the sharpest shape on the grid and zero spread.
        return (10.0, 0.0);
    }
    let rho = sigma_sq / (e * e);
    let best = shape_grid()
        .map(|g| (g, (rho - tgamma(1.0 / g) * tgamma(3.0 / g) / tgamma(2.0 / g).powi(2)).abs()))
        .fold((0.2, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    (best.0, sigma_sq)
}

/// Asymmetric generalised Gaussian parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggdParams {
    pub alpha: f64,
    pub mean: f64,
    pub left_var: f64,
    pub right_var: f64,
}

/// Moment-matching AGGD fit.
pub fn aggd_fit(x: &[f64]) -> AggdParams {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in x {
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    let left = if ln > 0 { (ls / ln as f64).sqrt() } else { 0.0 };
    let right = if rn > 0 { (rs / rn as f64).sqrt() } else { 0.0 };
    if !(left > 0.0 && right > 0.0 && sq_sum > 0.0) {
        return AggdParams { alpha: 10.0, mean: 0.0, left_var: left * left, right_var: right * right };
    }
    let n = x.len() as f64;
    let gamma_hat = left / right;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0) / (gamma_hat * gamma_hat + 1.0).powi(2);
    let alpha = shape_grid()
        .map(|g| (g, (tgamma(2.0 / g).powi(2) / (tgamma(1.0 / g) * tgamma(3.0 / g)) - r_norm).abs()))
        .fold((0.2, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
        .0;
    let scale = (tgamma(1.0 / alpha) / tgamma(3.0 / alpha)).sqrt();
    let mean = (right * scale - left * scale) * tgamma(2.0 / alpha) / tgamma(1.0 / alpha);
    AggdParams { alpha, mean, left_var: left * left, right_var: right * right }
}

fn cubic(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.5 * a.powi(3) - 2.5 * a * a + 1.0
    } else if a <= 2.0 {
        -0.5 * a.powi(3) + 2.5 * a * a - 4.0 * a + 2.0
    } else {
        0.0
    }
}

/// Weights/indices of an antialiased bicubic 2x reduction along one axis.
fn half_taps(n_in: usize) -> Vec<Vec<(usize, f64)>> {
    let n_out = n_in.div_ceil(2);
    let scale = 0.5;
    (1..=n_out)
        .map(|i| {
            let u = i as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (u - 4.0).floor() as isize;
            let mut taps: Vec<(usize, f64)> = (0..10)
                .map(|p| {
                    let j = left + p;
                    (Boundary::Symmetric.index(j - 1, n_in), scale * cubic(scale * (u - j as f64)))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Bicubic half-size reduction with antialiasing.
fn downsample(values: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (tx, ty) = (half_taps(w), half_taps(h));
    let ow = tx.len();
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for (x, taps) in tx.iter().enumerate() {
            rows[y * ow + x] = taps.iter().map(|&(j, wt)| wt * values[y * w + j]).sum();
        }
    }
    let oh = ty.len();
    let mut out = vec![0.0; oh * ow];
    for (y, taps) in ty.iter().enumerate() {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().map(|&(j, wt)| wt * rows[j * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

fn scale_features(values: &[f64], h: usize, w: usize, out: &mut Vec<f64>) {
    let m = mscn(values, h, w, 1.0);
    let (alpha, var) = ggd_fit(&m);
    out.extend([alpha, var]);
    // Neighbour products with circular shifts: right, down, down-right, up-right.
    for (dy, dx) in [(0isize, 1isize), (1, 0), (1, 1), (-1, 1)] {
        let mut prod = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
                let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
                prod.push(m[y * w + x] * m[sy * w + sx]);
            }
        }
        let p = aggd_fit(&prod);
        out.extend([p.alpha, p.mean, p.left_var, p.right_var]);
    }
}

/// The 36-element feature vector of an image with values in [0, 1].
pub fn brisque_features<T: Scalar>(img: &ScalarField2D<T>) -> Result<Vec<f64>> {
    let (h, w) = img.shape();
    if h < 8 || w < 8 {
        return Err(CoreError::Validation(format!("BRISQUE needs at least 8x8 pixels, got {h}x{w}")));
    }
    let q = quantize(img);
    let mut f = Vec::with_capacity(BRISQUE_FEATURES);
    scale_features(q.values(), h, w, &mut f);
    let (d, dh, dw) = downsample(q.values(), h, w);
    scale_features(&d, dh, dw, &mut f);
    Ok(f)
}

/// RBF epsilon-SVR with per-feature min/max scaling to [-1, 1].
#[derive(Clone, Debug)]
pub struct BrisqueModel {
    pub gamma: f64,
    pub rho: f64,
    pub ranges: Vec<(f64, f64)>,
    pub coefs: Vec<f64>,
    /// Support vectors, `coefs.len() x ranges.len()` row-major.
    pub support: Vec<f64>,
}

impl BrisqueModel {
    /// The LIVE-trained model compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_bytes(BUNDLED).expect("bundled BRISQUE model is well formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::Config(format!("BRISQUE model {}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| CoreError::Config(format!("BRISQUE model {}: {e}", path.display())))
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let bad = |m: &str| CoreError::Format(m.to_string());
        if b.len() < 32 || &b[..4] != MAGIC {
            return Err(bad("missing BRSQ header"));
        }
        let u = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap()) as usize;
        let f = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let (version, nf, nsv) = (u(4), u(8), u(12));
        if version != 1 {
            return Err(bad(&format!("unsupported model version {version}")));
        }
        if nf != BRISQUE_FEATURES {
            return Err(bad(&format!("model has {nf} features, expected {BRISQUE_FEATURES}")));
        }
        let need = 32 + nf * 16 + nsv * (nf + 1) * 8;
        if b.len() != need {
            return Err(bad(&format!("model is {} bytes, header implies {need}", b.len())));
        }
        let (gamma, rho) = (f(16), f(24));
        let ranges = (0..nf).map(|i| (f(32 + 16 * i), f(40 + 16 * i))).collect();
        let base = 32 + nf * 16;
        let mut coefs = Vec::with_capacity(nsv);
        let mut support = Vec::with_capacity(nsv * nf);
        for s in 0..nsv {
            let o = base + s * (nf + 1) * 8;
            coefs.push(f(o));
            support.extend((0..nf).map(|i| f(o + 8 + 8 * i)));
        }
        let m = BrisqueModel { gamma, rho, ranges, coefs, support };
        if !m.gamma.is_finite() || !m.rho.is_finite() || m.support.iter().chain(&m.coefs).any(|v| !v.is_finite()) {
            return Err(bad("non-finite model parameters"));
        }
        Ok(m)
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        let nf = self.ranges.len();
        let scaled: Vec<f64> = features.iter().zip(&self.ranges).map(|(&x, &(lo, hi))| -1.0 + 2.0 * (x - lo) / (hi - lo)).collect();
        let mut s = 0.0;
        for (c, sv) in self.coefs.iter().zip(self.support.chunks_exact(nf)) {
            let d2: f64 = sv.iter().zip(&scaled).map(|(a, b)| (a - b).powi(2)).sum();
            s += c * (-self.gamma * d2).exp();
        }
        s - self.rho
    }
}

/// BRISQUE score; lower is better. Not clipped.
pub fn brisque<T: Scalar>(img: &ScalarField2D<T>, model: &BrisqueModel) -> Result<f64> {
    Ok(model.predict(&brisque_features(img)?))
}
