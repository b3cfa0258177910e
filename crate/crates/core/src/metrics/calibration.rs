//! Seeded textures with natural-image second-order statistics, for checking that the
//! no-reference metrics respond to distortions the way they were trained to.
//!
//! The no-reference models were fitted to photographs. Clean simulated LDOS maps are far
//! smoother than photographs, so their scores are not a meaningful correctness check; these
//! textures are.

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};
use crate::field::{Extent, ScalarField2D};
use crate::rng::rng_for;

/// Amplitude-spectrum exponent of the default textures (`|F(f)| ~ f^-slope`).
pub const NATURAL_SLOPE: f64 = 1.3;

fn fft_2d(buf: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    buf.chunks_mut(n).for_each(|row| fft.process(row));
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    for y in 0..n {
        for x in 0..n {
            t[x * n + y] = buf[y * n + x];
        }
    }
    t.chunks_mut(n).for_each(|row| fft.process(row));
    for y in 0..n {
        for x in 0..n {
            buf[y * n + x] = t[x * n + y];
        }
    }
}

/// `size x size` Gaussian field with a power-law spectrum, mapped so its 1st and 99th
/// percentiles land on 0.1 and 0.9 (clipped to [0, 1]).
pub fn fractal_texture(size: usize, slope: f64, seed: u64) -> Result<ScalarField2D<f64>> {
    if size < 8 || !(slope.is_finite() && slope >= 0.0) {
        return Err(CoreError::Validation(format!("fractal texture needs size >= 8 and slope >= 0, got {size}, {slope}")));
    }
    let mut rng = rng_for(seed, "fractal-texture", 0);
    let mut buf: Vec<Complex64> = (0..size * size).map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    fft_2d(&mut buf, size, false);
    let freq = |i: usize| i.min(size - i) as f64;
    for y in 0..size {
        for x in 0..size {
            let r = freq(y).hypot(freq(x));
            buf[y * size + x] *= if r == 0.0 { 0.0 } else { r.powf(-slope) };
        }
    }
    fft_2d(&mut buf, size, true);
    let v: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    let n = v.len();
    let (lo, hi) = (sorted[n / 100], sorted[n * 99 / 100]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let values = v.iter().map(|x| (0.1 + 0.8 * (x - lo) / span).clamp(0.0, 1.0)).collect();
    ScalarField2D::new(size, size, values, Extent::pixels(size, size))
}

/// `count` textures at [`NATURAL_SLOPE`], one independent stream per image.
pub fn calibration_corpus(count: usize, size: usize, seed: u64) -> Result<Vec<ScalarField2D<f64>>> {
    (0..count).map(|i| fractal_texture(size, NATURAL_SLOPE, crate::rng::derive_seed(seed, 0, i as u64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_seeded_and_ranged() {
        let a = fractal_texture(32, 1.3, 4).unwrap();
        assert_eq!(a, fractal_texture(32, 1.3, 4).unwrap());
        assert_ne!(a, fractal_texture(32, 1.3, 5).unwrap());
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(fractal_texture(4, 1.0, 0).is_err());
    }

    #[test]
    fn steeper_spectrum_is_smoother() {
        let roughness = |f: &ScalarField2D<f64>| {
            let (h, w) = f.shape();
            (0..h).flat_map(|y| (1..w).map(move |x| (y, x))).map(|(y, x)| (f.get(y, x) - f.get(y, x - 1)).abs()).sum::<f64>()
        };
        assert!(roughness(&fractal_texture(64, 2.0, 1).unwrap()) < roughness(&fractal_texture(64, 0.5, 1).unwrap()));
    }
}
