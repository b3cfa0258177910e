//! Hankel function of the first kind, order zero, for complex arguments in the upper half plane.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use super::constants::EULER_GAMMA;

const SERIES_LIMIT: f64 = 12.0;

/// `(J0(z), Y0(z))` by their ascending power series.
fn series(z: Complex64) -> (Complex64, Complex64) {
    let q = z * z * 0.25;
    let mut term = Complex64::new(1.0, 0.0);
    let mut j0 = term;
    let mut harmonic = 0.0;
    let mut y_sum = Complex64::new(0.0, 0.0);
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        y_sum -= term * harmonic;
        if term.norm() * harmonic < 1e-17 * j0.norm().max(1e-300) && term.norm() < 1e-17 {
            break;
        }
    }
    let y0 = (2.0 / PI) * (((z * 0.5).ln() + EULER_GAMMA) * j0 + y_sum);
    (j0, y0)
}

/// Large-argument expansion, truncated at its smallest term.
fn asymptotic(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    let ratio = i / z;
    let mut a = Complex64::new(1.0, 0.0);
    let mut sum = a;
    let mut last = f64::INFINITY;
    for k in 1..64 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = a * ratio * (-(odd * odd) / (8.0 * kf));
        let mag = next.norm();
        if mag >= last || mag < 1e-18 * sum.norm() {
            if mag < last {
                sum += next;
            }
            break;
        }
        last = mag;
        a = next;
        sum += a;
    }
    (2.0 / (PI * z)).sqrt() * (i * (z - FRAC_PI_4)).exp() * sum
}

/// `H0^(1)(z) = J0(z) + i Y0(z)`; requires `Re z > 0`.
pub fn hankel1_0(z: Complex64) -> Complex64 {
    debug_assert!(z.re > 0.0, "principal branch expects Re z > 0");
    if z.norm() < SERIES_LIMIT {
        let (j0, y0) = series(z);
        j0 + Complex64::i() * y0
    } else {
        asymptotic(z)
    }
}
