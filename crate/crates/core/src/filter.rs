//! Separable filtering on row-major planes.

use crate::scalar::Scalar;

/// How samples outside the plane are synthesised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Mirror about the edge sample, which is not repeated: `d c b | a b c d | c b a`.
    Reflect,
    /// Mirror including the edge sample: `c b a | a b c d | d c b`.
    Symmetric,
    /// Repeat the edge sample.
    Replicate,
}

impl Boundary {
    /// Map a possibly out-of-range index into `0..n`.
    pub fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        if n == 1 {
            return 0;
        }
        match self {
            Boundary::Replicate => i.clamp(0, n - 1) as usize,
            Boundary::Reflect => {
                let period = 2 * (n - 1);
                let m = i.rem_euclid(period);
                (if m < n { m } else { period - m }) as usize
            }
            Boundary::Symmetric => {
                let period = 2 * n;
                let m = i.rem_euclid(period);
                (if m < n { m } else { period - 1 - m }) as usize
            }
        }
    }
}

/// Sampled, unit-sum Gaussian of half-width `radius`.
pub fn gaussian_kernel<T: Scalar>(sigma: f64, radius: usize) -> Vec<T> {
    let raw: Vec<f64> = (-(radius as isize)..=radius as isize).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / total)).collect()
}

/// Correlate every row, then every column, with the odd-length `kernel`; output has the input size.
pub fn separable<T: Scalar>(values: &[T], height: usize, width: usize, kernel: &[T], boundary: Boundary) -> Vec<T> {
    assert_eq!(values.len(), height * width);
    assert!(kernel.len() % 2 == 1, "kernel length must be odd");
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![T::zero(); values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = T::zero();
            for (k, &w) in kernel.iter().enumerate() {
                acc += w * row[boundary.index(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![T::zero(); values.len()];
    for y in 0..height {
        for (k, &w) in kernel.iter().enumerate() {
            let src = boundary.index(y as isize + k as isize - r, height);
            let (o, s) = (&mut out[y * width..(y + 1) * width], &tmp[src * width..(src + 1) * width]);
            for (a, &b) in o.iter_mut().zip(s) {
                *a += w * b;
            }
        }
    }
    out
}

/// Correlation evaluated only where the kernel fits entirely ("valid" mode).
pub fn separable_valid<T: Scalar>(values: &[T], height: usize, width: usize, kernel: &[T]) -> (Vec<T>, usize, usize) {
    let k = kernel.len();
    assert!(height >= k && width >= k);
    let (oh, ow) = (height - k + 1, width - k + 1);
    let mut tmp = vec![T::zero(); height * ow];
    for y in 0..height {
        for x in 0..ow {
            tmp[y * ow + x] = kernel.iter().zip(&values[y * width + x..]).map(|(&w, &v)| w * v).sum();
        }
    }
    let mut out = vec![T::zero(); oh * ow];
    for y in 0..oh {
        for (i, &w) in kernel.iter().enumerate() {
            let s = &tmp[(y + i) * ow..(y + i + 1) * ow];
            for (a, &b) in out[y * ow..(y + 1) * ow].iter_mut().zip(s) {
                *a += w * b;
            }
        }
    }
    (out, oh, ow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_indices() {
        let r: Vec<usize> = (-3..7).map(|i| Boundary::Reflect.index(i, 4)).collect();
        assert_eq!(r, [3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        let s: Vec<usize> = (-3..7).map(|i| Boundary::Symmetric.index(i, 4)).collect();
        assert_eq!(s, [2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(Boundary::Replicate.index(-5, 4), 0);
        assert_eq!(Boundary::Reflect.index(9, 1), 0);
    }

    #[test]
    fn valid_and_padded_agree_in_the_interior() {
        let (h, w) = (9, 12);
        let v: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64).collect();
        let k = gaussian_kernel::<f64>(1.0, 2);
        let full = separable(&v, h, w, &k, Boundary::Reflect);
        let (valid, oh, ow) = separable_valid(&v, h, w, &k);
        for y in 0..oh {
            for x in 0..ow {
                assert!((valid[y * ow + x] - full[(y + 2) * w + x + 2]).abs() < 1e-12);
            }
        }
    }
}
