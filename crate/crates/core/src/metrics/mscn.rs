use crate::filter::{gaussian_kernel, separable, Boundary};

/// Mean-subtracted contrast-normalised coefficients `(I - mu) / (sigma + c)` with a 7x7
/// Gaussian (sigma 7/6) local window and replicated borders.
pub fn mscn(values: &[f64], height: usize, width: usize, c: f64) -> Vec<f64> {
    let k = gaussian_kernel::<f64>(7.0 / 6.0, 3);
    let mu = separable(values, height, width, &k, Boundary::Replicate);
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let m2 = separable(&sq, height, width, &k, Boundary::Replicate);
    values
        .iter()
        .zip(mu.iter().zip(&m2))
        .map(|(&v, (&m, &s))| (v - m) / ((s - m * m).abs().sqrt() + c))
        .collect()
}
