use std::f64::consts::PI;

use pdanet_core::physics::{
    fermi_wavevector, ldos_at, ldos_map, sample_scene, ImpuritySet, RasterSpec, SceneConfig, SurfaceModel,
};
use pdanet_core::rng::rng_for;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// `k = sqrt(2 m (mu + omega)) / hbar` from CODATA 2018 SI values, in nm^-1.
fn codata_wavevector(m_eff: f64, energy_ev: f64) -> f64 {
    let hbar = 1.054_571_817e-34;
    let me = 9.109_383_701_5e-31;
    let ev = 1.602_176_634e-19;
    (2.0 * m_eff * me * energy_ev * ev).sqrt() / hbar * 1e-9
}

/// Dominant spatial angular frequency of `r * (A(r) - rho0)`, linearly detrended, along a ray
/// from the impurity.
fn radial_peak_frequency(model: &SurfaceModel) -> f64 {
    let imps = ImpuritySet::new(vec![(0.0, 0.0)], vec![2.0]).unwrap();
    let (r0, len, n) = (2.0, 40.0, 4096);
    let dr = len / n as f64;
    let pts: Vec<(f64, f64)> = (0..n).map(|i| (r0 + i as f64 * dr, 0.0)).collect();
    let a = ldos_at(&pts, &imps, model, 0.25).unwrap();
    let rho0 = ldos_at(&[(0.0, 0.0)], &ImpuritySet::empty(), model, 0.25).unwrap()[0];
    let weighted: Vec<f64> = a.iter().zip(&pts).map(|(v, p)| (v - rho0) * p.0).collect();
    let xm = (n - 1) as f64 / 2.0;
    let mean = weighted.iter().sum::<f64>() / n as f64;
    let slope = weighted.iter().enumerate().map(|(i, w)| (i as f64 - xm) * (w - mean)).sum::<f64>()
        / (0..n).map(|i| (i as f64 - xm).powi(2)).sum::<f64>();
    let pad = 1 << 16;
    let mut buf = vec![Complex64::new(0.0, 0.0); pad];
    for (i, w) in weighted.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        buf[i] = Complex64::new((w - mean - slope * (i as f64 - xm)) * hann, 0.0);
    }
    FftPlanner::new().plan_fft_forward(pad).process(&mut buf);
    let peak = (1..pad / 2).max_by(|&i, &j| buf[i].norm().total_cmp(&buf[j].norm())).unwrap();
    2.0 * PI * peak as f64 / (pad as f64 * dr)
}

#[test]
fn wavevector_matches_codata_hand_value() {
    let model = SurfaceModel { omega: 0.0, ..SurfaceModel::default() };
    let k = fermi_wavevector(&model).unwrap();
    let oracle = codata_wavevector(0.38, 0.45);
    assert!((k - oracle).abs() / oracle < 1e-6, "{k} vs {oracle}");
    assert!((k - 2.12).abs() < 0.01);
}

#[test]
fn friedel_oscillations_have_frequency_two_k() {
    let model = SurfaceModel { omega: 0.0, ..SurfaceModel::default() };
    let q = radial_peak_frequency(&model);
    let two_k = 2.0 * codata_wavevector(0.38, 0.45);
    assert!((q - two_k).abs() / two_k < 0.05, "{q} vs {two_k}");
    assert!((q - 2.0 * 2.12).abs() / (2.0 * 2.12) < 0.05);
}

#[test]
fn broadening_damps_the_rings() {
    let imps = ImpuritySet::new(vec![(0.0, 0.0)], vec![2.0]).unwrap();
    let pts: Vec<(f64, f64)> = (0..400).map(|i| (3.0 + i as f64 * 0.0125, 0.0)).collect();
    let amplitude = |eta: f64| {
        let a = ldos_at(&pts, &imps, &SurfaceModel { eta, ..SurfaceModel::default() }, 0.25).unwrap();
        a.iter().cloned().fold(f64::MIN, f64::max) - a.iter().cloned().fold(f64::MAX, f64::min)
    };
    let amps: Vec<f64> = [0.001, 0.005, 0.02, 0.05, 0.1].iter().map(|&e| amplitude(e)).collect();
    assert!(amps.windows(2).all(|w| w[1] < w[0]), "{amps:?}");
}

#[test]
fn clean_gas_is_flat_at_the_band_density() {
    let model = SurfaceModel { eta: 0.001, ..SurfaceModel::default() };
    let map = ldos_map(&RasterSpec::square(48, 20.0), &ImpuritySet::empty(), &model, 0.25).unwrap().field;
    let hbar2_over_2me_ev_nm2 = 1.054_571_817e-34f64.powi(2) / (2.0 * 9.109_383_701_5e-31) / 1.602_176_634e-19 * 1e18;
    let rho0 = 0.38 / (4.0 * PI * hbar2_over_2me_ev_nm2);
    let mean = map.mean();
    let std = (map.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / map.values().len() as f64).sqrt();
    assert!((mean - rho0).abs() / rho0 < 0.02);
    assert!(std / mean < 1e-6);
    assert!((rho0 - 0.79).abs() < 0.01);
}

#[test]
fn reflected_scene_gives_reflected_map() {
    let cfg = SceneConfig { grid: RasterSpec::square(40, 20.0), ..SceneConfig::default() };
    let imps = sample_scene(&cfg, &mut rng_for(9, "mirror", 0));
    let flipped = ImpuritySet::new(imps.positions.iter().map(|&(x, y)| (20.0 - x, y)).collect(), imps.strengths.clone()).unwrap();
    let a = ldos_map(&cfg.grid, &imps, &cfg.model, cfg.cutoff_nm).unwrap().field;
    let b = ldos_map(&cfg.grid, &flipped, &cfg.model, cfg.cutoff_nm).unwrap().field;
    let worst = (0..40).flat_map(|y| (0..40).map(move |x| (y, x))).map(|(y, x)| (a.get(y, x) - b.get(y, 39 - x)).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10 * a.max(), "{worst}");
}

#[test]
fn impurity_counts_are_uniform_over_the_configured_range() {
    let cfg = SceneConfig::default();
    let (lo, hi) = cfg.impurity_count;
    let mut counts = vec![0usize; hi - lo + 1];
    let mut rng = rng_for(31, "chi-square", 0);
    for _ in 0..1000 {
        counts[sample_scene(&cfg, &mut rng).len() - lo] += 1;
    }
    let expected = 1000.0 / counts.len() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 9 degrees of freedom.
    assert_eq!(counts.len(), 10);
    assert!(chi2 < 21.666, "chi2 {chi2}, counts {counts:?}");
}
