use pdanet_core::degradation::{degrade, degrade_all, image_config, scan_line_noise, DegradationConfig};
use pdanet_core::metrics::{mse, psnr, quantize};
use pdanet_core::physics::{generate_clear_dataset, SceneConfig};
use pdanet_core::{Extent, Field};

fn corpus() -> Vec<Field> {
    generate_clear_dataset(50, &SceneConfig::desk(), 77).unwrap().into_iter().map(|s| s.image).collect()
}

fn psnr_against(clean: &Field, other: &Field) -> f64 {
    psnr(mse(&quantize(clean), &quantize(other)).unwrap()).unwrap()
}

#[test]
fn row_offsets_are_uniform_by_ks() {
    let rows = 10_000;
    let flat = Field::filled(rows, 3, 0.5, Extent::pixels(rows, 3)).unwrap();
    let amp = 0.1;
    let out = scan_line_noise(&flat, amp, 12);
    // A flat image has unit dynamic range, so offsets are uniform on [-amp, amp].
    let mut u: Vec<f64> = (0..rows).map(|y| (out.get(y, 0) - 0.5 + amp) / (2.0 * amp)).collect();
    for y in 0..rows {
        assert_eq!(out.get(y, 0), out.get(y, 2));
    }
    u.sort_by(f64::total_cmp);
    let n = rows as f64;
    let d = u.iter().enumerate().map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x)).fold(0.0, f64::max);
    // Asymptotic Kolmogorov critical value at the 1% level.
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn default_degradation_lowers_psnr_and_doubling_lowers_it_further() {
    let clean = corpus();
    let cfg = DegradationConfig::default();
    let once = degrade_all(&clean, &cfg).unwrap();
    for (i, (c, d)) in clean.iter().zip(&once).enumerate() {
        let p1 = psnr_against(c, d);
        assert!(p1.is_finite(), "image {i} unchanged");
        let doubled = degrade(c, &image_config(&cfg.scaled(2.0), i as u64)).unwrap();
        let p2 = psnr_against(c, &doubled);
        assert!(p2 <= p1, "image {i}: {p2} > {p1}");
        assert!(d.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn degradation_is_bitwise_reproducible() {
    let clean = corpus();
    let a = degrade_all(&clean[..5], &DegradationConfig::default()).unwrap();
    let b = degrade_all(&clean[..5], &DegradationConfig::default()).unwrap();
    assert_eq!(a, b);
    let c = degrade_all(&clean[..5], &DegradationConfig { seed: 1, ..DegradationConfig::default() }).unwrap();
    assert_ne!(a, c);
}
