use pdanet_core::rng::rng_for;
use pdanet_nn::objectives::{
    adv_discriminator_loss, adv_generator_loss, cycle_loss, fa_generator_loss, feature_alignment_loss, total_losses,
};
use pdanet_nn::{GenMode, LossReport, LossWeights};
use rand::seq::SliceRandom;
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() < tol, "{a} vs {b}");
}

/// Naive logistic, fine for the moderate logits used here.
fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, "objective-test", 0);
    (0..len).map(|_| rng.random_range(-3.0..3.0)).collect()
}

#[test]
fn hand_computed_values() {
    close(adv_discriminator_loss(&[2.0], &[-1.0]).unwrap(), -0.4402, 1e-4);
    close(adv_generator_loss(&[0.3], GenMode::Saturating).unwrap(), -0.8544, 1e-4);
    close(feature_alignment_loss(&[1.0], &[1.0]).unwrap(), -1.6265, 1e-4);
    let zeros = [0.0; 9];
    close(adv_discriminator_loss(&zeros, &zeros).unwrap(), -1.3863, 1e-4);
    close(feature_alignment_loss(&zeros, &zeros).unwrap(), -1.3863, 1e-4);
    close(adv_generator_loss(&zeros, GenMode::Saturating).unwrap(), -0.6931, 1e-4);
    close(adv_generator_loss(&zeros, GenMode::NonSaturating).unwrap(), 0.6931, 1e-4);
}

#[test]
fn adversarial_losses_match_naive_logistic_formulas() {
    let (r, f) = (random(40, 1), random(40, 2));
    let mean = |v: &[f64], g: &dyn Fn(f64) -> f64| v.iter().map(|&x| g(x)).sum::<f64>() / v.len() as f64;
    let disc = mean(&r, &|x| sig(x).ln()) + mean(&f, &|x| (1.0 - sig(x)).ln());
    close(adv_discriminator_loss(&r, &f).unwrap(), disc, 1e-12);
    close(adv_generator_loss(&f, GenMode::Saturating).unwrap(), mean(&f, &|x| (1.0 - sig(x)).ln()), 1e-12);
    close(adv_generator_loss(&f, GenMode::NonSaturating).unwrap(), -mean(&f, &|x| sig(x).ln()), 1e-12);
    let swapped = -(mean(&f, &|x| sig(x).ln()) + mean(&r, &|x| (1.0 - sig(x)).ln()));
    close(fa_generator_loss(&r, &f, GenMode::NonSaturating).unwrap(), swapped, 1e-12);
    close(fa_generator_loss(&r, &f, GenMode::Saturating).unwrap(), feature_alignment_loss(&r, &f).unwrap(), 1e-15);
}

#[test]
fn saturating_generator_loss_is_the_fake_half_of_the_discriminator_loss() {
    let (r, f) = (random(25, 3), random(25, 4));
    // A fake logit of -60 contributes below 1e-26, leaving the real half.
    let real_half = adv_discriminator_loss(&r, &[-60.0]).unwrap();
    let fake_half = adv_discriminator_loss(&r, &f).unwrap() - real_half;
    close(adv_generator_loss(&f, GenMode::Saturating).unwrap(), fake_half, 1e-12);
}

#[test]
fn extreme_logits_stay_finite() {
    for x in [-1e4f64, -80.0, 80.0, 1e4] {
        assert!(adv_discriminator_loss(&[x], &[-x]).unwrap().is_finite());
        assert!(adv_generator_loss(&[x], GenMode::Saturating).unwrap().is_finite());
        assert!(adv_generator_loss(&[x], GenMode::NonSaturating).unwrap().is_finite());
    }
    close(adv_discriminator_loss(&[1e4], &[-1e4]).unwrap(), 0.0, 1e-12);
}

#[test]
fn cycle_loss_is_a_metric() {
    let (a, b, c) = (random(64, 5), random(64, 6), random(64, 7));
    let d = |x: &[f64], y: &[f64]| cycle_loss(x, y).unwrap();
    assert_eq!(d(&a, &a), 0.0);
    assert!(d(&a, &b) > 0.0);
    close(d(&a, &b), d(&b, &a), 1e-15);
    assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    let naive = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 64.0;
    close(d(&a, &b), naive, 1e-12);
}

#[test]
fn losses_ignore_sample_order() {
    let (a, b) = (random(8 * 16, 8), random(8 * 16, 9));
    let mut order: Vec<usize> = (0..8).collect();
    order.shuffle(&mut rng_for(1, "permutation", 0));
    let permute = |v: &[f64]| order.iter().flat_map(|&i| v[i * 16..(i + 1) * 16].to_vec()).collect::<Vec<_>>();
    let (pa, pb) = (permute(&a), permute(&b));
    close(cycle_loss(&a, &b).unwrap(), cycle_loss(&pa, &pb).unwrap(), 1e-12);
    close(adv_discriminator_loss(&a, &b).unwrap(), adv_discriminator_loss(&pa, &pb).unwrap(), 1e-12);
    close(feature_alignment_loss(&a, &b).unwrap(), feature_alignment_loss(&pa, &pb).unwrap(), 1e-12);
}

#[test]
fn totals_combine_weighted_parts() {
    let unit = LossReport {
        d_d: 1.0,
        d_b: 1.0,
        d_da: 1.0,
        d_fa: 1.0,
        g_d: 1.0,
        g_b: 1.0,
        g_da: 1.0,
        g_fa: 1.0,
        cyc_f: 1.0,
        cyc_b: 1.0,
        ..LossReport::default()
    };
    let (d, g) = total_losses(&unit, &LossWeights::default());
    close(g, 5.1, 1e-12);
    close(d, 3.1, 1e-12);
    let w = LossWeights { lambda_d: 0.3, lambda_b: 1.7, lambda_cyc: 2.5, lambda_da: 0.0, lambda_fa: 4.0 };
    let parts = LossReport { g_d: 2.0, g_b: -1.0, g_da: 9.0, g_fa: 0.5, cyc_f: 0.25, cyc_b: 0.75, ..LossReport::default() };
    let (_, g) = total_losses(&parts, &w);
    close(g, 0.3 * 2.0 - 1.7 + 2.5 + 2.0, 1e-12);
    let (_, g2) = total_losses(&parts, &w.scaled(2.0));
    close(g2, 2.0 * g, 1e-12);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(adv_discriminator_loss::<f64>(&[], &[0.0]).is_err());
    assert!(adv_generator_loss(&[f64::NAN], GenMode::Saturating).is_err());
    assert!(cycle_loss(&[0.0, 1.0], &[0.0]).is_err());
    assert!(LossWeights { lambda_fa: -0.1, ..LossWeights::default() }.validate().is_err());
}
