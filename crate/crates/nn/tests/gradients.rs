//! Analytic gradients against central finite differences, in double precision.

use pdanet_core::rng::rng_for;
use pdanet_nn::layers::{conv, Op, Seq};
use pdanet_nn::objectives::{
    adv_discriminator_grad, adv_discriminator_loss, adv_generator_grad, adv_generator_loss, cycle_grad, cycle_loss,
    fa_generator_grad, fa_generator_loss, feature_alignment_grad, feature_alignment_loss,
};
use pdanet_nn::params::{Grads, ParamId, ParamStore};
use pdanet_nn::trainer::{discriminator_gradients, evaluate, generator_gradients, generator_passes};
use pdanet_nn::{GenMode, LossReport, LossWeights, ModelConfig, PdaNet, StepBatch, Tensor};
use rand::Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(n: usize, c: usize, h: usize, w: usize, seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = rng_for(seed, "gradcheck", 0);
    Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Relative error, with gradients below `floor` compared absolutely: finite differences of an
/// O(1) loss carry about 1e-10 of rounding noise.
fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let floor = 1e-4;
    let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
    assert!(err < TOL, "{what}: analytic {analytic:e}, numeric {numeric:e}, relative error {err:e}");
}

/// Central difference of `f` with respect to every entry of `ids`, compared with `grads`.
fn check_params(store: &mut ParamStore<f64>, ids: &[ParamId], grads: &Grads<f64>, f: &dyn Fn(&ParamStore<f64>) -> f64, stride: usize) -> usize {
    let mut checked = 0;
    for &id in ids {
        let g = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; store.value(id).len()]);
        for i in (0..g.len()).step_by(stride) {
            let orig = store.value(id)[i];
            store.value_mut(id)[i] = orig + H;
            let fp = f(store);
            store.value_mut(id)[i] = orig - H;
            let fm = f(store);
            store.value_mut(id)[i] = orig;
            assert_close(g[i], (fp - fm) / (2.0 * H), &format!("{} [{i}]", store.get(id).name));
            checked += 1;
        }
    }
    checked
}

/// Toy two-layer network `conv -> leaky -> conv`, emitting a 1-channel map.
fn toy(cin: usize) -> (ParamStore<f64>, Seq) {
    let mut store = ParamStore::new(11);
    let seq = Seq::new(vec![
        conv(&mut store, "l1", cin, 3, 3, 1, 1).unwrap(),
        Op::LeakyRelu(0.2),
        conv(&mut store, "l2", 3, 1, 3, 1, 1).unwrap(),
    ]);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        store.value_mut(id).iter_mut().enumerate().for_each(|(i, v)| *v = *v * 20.0 + 0.05 * ((i % 5) as f64 - 2.0));
    }
    (store, seq)
}

/// A two-input loss on the toy network's outputs, with its analytic input gradients.
type TwoInput<'a> = dyn Fn(&[f64], &[f64]) -> (f64, Vec<f64>, Vec<f64>) + 'a;

fn check_two_input(loss: &TwoInput<'_>, value: &dyn Fn(&[f64], &[f64]) -> f64, cin: usize, what: &str) {
    let (mut store, seq) = toy(cin);
    let (a, b) = (random(2, cin, 5, 5, 1, 1.0), random(2, cin, 5, 5, 2, 1.0));
    let (ya, ta) = seq.forward(&store, &a, true).unwrap();
    let (yb, tb) = seq.forward(&store, &b, true).unwrap();
    let (l, ga, gb) = loss(&ya.data, &yb.data);
    assert!((l - value(&ya.data, &yb.data)).abs() < 1e-12, "{what}: loss and loss-with-gradient disagree");
    let mut grads = Grads::new(&store);
    let wrap = |t: &Tensor<f64>, g: Vec<f64>| Tensor::from_vec(t.n, t.c, t.h, t.w, g).unwrap();
    seq.backward(&store, &ta, wrap(&ya, ga), Some(&mut grads), false).unwrap();
    seq.backward(&store, &tb, wrap(&yb, gb), Some(&mut grads), false).unwrap();
    let f = |s: &ParamStore<f64>| {
        let ya = seq.forward(s, &a, false).unwrap().0;
        let yb = seq.forward(s, &b, false).unwrap().0;
        value(&ya.data, &yb.data)
    };
    let ids = seq.params();
    assert!(check_params(&mut store, &ids, &grads, &f, 1) > 50, "{what}");
}

#[test]
fn adversarial_discriminator_loss_gradient() {
    check_two_input(&|r, f| adv_discriminator_grad(r, f).unwrap(), &|r, f| adv_discriminator_loss(r, f).unwrap(), 1, "discriminator");
}

#[test]
fn adversarial_generator_loss_gradient_in_both_modes() {
    for mode in [GenMode::Saturating, GenMode::NonSaturating] {
        check_two_input(
            &|_, f| {
                let (l, g) = adv_generator_grad(f, mode).unwrap();
                (l, vec![0.0; f.len()], g)
            },
            &|_, f| adv_generator_loss(f, mode).unwrap(),
            1,
            &format!("generator {mode:?}"),
        );
    }
}

#[test]
fn cycle_loss_gradient() {
    let target = random(2, 1, 5, 5, 9, 0.5);
    check_two_input(
        &|_, rec| {
            let (l, g) = cycle_grad(&target.data, rec).unwrap();
            (l, vec![0.0; rec.len()], g)
        },
        &|_, rec| cycle_loss(&target.data, rec).unwrap(),
        1,
        "cycle",
    );
}

#[test]
fn feature_alignment_loss_gradients() {
    check_two_input(&|e, s| feature_alignment_grad(e, s).unwrap(), &|e, s| feature_alignment_loss(e, s).unwrap(), 4, "alignment");
    for mode in [GenMode::Saturating, GenMode::NonSaturating] {
        check_two_input(
            &|e, s| fa_generator_grad(e, s, mode).unwrap(),
            &|e, s| fa_generator_loss(e, s, mode).unwrap(),
            4,
            &format!("alignment generator {mode:?}"),
        );
    }
}

fn tiny_model() -> (PdaNet<f64>, StepBatch<f64>) {
    let cfg = ModelConfig { channels_base: 8, residual_blocks: 1, ..ModelConfig::default() };
    let mut model = PdaNet::<f64>::build(&cfg, 5).unwrap();
    // Larger weights so every path carries a gradient well above rounding noise.
    let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
    for id in ids {
        model.store.value_mut(id).iter_mut().for_each(|v| *v *= 10.0);
    }
    let batch = StepBatch { blurry: random(2, 1, 32, 32, 21, 0.9), clean: random(2, 1, 32, 32, 22, 0.9), exp: random(2, 1, 32, 32, 23, 0.9) };
    (model, batch)
}

#[test]
fn full_model_generator_gradient_matches_total_g() {
    let (mut model, batch) = tiny_model();
    let w = LossWeights::default();
    for mode in [GenMode::NonSaturating, GenMode::Saturating] {
        let passes = generator_passes(&model, &batch, true).unwrap();
        let grads = generator_gradients(&model, &batch, &passes, &w, mode, &mut LossReport::default()).unwrap();
        let ids = model.generator_params();
        let snapshot = model.clone();
        let f = |s: &ParamStore<f64>| {
            let m = PdaNet { store: s.clone(), ..snapshot.clone() };
            evaluate(&m, &batch, &w, mode).unwrap().total_g
        };
        assert!(check_params(&mut model.store, &ids, &grads, &f, 401) > 100);
    }
}

#[test]
fn full_model_discriminator_gradient_matches_minus_total_d() {
    let (mut model, batch) = tiny_model();
    let w = LossWeights::default();
    let passes = generator_passes(&model, &batch, true).unwrap();
    let grads = discriminator_gradients(&model, &batch, &passes, &w, &mut LossReport::default()).unwrap();
    let ids = model.discriminator_params();
    let snapshot = model.clone();
    let f = |s: &ParamStore<f64>| {
        let m = PdaNet { store: s.clone(), ..snapshot.clone() };
        -evaluate(&m, &batch, &w, GenMode::NonSaturating).unwrap().total_d
    };
    assert!(check_params(&mut model.store, &ids, &grads, &f, 601) > 100);
}
