use pdanet_core::rng::rng_for;
use pdanet_nn::layers::{conv, conv_t, Op, Seq};
use pdanet_nn::params::{Grads, ParamStore};
use pdanet_nn::Tensor;
use rand::Rng;

fn random(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let mut rng = rng_for(seed, "layer-test", 0);
    Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Checks input and parameter gradients of `seq` against central differences of `<dy, seq(x)>`.
fn check(seq: &Seq, store: &mut ParamStore<f64>, x: &Tensor<f64>) {
    let (y, tape) = seq.forward(store, x, true).unwrap();
    let dy = random(y.n, y.c, y.h, y.w, 99);
    let mut grads = Grads::new(store);
    let dx = seq.backward(store, &tape, dy.clone(), Some(&mut grads), true).unwrap().unwrap();
    let f = |store: &ParamStore<f64>, x: &Tensor<f64>| dot(&seq.forward(store, x, false).unwrap().0, &dy);
    let h = 1e-5;
    let close = |a: f64, n: f64, what: &str| {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
        assert!(err < 1e-6, "{what}: analytic {a} numeric {n}");
    };
    for i in (0..x.len()).step_by(7) {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data[i] += h;
        xm.data[i] -= h;
        close(dx.data[i], (f(store, &xp) - f(store, &xm)) / (2.0 * h), &format!("input {i}"));
    }
    for id in seq.params() {
        let len = store.value(id).len();
        let g = grads.get(id).expect("every parameter receives a gradient").to_vec();
        for i in (0..len).step_by(5) {
            let orig = store.value(id)[i];
            store.value_mut(id)[i] = orig + h;
            let fp = f(store, x);
            store.value_mut(id)[i] = orig - h;
            let fm = f(store, x);
            store.value_mut(id)[i] = orig;
            close(g[i], (fp - fm) / (2.0 * h), &format!("{} [{i}]", store.get(id).name));
        }
    }
}

fn big_init(store: &mut ParamStore<f64>) {
    // The default 0.02 scale hides errors behind tiny gradients.
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        store.value_mut(id).iter_mut().enumerate().for_each(|(i, v)| *v = *v * 25.0 + 0.01 * (i % 3) as f64);
    }
}

#[test]
fn strided_convolution_gradients() {
    let mut store = ParamStore::new(1);
    let seq = Seq::new(vec![conv(&mut store, "c", 2, 3, 3, 2, 1).unwrap()]);
    big_init(&mut store);
    check(&seq, &mut store, &random(2, 2, 7, 6, 1));
}

#[test]
fn transposed_convolution_gradients_and_size() {
    let mut store = ParamStore::new(2);
    let seq = Seq::new(vec![conv_t(&mut store, "t", 3, 2, 3, 2, 1, 1).unwrap()]);
    big_init(&mut store);
    let x = random(2, 3, 4, 5, 2);
    assert_eq!(seq.forward(&store, &x, false).unwrap().0.shape(), [2, 2, 8, 10]);
    check(&seq, &mut store, &x);
}

#[test]
fn norm_activation_and_padding_gradients() {
    let mut store = ParamStore::new(3);
    let seq = Seq::new(vec![
        Op::ReflectPad(2),
        conv(&mut store, "a", 2, 3, 3, 1, 0).unwrap(),
        Op::InstanceNorm,
        Op::Relu,
        Op::Residual(Seq::new(vec![Op::ReflectPad(1), conv(&mut store, "r", 3, 3, 3, 1, 0).unwrap(), Op::InstanceNorm])),
        Op::LeakyRelu(0.2),
        conv(&mut store, "b", 3, 1, 4, 2, 1).unwrap(),
        Op::Tanh,
    ]);
    big_init(&mut store);
    check(&seq, &mut store, &random(2, 2, 6, 6, 3));
}

#[test]
fn transposed_convolution_is_the_adjoint_of_convolution() {
    // <conv(x), y> = <x, convT(y)> with shared weights and zero bias.
    let mut store = ParamStore::<f64>::new(4);
    let c = conv(&mut store, "c", 2, 3, 3, 2, 1).unwrap();
    let t = conv_t(&mut store, "t", 3, 2, 3, 2, 1, 1).unwrap();
    let (Op::Conv(cw), Op::ConvT(tw)) = (&c, &t) else { unreachable!() };
    let w = store.value(cw.weight).to_vec();
    store.value_mut(tw.weight).copy_from_slice(&w);
    let x = random(1, 2, 8, 8, 5);
    let y = random(1, 3, 4, 4, 6);
    let cx = Seq::new(vec![c]).forward(&store, &x, false).unwrap().0;
    let ty = Seq::new(vec![t]).forward(&store, &y, false).unwrap().0;
    assert!((dot(&cx, &y) - dot(&x, &ty)).abs() < 1e-12);
}

#[test]
fn reflection_padding_matches_numpy_reflect() {
    let x = Tensor::from_vec(1, 1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let x = Tensor::from_vec(1, 1, 3, 4, x.data.iter().chain(&x.data).chain(&x.data).copied().collect()).unwrap();
    let y = Seq::new(vec![Op::ReflectPad(2)]).forward(&ParamStore::new(0), &x, false).unwrap().0;
    assert_eq!(&y.data[2 * 8..3 * 8], &[3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
}

#[test]
fn instance_norm_output_is_standardised() {
    let x = random(2, 3, 5, 5, 7).map(|v| 3.0 * v + 1.5);
    let y = Seq::new(vec![Op::InstanceNorm]).forward(&ParamStore::new(0), &x, false).unwrap().0;
    for plane in y.data.chunks(25) {
        let m = plane.iter().sum::<f64>() / 25.0;
        let v = plane.iter().map(|p| (p - m).powi(2)).sum::<f64>() / 25.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-3);
    }
}
