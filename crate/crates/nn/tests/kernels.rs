//! Convolution identities, normalization statistics and determinism.

use qrm_nn::graph::Graph;
use qrm_nn::{LayerSpec, Mode, Network, Tensor};
use qrm_oracles::direct_conv2d;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn conv2d_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &(b, cin, h, cout, k, s, p) in &[(2, 3, 5, 4, 3, 1, 1), (3, 2, 6, 3, 3, 2, 1), (1, 1, 4, 2, 2, 2, 0)] {
        let x = random(&mut rng, b * cin * h * h);
        let w = random(&mut rng, cout * cin * k * k);
        let bias = random(&mut rng, cout);
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![b, cin, h, h], x.clone()).unwrap());
        let wv = g.constant(Tensor::new(vec![cout, cin, k, k], w.clone()).unwrap());
        let bv = g.constant(Tensor::from_vec(bias.clone()));
        let y = g.conv2d(xv, wv, bv, s, p).unwrap();
        let (expected, ho, wo) = direct_conv2d(&x, (b, cin, h, h), &w, (cout, k), &bias, s, p);
        assert_eq!(g.shape(y), &[b, cout, ho, wo]);
        for (a, e) in g.value(y).data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_and_conv_transpose_are_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(b, cin, h, cout, k, s, p) in &[(2, 3, 8, 2, 4, 2, 1), (2, 2, 5, 3, 3, 1, 1), (1, 4, 6, 5, 3, 2, 1)] {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![b, cin, h, h], random(&mut rng, b * cin * h * h)).unwrap());
        let w = g.constant(Tensor::new(vec![cout, cin, k, k], random(&mut rng, cout * cin * k * k)).unwrap());
        let zero_out = g.constant(Tensor::zeros(&[cout]));
        let zero_in = g.constant(Tensor::zeros(&[cin]));
        let cx = g.conv2d(x, w, zero_out, s, p).unwrap();
        let yshape = g.shape(cx).to_vec();
        let n: usize = yshape.iter().product();
        let y = g.constant(Tensor::new(yshape, random(&mut rng, n)).unwrap());
        let ty = g.conv_transpose2d(y, w, zero_in, s, p).unwrap();
        if g.shape(ty) != g.shape(x) {
            // stride does not tile the input exactly; the identity needs equal shapes
            continue;
        }
        let lhs: f64 = g.value(cx).data().iter().zip(g.value(y).data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.value(x).data().iter().zip(g.value(ty).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn batch_norm_standardizes_each_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layers = vec![LayerSpec::BatchNorm {
        features: 3,
        momentum: 0.1,
        epsilon: 1e-10,
    }];
    let mut net = Network::new(layers, &mut rng).unwrap();
    let x: Vec<f64> = (0..8 * 3 * 4).map(|i| rng.random_range(-2.0..5.0) + i as f64 * 0.01).collect();
    let mut g = Graph::new();
    let b = net.bind(&mut g, false);
    let xv = g.constant(Tensor::new(vec![8, 3, 2, 2], x).unwrap());
    let y = net.forward(&mut g, &b, xv, None, Mode::Train).unwrap();
    let out = g.value(y).data();
    for c in 0..3 {
        let vals: Vec<f64> = (0..8).flat_map(|n| out[(n * 3 + c) * 4..][..4].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-6);
    }
}

#[test]
fn cond_batch_norm_with_identity_modulation_is_batch_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut plain = Network::new(vec![LayerSpec::batch_norm(2)], &mut rng).unwrap();
    let mut cond = Network::new(vec![LayerSpec::cond_batch_norm(2, 3)], &mut rng).unwrap();
    let x = Tensor::new(vec![4, 2, 3, 3], random(&mut rng, 72)).unwrap();
    let mut g = Graph::new();
    let bp = plain.bind(&mut g, false);
    let bc = cond.bind(&mut g, false);
    let xv = g.constant(x);
    let a = plain.forward(&mut g, &bp, xv, None, Mode::Train).unwrap();
    let c = cond.forward(&mut g, &bc, xv, Some(&[2, 0, 1, 2]), Mode::Train).unwrap();
    assert_eq!(g.value(a).data(), g.value(c).data());
}

#[test]
fn identical_seed_gives_bit_identical_outputs() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut net = Network::new(
            vec![
                LayerSpec::conv(1, 4, 3, 2, 1),
                LayerSpec::batch_norm(4),
                LayerSpec::leaky(0.2),
                LayerSpec::Flatten,
                LayerSpec::dense(16, 1),
            ],
            &mut rng,
        )
        .unwrap();
        let x = Tensor::new(vec![5, 1, 4, 4], random(&mut rng, 80)).unwrap();
        let mut g = Graph::new();
        let b = net.bind(&mut g, true);
        let xv = g.constant(x);
        let y = net.forward(&mut g, &b, xv, None, Mode::Train).unwrap();
        let out = g.value(y).data().to_vec();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        (out, net.gradients(&b, &grads))
    };
    assert_eq!(run(), run());
}
