use implicit_modal::network::{Activation, MlpParams, NetConfig};
use implicit_modal::objective::batch_loss_and_grad;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-8
}

/// A tanh net with random widths, biases included.
fn random_net(seed: u64) -> (MlpParams, Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=3);
    let depth = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
    let mut config = NetConfig::implicit(dim, &hidden);
    if rng.random_bool(0.5) {
        config.output_activation = Activation::Identity;
    }
    let mut p = MlpParams::init_xavier(&config, seed).unwrap();
    for l in 0..p.num_layers() {
        for b in p.biases_mut(l) {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let x = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    (p, x, rng.random_range(-2.0..2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jet_derivatives_match_finite_differences(seed in any::<u64>()) {
        let (p, x, y) = random_net(seed);
        let f = |y: f64| p.forward_jet(&x, y).unwrap().0;
        let h = 1e-4;
        let (lo, mid, hi) = (f(y - h), f(y), f(y + h));
        let fd1 = (hi.v - lo.v) / (2.0 * h);
        let fd2 = (hi.v - 2.0 * mid.v + lo.v) / (h * h);
        let fd2_from_d1 = (hi.d1 - lo.d1) / (2.0 * h);
        prop_assert!(close(mid.d1, fd1, 1e-4), "f_y {} vs {}", mid.d1, fd1);
        prop_assert!(close(mid.d2, fd2_from_d1, 1e-4), "f_yy {} vs {}", mid.d2, fd2_from_d1);
        prop_assert!((mid.d2 - fd2).abs() <= 1e-5 + 1e-3 * fd2.abs());
    }

    #[test]
    fn loss_gradient_matches_finite_differences(seed in any::<u64>(), eta in prop_oneof![Just(0.0), 0.0..2.0f64]) {
        let (p, x, y) = random_net(seed);
        let batch = vec![(x, y)];
        let (_, grad) = batch_loss_and_grad(&p, &batch, eta).unwrap();
        let h = 1e-6;
        for k in 0..p.len() {
            let mut a = p.clone();
            a.as_mut_slice()[k] += h;
            let mut b = p.clone();
            b.as_mut_slice()[k] -= h;
            let fd = (batch_loss_and_grad(&a, &batch, eta).unwrap().0
                - batch_loss_and_grad(&b, &batch, eta).unwrap().0)
                / (2.0 * h);
            let g = grad.as_slice()[k];
            prop_assert!(close(g, fd, 1e-4), "param {}: {} vs {}", k, g, fd);
        }
    }
}
