use dtr_core::nn::{Loss, Mlp};
use dtr_core::rng::RngStream;
use proptest::prelude::*;

/// Largest relative deviation between backprop and central differences of
/// a Huber regression loss.
fn max_relative_error(net: &mut Mlp, inputs: &[f64], targets: &[f64], batch: usize) -> f64 {
    let rng = RngStream::new(0, 0);
    let loss = |net: &mut Mlp| -> f64 {
        let (y, _) = net.forward_train(inputs, batch, &mut rng.clone()).unwrap();
        y.iter().zip(targets).map(|(p, t)| Loss::Huber.value_and_grad(*p, *t).0).sum()
    };
    let (y, tape) = net.forward_train(inputs, batch, &mut rng.clone()).unwrap();
    let dy: Vec<f64> = y.iter().zip(targets).map(|(p, t)| Loss::Huber.value_and_grad(*p, *t).1).collect();
    let grads = net.backward(&tape, &dy).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = loss(net);
        net.params_mut()[i] = orig - h;
        let down = loss(net);
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backprop_matches_finite_differences(
        seed in any::<u64>(),
        width in 2usize..7,
        outputs in 1usize..4,
        batch_norm in any::<bool>(),
        batch in 3usize..6,
    ) {
        let mut rng = RngStream::new(seed, 1);
        let mut net = Mlp::new(&[3, width, width, outputs], batch_norm, 0.0, &mut rng).unwrap();
        // Perturb biases too so the check does not sit on zero.
        for p in net.params_mut() {
            *p += 0.1 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
        }
        let inputs: Vec<f64> = (0..3 * batch).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
        let targets: Vec<f64> = (0..outputs * batch).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let err = max_relative_error(&mut net, &inputs, &targets, batch);
        prop_assert!(err < 1e-4, "relative error {err}");
    }
}
