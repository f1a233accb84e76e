use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rehab_core::numerics::{
    classify, fit_classifier, softmax_cross_entropy, FitConfig, Head, MlpParams, MlpSpec,
};

fn batch(rows: usize, width: usize, classes: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, width), |_| rng.random_range(-1.0..1.0));
    let y = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    (x, y)
}

fn loss(params: &MlpParams, x: &Array2<f64>, y: &[usize]) -> f64 {
    softmax_cross_entropy(&params.logits_batch(x.view()).unwrap(), y).0
}

fn analytic(params: &MlpParams, x: &Array2<f64>, y: &[usize]) -> Vec<f64> {
    let (logits, cache) = params.forward_cached(x.view()).unwrap();
    let (_, grad) = softmax_cross_entropy(&logits, y);
    params.backward(&cache, grad.view()).unwrap().iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backprop_matches_central_differences(
        seed in any::<u64>(),
        input in 1usize..6,
        hidden in prop::collection::vec(1usize..8, 0..3),
        output in 2usize..4,
        rows in 1usize..6,
    ) {
        let spec = MlpSpec::new(input, &hidden, output, Head::Softmax, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = MlpParams::zeros(&spec).unwrap().param_count();
        let theta: Vec<f64> = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = MlpParams::from_flat(&spec, &theta).unwrap();
        let (x, y) = batch(rows, input, output, seed ^ 0x5eed);
        let grads = analytic(&params, &x, &y);
        let flat = params.flatten();
        prop_assert_eq!(grads.len(), flat.len());
        let h = 1e-6;
        for (i, &g) in grads.iter().enumerate() {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += h;
            minus[i] -= h;
            let numeric = (loss(&MlpParams::from_flat(&spec, &plus).unwrap(), &x, &y)
                - loss(&MlpParams::from_flat(&spec, &minus).unwrap(), &x, &y))
                / (2.0 * h);
            let rel = (g - numeric).abs() / (g.abs() + numeric.abs()).max(1e-7);
            prop_assert!(rel < 1e-4, "parameter {}: {} vs {}", i, g, numeric);
        }
    }
}

#[test]
fn gradient_descent_on_a_convex_output_layer_never_increases_the_loss() {
    let spec = MlpSpec::new(3, &[], 3, Head::Softmax, 2);
    let (x, y) = batch(64, 3, 3, 9);
    let mut params = MlpParams::init(&spec).unwrap();
    let mut previous = loss(&params, &x, &y);
    for _ in 0..300 {
        let step: Vec<f64> = params
            .flatten()
            .iter()
            .zip(analytic(&params, &x, &y))
            .map(|(p, g)| p - 0.1 * g)
            .collect();
        params = MlpParams::from_flat(&spec, &step).unwrap();
        let current = loss(&params, &x, &y);
        assert!(current <= previous + 1e-15, "{current} > {previous}");
        previous = current;
    }
}

#[test]
fn classifier_training_is_deterministic_and_learns() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Array2::from_shape_fn((200, 2), |_| rng.random_range(-1.0..1.0));
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] * r[1] > 0.0)).collect();
    let spec = MlpSpec::new(2, &[16, 16], 2, Head::Softmax, 6);
    let config = FitConfig { max_epochs: 1500, tolerance: 0.0, ..FitConfig::new(0.01) };
    let a = fit_classifier(&spec, x.view(), &y, &config).unwrap();
    let b = fit_classifier(&spec, x.view(), &y, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params.flatten(), b.params.flatten());
    let hits = x.rows().into_iter().zip(&y).filter(|(r, &c)| classify(&a.params, r.as_slice().unwrap()).unwrap().0 == c).count();
    assert!(hits >= 190, "{hits}/200");
    assert!(a.final_loss().unwrap() < a.history[0]);
}

#[test]
fn invalid_labels_are_rejected() {
    let spec = MlpSpec::new(2, &[4], 2, Head::Softmax, 1);
    let x = Array2::zeros((3, 2));
    assert!(fit_classifier(&spec, x.view(), &[0, 1, 2], &FitConfig::new(0.01)).is_err());
    assert!(fit_classifier(&spec, x.view(), &[0, 1], &FitConfig::new(0.01)).is_err());
}
