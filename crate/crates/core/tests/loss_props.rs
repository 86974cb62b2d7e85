mod common;

use common::*;
use eventsr::autograd::Graph;
use eventsr::losses::{
    adversarial_discriminator_value, adversarial_generator_value, event_similarity_value,
    identity_value, phase_total, relativistic_adversarial_value, total_variation,
    total_variation_value, FeatureExtractor, GeneratorMode, LossWeights,
};
use eventsr::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0.0f64..1.0, h * w)
        .prop_map(move |v| Tensor::new(vec![1, h, w], v).unwrap())
}

fn pair() -> impl Strategy<Value = (Tensor, Tensor)> {
    (4usize..12, 4usize..12).prop_flat_map(|(h, w)| (image(h, w), image(h, w)))
}

fn phi() -> FeatureExtractor {
    FeatureExtractor::seeded(1, 9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_non_negative((a, b) in pair(), alpha in 0.0f64..=1.0) {
        let phi = phi();
        prop_assert!(event_similarity_value(&a, &b, alpha, &phi).unwrap() >= 0.0);
        prop_assert!(identity_value(&a, &b).unwrap() >= 0.0);
        prop_assert!(total_variation_value(&a).unwrap() >= 0.0);
        let d = a.map(|v| v.clamp(0.01, 0.99));
        let e = b.map(|v| v.clamp(0.01, 0.99));
        for mode in [GeneratorMode::Paper, GeneratorMode::NonSaturating] {
            prop_assert!(adversarial_generator_value(&d, mode).unwrap() >= 0.0);
        }
        prop_assert!(adversarial_discriminator_value(&d, &e).unwrap() >= 0.0);
        let (g, dl) = relativistic_adversarial_value(&a.map(|v| 8.0 * v - 4.0), &b.map(|v| 8.0 * v - 4.0)).unwrap();
        prop_assert!(g >= 0.0 && dl >= 0.0);
    }

    #[test]
    fn distances_are_symmetric((a, b) in pair(), alpha in 0.0f64..=1.0) {
        let phi = phi();
        let ab = event_similarity_value(&a, &b, alpha, &phi).unwrap();
        let ba = event_similarity_value(&b, &a, alpha, &phi).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(identity_value(&a, &b).unwrap(), identity_value(&b, &a).unwrap());
        prop_assert_eq!(identity_value(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn losses_match_scalar_loops((a, b) in pair(), alpha in 0.0f64..=1.0) {
        let phi = phi();
        let (h, w) = (a.shape()[1], a.shape()[2]);
        let want = reference_event_similarity(a.data(), b.data(), 1, h, w, alpha, &phi);
        let got = event_similarity_value(&a, &b, alpha, &phi).unwrap();
        prop_assert!(relative_error(got, want) < 1e-10, "{got} vs {want}");
        let want = reference_tv(a.data(), h, w);
        prop_assert!(relative_error(total_variation_value(&a).unwrap(), want) < 1e-10);
    }

    #[test]
    fn tv_ignores_a_constant_offset((a, _) in pair(), c in -5.0f64..5.0) {
        let base = total_variation_value(&a).unwrap();
        let shifted = total_variation_value(&a.map(|v| v + c)).unwrap();
        prop_assert!((base - shifted).abs() <= 1e-9 * base.max(1e-9));
    }

    #[test]
    fn phase_total_is_linear_in_each_term(
        parts in prop::collection::vec(0.0f64..100.0, 4),
        bump in 0.0f64..10.0,
        lambdas in prop::collection::vec(0.0f64..20.0, 3),
        which in 0usize..4,
    ) {
        let w = LossWeights { lambda1: lambdas[0], lambda2: lambdas[1], lambda3: lambdas[2], alpha: 0.6 };
        let f = |p: &[f64]| phase_total(p[0], p[1], p[2], p[3], &w);
        let mut moved = parts.clone();
        moved[which] += bump;
        let slope = [1.0, w.lambda1, w.lambda2, w.lambda3][which];
        let got = f(&moved) - f(&parts);
        prop_assert!((got - slope * bump).abs() <= 1e-9 * (1.0 + f(&moved).abs()));
    }
}

#[test]
fn identity_averages_item_norms_over_the_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(&mut rng, &[3, 1, 5, 4], 0.0, 1.0);
    let b = random_tensor(&mut rng, &[3, 1, 5, 4], 0.0, 1.0);
    let want = mean(
        &(0..3)
            .map(|i| {
                l2(
                    &a.data()[i * 20..(i + 1) * 20],
                    &b.data()[i * 20..(i + 1) * 20],
                )
            })
            .collect::<Vec<_>>(),
    );
    assert!(relative_error(identity_value(&a, &b).unwrap(), want) < 1e-12);
}

#[test]
fn tv_gradient_matches_finite_differences_on_a_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(&mut rng, &[2, 1, 5, 6], 0.0, 1.0);
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let loss = total_variation(&mut g, v).unwrap();
    let grads = g.backward(loss).unwrap();
    let grad = grads.get(v).unwrap();
    for i in 0..x.len() {
        let fd = central_difference(&x, i, 1e-5, |t| total_variation_value(t).unwrap());
        assert!(
            (grad.data()[i] - fd).abs() < 1e-6,
            "coord {i}: {} vs {fd}",
            grad.data()[i]
        );
    }
}

#[test]
fn scores_outside_the_open_interval_are_rejected() {
    let d = Tensor::new(vec![2], vec![0.5, 1.0]).unwrap();
    assert!(adversarial_generator_value(&d, GeneratorMode::Paper).is_err());
}
