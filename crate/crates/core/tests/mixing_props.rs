use pmixfed_core::mixup::{
    aggregate_schedule, broadcast_schedule, compute_mu, frozen_layer_count, layer_weights, mix_into_global,
    mix_into_local, mix_params, MixFactorInput, MixSchedule, Phase,
};
use pmixfed_core::model::{LayerShape, LayeredParams};
use proptest::prelude::*;

fn params(sizes: &[usize], values: &[f64]) -> LayeredParams {
    let shapes: Vec<LayerShape> = sizes.iter().map(|&s| LayerShape::vector(s)).collect();
    LayeredParams::from_flat(shapes, values).unwrap()
}

/// Layer sizes plus two parameter vectors of matching total length.
fn model_pair() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
    prop::collection::vec(1usize..6, 1..7).prop_flat_map(|sizes| {
        let total: usize = sizes.iter().sum();
        (
            Just(sizes),
            prop::collection::vec(-1e3f64..1e3, total),
            prop::collection::vec(-1e3f64..1e3, total),
        )
    })
}

// Independent restatement of the schedule formulas.
fn oracle_broadcast(n: usize, mu: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let v = mu * (n - 1 - i) as f64;
            if v > 1.0 { 1.0 } else { v }
        })
        .collect()
}

fn oracle_aggregate(n: usize, mu: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i == 0 {
                return 1.0;
            }
            let v = 1.0 - i as f64 * mu;
            if v <= 0.0 { 0.0 } else { v }
        })
        .collect()
}

proptest! {
    #[test]
    fn mu_stays_in_unit_interval(acc in 1e-6f64..10.0, t in 0usize..100, extra in 1usize..100, b in 0.0f64..4.0) {
        let mu = compute_mu(MixFactorInput { acc_ratio: acc, round: t, total_rounds: t + extra, offset: b }).unwrap();
        prop_assert!((0.0..=1.0).contains(&mu));
        let z = (t as f64 / (t + extra) as f64) * (acc.powf(b) - 1.0);
        if z.abs() < 30.0 {
            prop_assert!(mu > 0.0 && mu < 1.0);
        }
        prop_assert!((mu - 1.0 / (1.0 + z.exp())).abs() < 1e-15);
    }

    #[test]
    fn mu_decreases_with_accuracy(a in 0.01f64..5.0, gap in 0.01f64..5.0, t in 1usize..50) {
        let f = |acc: f64| compute_mu(MixFactorInput { acc_ratio: acc, round: t, total_rounds: 50, offset: 2.0 }).unwrap();
        prop_assert!(f(a + gap) <= f(a));
    }

    #[test]
    fn broadcast_matches_formula(n in 1usize..12, mu in 0.0f64..=1.0) {
        let s = broadcast_schedule(&vec![1; n], mu).unwrap();
        let oracle = oracle_broadcast(n, mu);
        prop_assert_eq!(s.lambdas(), oracle.as_slice());
        prop_assert!(s.is_non_increasing());
        prop_assert_eq!(s.lambdas()[n - 1], 0.0);
    }

    #[test]
    fn aggregate_matches_formula(n in 1usize..12, mu in 0.0f64..5.0) {
        let s = aggregate_schedule(&vec![1; n], mu).unwrap();
        let oracle = oracle_aggregate(n, mu);
        prop_assert_eq!(s.lambdas(), oracle.as_slice());
        prop_assert_eq!(s.lambdas()[0], 1.0);
        prop_assert!(s.is_non_increasing());
        prop_assert!(s.lambdas().iter().all(|l| (0.0..=1.0).contains(l)));
    }

    #[test]
    fn lambda_bar_is_weighted_mean(sizes in prop::collection::vec(1usize..50, 1..8), mu in 0.0f64..=1.0) {
        let s = broadcast_schedule(&sizes, mu).unwrap();
        let total: usize = sizes.iter().sum();
        let direct: f64 = sizes.iter().zip(s.lambdas()).map(|(&n, l)| n as f64 * l).sum::<f64>() / total as f64;
        prop_assert!((s.lambda_bar() - direct).abs() < 1e-14);
        let w = layer_weights(&sizes);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mix_endpoints_are_bit_exact((sizes, a, b) in model_pair()) {
        let (pa, pb) = (params(&sizes, &a), params(&sizes, &b));
        let one = MixSchedule::uniform(&sizes, 1.0, Phase::Broadcast).unwrap();
        let zero = MixSchedule::uniform(&sizes, 0.0, Phase::Broadcast).unwrap();
        prop_assert!(mix_params(&pa, &pb, &one).unwrap().bit_eq(&pa));
        prop_assert!(mix_params(&pa, &pb, &zero).unwrap().bit_eq(&pb));
    }

    #[test]
    fn mix_is_affine_symmetric((sizes, a, b) in model_pair(), lambda in 0.0f64..=1.0) {
        let (pa, pb) = (params(&sizes, &a), params(&sizes, &b));
        let s = MixSchedule::uniform(&sizes, lambda, Phase::Aggregate).unwrap();
        let mut sum = mix_params(&pa, &pb, &s).unwrap();
        sum.add_scaled(1.0, &mix_params(&pb, &pa, &s).unwrap());
        let mut expect = pa.clone();
        expect.add_scaled(1.0, &pb);
        prop_assert!(sum.max_abs_diff(&expect) <= 1e-12 * 2e3);
    }

    #[test]
    fn mix_stays_between_endpoints((sizes, a, b) in model_pair(), lambdas in prop::collection::vec(0.0f64..=1.0, 12)) {
        let (pa, pb) = (params(&sizes, &a), params(&sizes, &b));
        let s = MixSchedule::new(lambdas[..sizes.len()].to_vec(), &sizes, Phase::Broadcast).unwrap();
        let m = mix_params(&pa, &pb, &s).unwrap();
        for ((x, y), z) in pa.iter().zip(pb.iter()).zip(m.iter()) {
            prop_assert!(*z >= x.min(*y) - 1e-9 && *z <= x.max(*y) + 1e-9);
        }
    }

    #[test]
    fn frozen_count_matches_clamps(n in 1usize..12, mu in 0.0f64..=1.0) {
        let b = broadcast_schedule(&vec![3; n], mu).unwrap();
        let a = aggregate_schedule(&vec![3; n], mu).unwrap();
        prop_assert_eq!(frozen_layer_count(&b), b.lambdas().iter().filter(|&&l| l == 0.0).count());
        prop_assert_eq!(frozen_layer_count(&a), a.lambdas().iter().filter(|&&l| l == 1.0).count());
        prop_assert!(frozen_layer_count(&b) >= 1);
        prop_assert!(frozen_layer_count(&a) >= 1);
    }
}

#[test]
fn clamped_aggregate_keeps_only_base() {
    let s = aggregate_schedule(&[4, 4, 4], f64::INFINITY).unwrap();
    assert_eq!(s.lambdas(), &[1.0, 0.0, 0.0]);
}

#[test]
fn shallow_local_models() {
    let sizes = [2, 3, 1];
    let g = params(&sizes, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let l = params(&sizes[..2], &[0.0; 5]);
    let s = MixSchedule::uniform(&sizes, 0.5, Phase::Aggregate).unwrap();
    let into_local = mix_into_local(&g, &l, &s).unwrap();
    assert_eq!(into_local.num_layers(), 2);
    assert_eq!(into_local.layer(1), &[1.5, 2.0, 2.5]);
    let into_global = mix_into_global(&g, &l, &s).unwrap();
    assert_eq!(into_global.layer(2), g.layer(2));
    assert_eq!(into_global.layer(0), &[0.5, 1.0]);
}

#[test]
fn mu_reference_value() {
    let mu = compute_mu(MixFactorInput { acc_ratio: 2.0, round: 1, total_rounds: 2, offset: 2.0 }).unwrap();
    assert!((mu - 0.18242552380635635).abs() < 1e-15);
}
