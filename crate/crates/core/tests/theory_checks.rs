use pmixfed_core::data::{gen_synthetic_classification, split_per_class};
use pmixfed_core::mixup::{MixSchedule, Phase};
use pmixfed_core::theory::{
    check_coefficient_matching, check_descent, check_multistep_bias, check_nonconvex_rate, check_sgd_equivalence,
    check_strongly_convex, estimate_sigma_sq, estimate_smoothness, multistep_gain, noise_floor_ratio, run_suite,
    uniform_round, EffectiveStep, TheoryProblem,
};
use pmixfed_core::training::SupervisedTask;
use pmixfed_core::{Error, ModelSpec};

fn problem(sigma: f64) -> TheoryProblem {
    TheoryProblem::quadratic(3, 5, 2, None, sigma, 21).unwrap()
}

#[test]
fn full_retention_leaves_theta_unchanged() {
    let p = problem(1.0);
    let theta = p.random_point(2.0, 1);
    let (next, _) = uniform_round(&p, &theta, EffectiveStep::new(0.3, 1.0).unwrap(), 1, 5, false).unwrap();
    assert!(next.bit_eq(&theta));
    assert_eq!(check_sgd_equivalence(&p, 0.3, Some(1.0), 1, 2, 5).unwrap(), 0.0);
}

#[test]
fn equivalence_on_random_mix_degrees() {
    let p = problem(0.7);
    assert!(check_sgd_equivalence(&p, 0.2, None, 1, 9, 100).unwrap() <= 1e-10);
    assert!(check_sgd_equivalence(&p, 0.2, Some(0.0), 1, 9, 10).unwrap() <= 1e-12);
    assert!(matches!(check_sgd_equivalence(&p, 0.2, None, 3, 9, 1), Err(Error::Usage(_))));
}

#[test]
fn single_step_drift_norm() {
    let p = problem(0.5);
    let theta = p.random_point(3.0, 4);
    let step = EffectiveStep::new(0.2, 0.4).unwrap();
    let (next, batches) = uniform_round(&p, &theta, step, 1, 8, true).unwrap();
    let mut g = theta.zeros_like();
    for ((o, w), b) in p.objectives().iter().zip(p.weights()).zip(&batches) {
        g.add_scaled(*w, &o.batch_gradient(&theta, b).unwrap().gradient);
    }
    let drift = next.sub(&theta).norm();
    assert!((drift - step.eta_eff() * g.norm()).abs() <= 1e-10);
}

#[test]
fn coefficient_matching_endpoints() {
    let p = problem(1.0);
    for ratio in [0.0, 0.5, 1.0] {
        assert!(check_coefficient_matching(&p, 0.1, 0.1 * ratio, 20, 3).unwrap() <= 1e-8);
    }
    assert!(matches!(check_coefficient_matching(&p, 0.1, 0.2, 5, 3), Err(Error::Domain(_))));
    assert!(matches!(check_coefficient_matching(&p, 0.1, -0.01, 5, 3), Err(Error::Domain(_))));
}

#[test]
fn effective_step_from_schedule() {
    let sched = MixSchedule::new(vec![0.9, 0.5, 0.1], &[4, 2, 2], Phase::Aggregate).unwrap();
    let lb = (4.0 * 0.9 + 2.0 * 0.5 + 2.0 * 0.1) / 8.0;
    let a = EffectiveStep::from_schedule(0.1, &sched).unwrap().eta_eff();
    assert!((a - (1.0 - lb) * 0.1).abs() <= 1e-14);
    assert!(EffectiveStep::new(0.1, 1.5).is_err());
}

#[test]
fn estimators_on_unit_quadratics() {
    let clean = problem(0.0);
    let noisy = problem(1.0);
    let theta = clean.random_point(1.0, 2);
    assert!((estimate_smoothness(&clean, &theta, 20, 4).unwrap() - 1.0).abs() <= 1e-9);
    assert_eq!(estimate_sigma_sq(&clean, &theta, 50, 1).unwrap(), 0.0);
    assert!(estimate_sigma_sq(&noisy, &theta, 50, 1).unwrap() > 0.0);
}

#[test]
fn descent_holds_without_noise() {
    let p = problem(0.0);
    let start = p.random_point(3.0, 6);
    assert_eq!(check_descent(&p, &start, 0.5, 50, 1, 1).unwrap().violations, 0);
    let star = p.optimum().unwrap();
    let at_star = check_descent(&p, &star, 0.5, 3, 1, 1).unwrap();
    assert_eq!(at_star.violations, 0);
    assert!(matches!(check_descent(&p, &start, 1.01, 1, 1, 1), Err(Error::Precondition(_))));
}

#[test]
fn rate_bound_at_optimum_is_trivial() {
    let p = problem(0.0);
    let star = p.optimum().unwrap();
    let bound = check_nonconvex_rate(&p, &star, 0.1, 20, 1, 0).unwrap();
    assert!(bound.lhs <= 1e-20);
    assert!(bound.holds(0.05));
}

#[test]
fn rate_bound_on_logistic_clients() {
    let all = gen_synthetic_classification(3, 4, 40, 2.0, 1.0, 2).unwrap();
    let (train, _) = split_per_class(&all, 0, 2).unwrap();
    let spec = ModelSpec::logistic(4, 3);
    let tasks: Vec<SupervisedTask> = (0..3)
        .map(|k| {
            let idx: Vec<usize> = (0..train.len()).filter(|i| i % 3 == k).collect();
            SupervisedTask::new(spec, train.subset(&idx).unwrap(), None).unwrap()
        })
        .collect();
    let p = TheoryProblem::logistic(tasks, usize::MAX).unwrap();
    let eta = 0.5 / p.smoothness;
    let bound = check_nonconvex_rate(&p, &p.zero_params(), eta, 50, 1, 3).unwrap();
    assert!(bound.holds(0.05), "lhs {} rhs {}", bound.lhs, bound.rhs);
}

#[test]
fn contraction_is_exact_linear_map() {
    let p = problem(0.0);
    for eta in [0.05, 0.2, 0.5] {
        let fit = check_strongly_convex(&p, eta, 60, 1).unwrap();
        assert_eq!(fit.expected_factor, (1.0 - eta).powi(2));
        assert!((fit.fitted_factor - fit.expected_factor).abs() <= 1e-6);
        assert!(fit.max_round_deviation <= 1e-6);
    }
    let still = check_strongly_convex(&p, 0.0, 10, 1).unwrap();
    assert!((still.fitted_factor - 1.0).abs() <= 1e-12);
    assert!(matches!(check_strongly_convex(&problem(1.0), 0.1, 5, 1), Err(Error::Usage(_))));
}

#[test]
fn noise_floor_scales_with_step() {
    let p = problem(1.0);
    let ratio = noise_floor_ratio(&p, 0.02, 200, 2000, 4, 5).unwrap();
    assert!((1.4..=2.8).contains(&ratio), "{ratio}");
}

#[test]
fn multistep_closed_form_on_noiseless_quadratics() {
    let p = problem(0.0);
    let theta = p.random_point(3.0, 3);
    let grad = p.gradient(&theta).unwrap().norm();
    let points = check_multistep_bias(&p, &theta, 0.1, &[1, 3, 5], 1, 0).unwrap();
    for b in &points {
        // Independent: tau deterministic steps on a unit quadratic contract
        // the offset by (1 - eta)^tau.
        let gain = (1.0 - 0.9f64.powi(b.tau as i32)) / (0.1 * b.tau as f64);
        assert!((gain - multistep_gain(0.1, b.tau)).abs() < 1e-15);
        assert!((b.bias - (1.0 - gain) * grad).abs() <= 1e-10);
    }
    assert!(points[0].bias <= 1e-12);
    assert!(matches!(check_multistep_bias(&p, &theta, 0.1, &[0], 1, 0), Err(Error::Usage(_))));
}

#[test]
fn suites_are_deterministic() {
    let a = run_suite("matching", 4).unwrap();
    let b = run_suite("matching", 4).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|v| v.passed));
}
