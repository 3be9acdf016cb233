mod common;

use common::*;
use metaopt_core::lstm::GroupLayout;
use metaopt_core::meta::{meta_gradient, unroll_loss, EpisodeState, UnrollConfig};
use metaopt_core::numerics::RngStream;
use metaopt_core::optimizee::Problem;
use metaopt_core::preprocess::InputEncoding;

fn assert_close(c: &Check, what: &str) {
    assert!(c.norm_error <= 1e-4, "{what}: norm-wise error {:.3e}", c.norm_error);
    assert!(c.worst_coordinate <= 1e-3, "{what}: coordinate error {:.3e}", c.worst_coordinate);
}

#[test]
fn quadratic_segments_match_surrogate() {
    let family = quadratic_family();
    for segment in [1, 5, 20] {
        for seed in 0..3 {
            let c = check_triple(&family, InputEncoding::raw(), GroupLayout::Shared, 5, 100 + seed, segment);
            assert_close(&c, &format!("quadratic T={segment} seed={seed}"));
        }
    }
}

#[test]
fn mlp_segments_match_surrogate() {
    let family = small_mlp_family(3);
    for segment in [1, 5, 20] {
        for seed in 0..2 {
            let c = check_triple(&family, InputEncoding::log_sign(), GroupLayout::Shared, 5, 200 + seed, segment);
            assert_close(&c, &format!("mlp T={segment} seed={seed}"));
        }
    }
}

#[test]
fn grouped_mlp_matches_surrogate() {
    let family = small_mlp_family(4);
    for segment in [3, 8] {
        let c = check_triple(&family, InputEncoding::log_sign(), GroupLayout::TensorKind, 4, 300, segment);
        assert_close(&c, &format!("grouped T={segment}"));
    }
}

#[test]
fn every_segment_length_on_a_quadratic() {
    let family = quadratic_family();
    for segment in 1..=20 {
        let c = check_triple(&family, InputEncoding::log_sign(), GroupLayout::Shared, 3, 400 + segment as u64, segment);
        assert_close(&c, &format!("T={segment}"));
    }
}

#[test]
fn zero_projection_single_step_bias_gradient() {
    let mut rng = RngStream::new(5);
    let mut opt = random_optimizer(&mut rng, 4, InputEncoding::raw(), GroupLayout::Shared);
    opt.params[0].weights.w_out = vec![0.0; 4];
    opt.params[0].weights.b_out = 0.0;
    opt.params[0].output_scale = 0.7;
    let (mut problem, theta0) = quadratic_family().sample(&mut rng).unwrap();
    let start_problem = problem.clone();
    let mut state = EpisodeState::start(&opt, &mut problem, &theta0).unwrap();
    let start = state.clone();
    let cfg = UnrollConfig::new(1, 1);
    let mg = meta_gradient(&opt, &mut problem, &mut state, &cfg, 1).unwrap();
    let expected: f64 = 0.7 * state.grad.iter().sum::<f64>();
    assert!((mg.grads[0].b_out - expected).abs() <= 1e-12 * expected.abs());

    let inputs = mg.trace.inputs();
    let numeric = ridders_partial(
        &mut |b: &[f64]| {
            let mut o = opt.clone();
            o.params[0].weights.b_out = b[0];
            surrogate_loss(&o, &start_problem, &start, &inputs, &[1.0])
        },
        &[0.0],
        0,
        1e-3,
    )
    .0;
    assert!((numeric - expected).abs() <= 1e-6 * expected.abs());
}

/// Independent re-execution of the forward recursion.
fn replay(
    opt: &metaopt_core::lstm::LearnedOptimizer,
    problem: &mut Problem,
    theta0: &[f64],
    steps: usize,
) -> (f64, Vec<f64>) {
    let mut run = opt.start(problem).unwrap();
    let mut theta = theta0.to_vec();
    let (_, mut grad) = problem.loss_and_grad(&theta).unwrap();
    let mut total = 0.0;
    for _ in 0..steps {
        let g = run.step(opt, &grad).unwrap();
        theta.iter_mut().zip(&g).for_each(|(p, d)| *p += d);
        let (loss, next) = problem.loss_and_grad(&theta).unwrap();
        total += loss;
        grad = next;
    }
    (total, theta)
}

#[test]
fn unroll_loss_matches_replay() {
    for seed in 0..5 {
        let mut rng = RngStream::new(seed);
        let opt = random_optimizer(&mut rng, 6, InputEncoding::raw(), GroupLayout::Shared);
        let (problem, theta0) = quadratic_family().sample(&mut rng).unwrap();
        let (mut a, mut b) = (problem.clone(), problem);
        let mut state = EpisodeState::start(&opt, &mut a, &theta0).unwrap();
        let (loss, _) = unroll_loss(&opt, &mut a, &mut state, &UnrollConfig::new(20, 20), 20).unwrap();
        let (expected, theta) = replay(&opt, &mut b, &theta0, 20);
        assert!((loss - expected).abs() <= 1e-12 * expected.abs());
        assert_eq!(state.theta, theta);
    }
}

#[test]
fn truncation_keeps_the_trajectory() {
    for family in [quadratic_family(), small_mlp_family(9)] {
        let mut rng = RngStream::new(77);
        let enc = if matches!(family, metaopt_core::optimizee::ProblemFamily::Mlp(_)) {
            InputEncoding::log_sign()
        } else {
            InputEncoding::raw()
        };
        let opt = random_optimizer(&mut rng, 5, enc, GroupLayout::Shared);
        let (problem, theta0) = family.sample(&mut rng).unwrap();

        let mut one_p = problem.clone();
        let mut one = EpisodeState::start(&opt, &mut one_p, &theta0).unwrap();
        let long = UnrollConfig::new(20, 20);
        let g1 = meta_gradient(&opt, &mut one_p, &mut one, &long, 20).unwrap();

        let mut two_p = problem;
        let mut two = EpisodeState::start(&opt, &mut two_p, &theta0).unwrap();
        let short = UnrollConfig::new(20, 10);
        let a = meta_gradient(&opt, &mut two_p, &mut two, &short, 10).unwrap();
        let b = meta_gradient(&opt, &mut two_p, &mut two, &short, 10).unwrap();

        assert_eq!(one, two);
        assert!((g1.loss - (a.loss + b.loss)).abs() <= 1e-12 * g1.loss.abs());
        let joined: Vec<_> = a.trace.steps.iter().chain(&b.trace.steps).cloned().collect();
        assert_eq!(g1.trace.steps, joined);
    }
}
