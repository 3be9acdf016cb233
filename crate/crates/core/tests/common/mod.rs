//! Oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

pub mod checks;

use std::sync::Arc;

use metaopt_core::lstm::{init_optimizer_params, GroupLayout, InitConfig, LearnedOptimizer};
use metaopt_core::meta::{meta_gradient, unroll_loss, EpisodeState, UnrollConfig};
use metaopt_core::numerics::{relative_error, RngStream};
use metaopt_core::optimizee::{
    synthetic_dataset, Activation, MlpArchitecture, MlpFamily, Problem, ProblemFamily, QuadraticFamily,
};
use metaopt_core::preprocess::InputEncoding;

pub struct Check {
    pub norm_error: f64,
    pub worst_coordinate: f64,
}

/// Compares the meta-gradient of one random segment with the surrogate oracle.
pub fn check_triple(
    family: &ProblemFamily,
    encoding: InputEncoding,
    layout: GroupLayout,
    n_hidden: usize,
    seed: u64,
    segment: usize,
) -> Check {
    let mut rng = RngStream::new(seed);
    let opt = random_optimizer(&mut rng, n_hidden, encoding, layout);
    let (mut problem, theta0) = family.sample(&mut rng).unwrap();
    let cfg = UnrollConfig::new(100, 20);
    let mut state = EpisodeState::start(&opt, &mut problem, &theta0).unwrap();
    let warmup = rng.below(12);
    if warmup > 0 {
        unroll_loss(&opt, &mut problem, &mut state, &UnrollConfig::new(warmup, warmup), warmup).unwrap();
    }
    let start_problem = problem.clone();
    let start = state.clone();
    let mg = meta_gradient(&opt, &mut problem, &mut state, &cfg, segment).unwrap();
    let analytic: Vec<f64> = mg.grads.iter().flat_map(|g| g.flatten()).collect();
    let inputs = mg.trace.inputs();
    let weights = &cfg.step_weights[..segment];
    let base = flatten_all(&opt);
    let mut probe_opt = opt.clone();
    let numeric = ridders_grad(
        |phi| {
            assign_all(&mut probe_opt, phi);
            surrogate_loss(&probe_opt, &start_problem, &start, &inputs, weights)
        },
        &base,
        &[1e-3, 1e-2, 1e-4],
    );
    let worst_coordinate = analytic
        .iter()
        .zip(&numeric)
        .filter(|(a, _)| a.abs() > 1e-8)
        .map(|(a, n)| (a - n).abs() / a.abs())
        .fold(0.0, f64::max);
    Check { norm_error: relative_error(&analytic, &numeric, 1e-300), worst_coordinate }
}

/// Detached-gradient surrogate: the recorded gradients are fed to the rule as
/// fixed inputs while θ is recomputed under the given weights.
pub fn surrogate_loss(
    opt: &LearnedOptimizer,
    problem: &Problem,
    start: &EpisodeState,
    inputs: &[Vec<f64>],
    weights: &[f64],
) -> f64 {
    let mut problem = problem.clone();
    let mut run = start.run.clone();
    let mut theta = start.theta.clone();
    let mut total = 0.0;
    for (grad, w) in inputs.iter().zip(weights) {
        let g = run.step(opt, grad).unwrap();
        for (p, d) in theta.iter_mut().zip(&g) {
            *p += d;
        }
        let (loss, _) = problem.loss_and_grad(&theta).unwrap();
        total += w * loss;
    }
    total
}

pub fn flatten_all(opt: &LearnedOptimizer) -> Vec<f64> {
    opt.params.iter().flat_map(|p| p.weights.flatten()).collect()
}

pub fn assign_all(opt: &mut LearnedOptimizer, flat: &[f64]) {
    let mut rest = flat;
    for p in &mut opt.params {
        let (head, tail) = rest.split_at(p.weights.len());
        p.weights.assign_flat(head).unwrap();
        rest = tail;
    }
    assert!(rest.is_empty());
}

pub fn quadratic_family() -> ProblemFamily {
    ProblemFamily::Quadratic(QuadraticFamily::new(10))
}

pub fn small_mlp_family(seed: u64) -> ProblemFamily {
    let data = synthetic_dataset(64, 4, 2, &mut RngStream::new(seed));
    ProblemFamily::Mlp(MlpFamily {
        arch: MlpArchitecture { input_dim: 4, hidden: vec![5], n_classes: 2, activation: Activation::Sigmoid },
        dataset: Arc::new(data),
        minibatch_size: 16,
        init_std: 0.1,
    })
}

/// A random rule with a non-trivial read-out.
pub fn random_optimizer(
    rng: &mut RngStream,
    n_hidden: usize,
    encoding: InputEncoding,
    layout: GroupLayout,
) -> LearnedOptimizer {
    let scale = if encoding.channels() == 1 { 1.0 } else { 0.1 };
    let params = (0..layout.group_count())
        .map(|_| {
            let mut p = init_optimizer_params(
                rng,
                InitConfig { n_hidden, encoding, init_std: 0.3, output_scale: scale, ..Default::default() },
            );
            p.weights.w_out = rng.normal_vec(n_hidden, 0.1);
            p.weights.b_out = 0.01 * rng.normal();
            p
        })
        .collect();
    LearnedOptimizer { layout, params }
}

/// Ridders' extrapolation of central differences for coordinate `i`,
/// starting from step `h` and shrinking by 1.4 per stage. Returns the
/// estimate and its error estimate.
pub fn ridders_partial<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], i: usize, h: f64) -> (f64, f64) {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const STAGES: usize = 10;
    let mut probe = x.to_vec();
    let mut central = |probe: &mut Vec<f64>, step: f64| {
        probe[i] = x[i] + step;
        let plus = f(probe);
        probe[i] = x[i] - step;
        let minus = f(probe);
        probe[i] = x[i];
        assert!(plus.is_finite() && minus.is_finite(), "non-finite probe at coordinate {i}");
        (plus - minus) / (2.0 * step)
    };
    let mut table = [[0.0f64; STAGES]; STAGES];
    let mut step = h;
    table[0][0] = central(&mut probe, step);
    let mut best = table[0][0];
    let mut err = f64::INFINITY;
    for a in 1..STAGES {
        step /= CON;
        table[0][a] = central(&mut probe, step);
        let mut fac = CON2;
        for b in 1..=a {
            table[b][a] = (table[b - 1][a] * fac - table[b - 1][a - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (table[b][a] - table[b - 1][a]).abs().max((table[b][a] - table[b - 1][a - 1]).abs());
            if e <= err {
                err = e;
                best = table[b][a];
            }
        }
        if (table[a][a] - table[a - 1][a - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

/// Per coordinate, [`ridders_partial`] from each starting step in turn until
/// the error estimate is below `1e-7` relative; otherwise the estimate with
/// the smallest error.
pub fn ridders_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], steps: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut best = (0.0, f64::INFINITY);
            for &h in steps {
                let (est, err) = ridders_partial(&mut f, x, i, h);
                if err < best.1 {
                    best = (est, err);
                }
                if err <= 1e-7 * est.abs() {
                    break;
                }
            }
            best.0
        })
        .collect()
}
