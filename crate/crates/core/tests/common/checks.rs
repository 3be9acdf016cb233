//! Measured checks over randomized cases. Each returns the worst observed
//! error (or a failure count) so callers can assert or report it.

use metaopt_core::baselines::{BaselineConfig, BaselineKind, BaselineState};
use metaopt_core::lstm::{lstm_cell_backward, lstm_cell_forward, optimizer_step, CoordinateStateBank, LstmLayerParams};
use metaopt_core::memory::{
    gac_average, ntm_bfgs_step, ntm_read, ntm_write, ExternalMemory, GacSpec, MemoryMode, NtmOptimizer, WriteHead,
};
use metaopt_core::meta::evaluate_optimizer;
use metaopt_core::numerics::{finite_diff_grad, relative_error, Matrix, RngStream};
use metaopt_core::optimizee::{
    synthetic_dataset, Activation, MlpArchitecture, MlpProblemInstance, ProblemFamily, QuadraticFamily,
    QuadraticInstance, QuadraticWeights,
};
use metaopt_core::preprocess::{log_sign, InputEncoding};
use metaopt_core::rule::UpdateRule;
use nalgebra::DMatrix;

use super::random_optimizer;

/// Worst norm-wise relative error of `quad_grad` against central differences.
pub fn quadratic_gradient_error(cases: usize) -> f64 {
    let mut rng = RngStream::new(0x9a);
    (0..cases)
        .map(|i| {
            let inst = QuadraticInstance::sample(1 + i % 12, &mut rng);
            let theta: Vec<f64> = (0..inst.dim()).map(|_| 20.0 * rng.uniform() - 10.0).collect();
            let numeric = finite_diff_grad(|t| inst.eval(t), &theta, 1e-6).unwrap();
            relative_error(&inst.grad(&theta), &numeric, 1e-12)
        })
        .fold(0.0, f64::max)
}

/// Worst norm-wise relative error of the MLP minibatch gradient.
pub fn mlp_gradient_error(cases: usize) -> f64 {
    let mut rng = RngStream::new(0x9b);
    let archs = [
        (vec![5], Activation::Sigmoid, 2),
        (vec![4, 3], Activation::Sigmoid, 3),
        (vec![6], Activation::Relu, 4),
        (vec![3, 4], Activation::Relu, 2),
    ];
    (0..cases)
        .map(|i| {
            let (hidden, activation, n_classes) = archs[i % archs.len()].clone();
            let data = synthetic_dataset(40, 5, n_classes, &mut rng);
            let arch = MlpArchitecture { input_dim: 5, hidden, n_classes, activation };
            let mut inst =
                MlpProblemInstance::new(arch, std::sync::Arc::new(data), 12, rng.substream(i as u64)).unwrap();
            let theta = rng.normal_vec(inst.dim(), 0.7);
            let batch = inst.next_minibatch();
            let (_, grad) = inst.loss_and_grad_on(&theta, &batch).unwrap();
            let numeric = finite_diff_grad(|t| inst.loss_and_grad_on(t, &batch).unwrap().0, &theta, 1e-6).unwrap();
            relative_error(&grad, &numeric, 1e-12)
        })
        .fold(0.0, f64::max)
}

/// Worst relative error of the cell's reverse pass on the weights, input,
/// hidden and cell state, each block measured separately.
pub fn lstm_cell_error(cases: usize) -> f64 {
    let mut rng = RngStream::new(0x9c);
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let (nx, hd) = (1 + i % 3, 2 + i % 4);
        let layer = LstmLayerParams::random(nx, hd, 0.5, 1.0, &mut rng);
        let x = rng.normal_vec(nx, 1.0);
        let h = rng.normal_vec(hd, 0.5);
        let c = rng.normal_vec(hd, 1.0);
        let (u, v) = (rng.normal_vec(hd, 1.0), rng.normal_vec(hd, 1.0));
        let objective = |layer: &LstmLayerParams, x: &[f64], h: &[f64], c: &[f64]| {
            let (h2, c2) = lstm_cell_forward(layer, x, h, c);
            h2.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() + c2.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
        };
        let g = lstm_cell_backward(&layer, &x, &h, &c, &u, &v);
        let eps = 1e-6;
        let mut check = |analytic: &[f64], numeric: Vec<f64>| {
            worst = worst.max(relative_error(analytic, &numeric, 1e-12));
        };
        check(&g.x, finite_diff_grad(|p| objective(&layer, p, &h, &c), &x, eps).unwrap());
        check(&g.h, finite_diff_grad(|p| objective(&layer, &x, p, &c), &h, eps).unwrap());
        check(&g.c, finite_diff_grad(|p| objective(&layer, &x, &h, p), &c, eps).unwrap());
        let mut probe = layer.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.w_x.copy_from_slice(p);
                objective(&probe, &x, &h, &c)
            },
            &layer.w_x,
            eps,
        )
        .unwrap();
        check(&g.params.w_x, numeric);
        let mut probe = layer.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.w_h.copy_from_slice(p);
                objective(&probe, &x, &h, &c)
            },
            &layer.w_h,
            eps,
        )
        .unwrap();
        check(&g.params.w_h, numeric);
        let mut probe = layer.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.bias.copy_from_slice(p);
                objective(&probe, &x, &h, &c)
            },
            &layer.bias,
            eps,
        )
        .unwrap();
        check(&g.params.bias, numeric);
    }
    worst
}

/// Worst deviation from the three tabulated preprocessing values.
pub fn preprocess_table_error() -> f64 {
    let cases = [(1.0, [0.0, 1.0]), (0.0, [-1.0, 0.0]), (-(5.0f64).exp(), [0.5, -1.0])];
    cases
        .iter()
        .map(|(g, want)| {
            let got = log_sign(*g, 10.0);
            (got[0] - want[0]).abs().max((got[1] - want[1]).abs())
        })
        .fold(0.0, f64::max)
}

/// Discontinuity of the encoding at `|∇| = e^-10`: the jump between the two
/// branches one ulp apart, and how far the `±1e-12` probes move beyond the
/// steepest slope `e^10` of either branch.
pub fn preprocess_continuity_gap() -> f64 {
    let edge = (-10.0f64).exp();
    let below = f64::from_bits(edge.to_bits() - 1);
    let slope = 10.0f64.exp();
    let mut worst: f64 = 0.0;
    for sign in [1.0, -1.0] {
        let at = log_sign(sign * edge, 10.0);
        let under = log_sign(sign * below, 10.0);
        worst = worst.max((at[0] - under[0]).abs()).max((at[1] - under[1]).abs());
        worst = worst.max((at[0] + 1.0).abs()).max((at[1] - sign).abs());
        for delta in [1e-12, -1e-12] {
            let near = log_sign(sign * (edge + delta), 10.0);
            let moved = (near[0] - at[0]).abs().max((near[1] - at[1]).abs());
            worst = worst.max(moved - slope * delta.abs()).max(0.0);
        }
    }
    worst
}

/// Inputs among `n` random draws that violate symmetry or the `[-1, 1]` bound.
pub fn preprocess_symmetry_failures(n: usize) -> usize {
    let mut rng = RngStream::new(0x9d);
    (0..n)
        .filter(|_| {
            // magnitudes from e^-15 to e^10
            let g = (rng.uniform() * 25.0 - 15.0).exp() * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            let a = log_sign(g, 10.0);
            let b = log_sign(-g, 10.0);
            let symmetric = a[0] == b[0] && a[1] == -b[1];
            let bounded = a.iter().all(|v| (-1.0..=1.0).contains(v));
            !(symmetric && bounded)
        })
        .count()
}

/// Replays of `optimizer_step` on permuted inputs whose outputs or states
/// are not the bit-exact permutation of the original.
pub fn permutation_failures(replays: usize) -> usize {
    let mut rng = RngStream::new(0x9e);
    let mut failures = 0;
    for r in 0..replays {
        let n = 2 + rng.below(12);
        let enc = if r % 2 == 0 { InputEncoding::raw() } else { InputEncoding::log_sign() };
        let opt = random_optimizer(&mut rng, 4, enc, metaopt_core::lstm::GroupLayout::Shared);
        let phi = &opt.params[0];
        let mut bank = CoordinateStateBank::zeros(n, 4);
        for _ in 0..rng.below(4) {
            optimizer_step(phi, &rng.normal_vec(n, 2.0), &mut bank);
        }
        let grad = rng.normal_vec(n, 2.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        let mut pbank = bank.permuted(&perm);
        let pgrad: Vec<f64> = perm.iter().map(|&i| grad[i]).collect();
        let out = optimizer_step(phi, &grad, &mut bank);
        let pout = optimizer_step(phi, &pgrad, &mut pbank);
        let same_out = perm.iter().zip(&pout).all(|(&i, v)| v.to_bits() == out[i].to_bits());
        let expected = bank.permuted(&perm);
        let same_bank = [
            (&pbank.h1, &expected.h1),
            (&pbank.c1, &expected.c1),
            (&pbank.h2, &expected.h2),
            (&pbank.c2, &expected.c2),
        ]
        .iter()
        .all(|(a, b)| a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        if !(same_out && same_bank) {
            failures += 1;
        }
    }
    failures
}

/// Random signs with magnitudes log-uniform in `[1e-3, 1e3]`.
fn signed_magnitudes(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 } * rng.log_uniform(1e-3, 1e3)).collect()
}

/// Relative deviation of ADAM's first step from `α·sign(g)` at ε = 1e-10.
pub fn adam_first_step_error() -> f64 {
    let mut rng = RngStream::new(0x9f);
    let alpha = 0.01;
    let mut cfg = BaselineConfig::new(BaselineKind::Adam, alpha);
    cfg.hyper.epsilon = 1e-10;
    let grad = signed_magnitudes(&mut rng, 50);
    let step = BaselineState::new(cfg, grad.len()).update(&grad).unwrap();
    step.iter().zip(&grad).map(|(s, g)| (s + alpha * g.signum()).abs() / alpha).fold(0.0, f64::max)
}

/// Relative deviation of RMSprop's first step from `α·sign(g)/√0.1`.
pub fn rmsprop_first_step_error() -> f64 {
    let mut rng = RngStream::new(0xa0);
    let alpha = 0.01;
    let mut cfg = BaselineConfig::new(BaselineKind::Rmsprop, alpha);
    cfg.hyper.epsilon = 1e-10;
    let grad = signed_magnitudes(&mut rng, 50);
    let step = BaselineState::new(cfg, grad.len()).update(&grad).unwrap();
    let expected = alpha / 0.1f64.sqrt();
    step.iter().zip(&grad).map(|(s, g)| (s + expected * g.signum()).abs() / expected).fold(0.0, f64::max)
}

/// Worst relative deviation of the mean SGD curve on `W = I` quadratics
/// from `(1 − 2α)^{2t} f(θ₀)`.
pub fn sgd_curve_error() -> f64 {
    let family =
        ProblemFamily::Quadratic(QuadraticFamily { dim: 10, weights: QuadraticWeights::Identity, init_std: 1.0 });
    let alpha = 0.1;
    let rule = UpdateRule::Baseline(BaselineConfig::new(BaselineKind::Sgd, alpha));
    let curve = evaluate_optimizer(&rule, &family, 20, 50, 0xa1, false).unwrap();
    let f0 = curve.mean_at(0);
    curve
        .points
        .iter()
        .map(|p| {
            let expected = (1.0 - 2.0 * alpha).powi(2 * p.step as i32) * f0;
            (p.mean - expected).abs() / expected
        })
        .fold(0.0, f64::max)
}

/// Random GAC cases where averaging is not idempotent or leaves designated
/// cells unequal across coordinates, including full controller steps.
pub fn gac_failures(cases: usize) -> usize {
    let mut rng = RngStream::new(0xa2);
    let mut failures = 0;
    for _ in 0..cases {
        let (n, hd) = (1 + rng.below(9), 1 + rng.below(6));
        let cells: Vec<usize> = (0..hd).filter(|_| rng.uniform() < 0.5).collect();
        let mut x = rng.normal_vec(n * hd, 3.0);
        gac_average(&mut x, hd, &cells);
        let mut twice = x.clone();
        gac_average(&mut twice, hd, &cells);
        let idempotent = x.iter().zip(&twice).all(|(a, b)| a.to_bits() == b.to_bits());
        let equal = cells.iter().all(|&j| (0..n).all(|k| x[k * hd + j].to_bits() == x[j].to_bits()));
        if !(idempotent && equal) {
            failures += 1;
        }
    }
    for case in 0..cases / 4 {
        let spec = GacSpec { layer1: vec![0, 2], layer2: vec![1] };
        let opt = NtmOptimizer::init(
            &mut rng,
            4,
            InputEncoding::log_sign(),
            0.5,
            spec.clone(),
            MemoryMode::Dense { base_scale: 0.0 },
        );
        let mut run = opt.start(3 + case % 5);
        for _ in 0..3 {
            ntm_bfgs_step(&opt, &rng.normal_vec(run.bank.len(), 1.0), &mut run);
            for (layer, h) in [(0, &run.bank.h1), (1, &run.bank.h2)] {
                for &j in spec.cells(layer) {
                    if (0..run.bank.len()).any(|k| h[k * 4 + j].to_bits() != h[j].to_bits()) {
                        failures += 1;
                    }
                }
            }
        }
    }
    failures
}

/// A controller with random head projections so reads and writes are non-trivial.
pub fn active_ntm(rng: &mut RngStream, n_hidden: usize, gac: GacSpec, memory: MemoryMode) -> NtmOptimizer {
    let mut opt = NtmOptimizer::init(rng, n_hidden, InputEncoding::log_sign(), 0.5, gac, memory);
    opt.head_weights = rng.normal_vec(opt.head_weights.len(), 0.5);
    opt.head_bias = rng.normal_vec(opt.head_bias.len(), 0.1);
    opt.controller.weights.w_out = rng.normal_vec(n_hidden, 0.5);
    opt
}

fn singular_values(m: &Matrix) -> Vec<f64> {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    let mut s: Vec<f64> = dm.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value of `M_{t+1} − M_t` beyond the write-head budget,
/// over several controller steps and a direct three-head write.
pub fn rank_excess() -> f64 {
    let mut rng = RngStream::new(0xa3);
    let mut worst: f64 = 0.0;
    for case in 0..6 {
        let n = 6 + case;
        let opt = active_ntm(&mut rng, 5, GacSpec::leading(2), MemoryMode::Dense { base_scale: 0.5 });
        let mut run = opt.start(n);
        for _ in 0..5 {
            let before = run.memory.to_dense();
            ntm_bfgs_step(&opt, &rng.normal_vec(n, 1.0), &mut run);
            let after = run.memory.to_dense();
            let delta: Vec<f64> = after.as_slice().iter().zip(before.as_slice()).map(|(a, b)| a - b).collect();
            let s = singular_values(&Matrix::from_vec(n, n, delta));
            worst = s[opt.write_heads..].iter().copied().fold(worst, f64::max);
        }
    }
    let n = 8;
    let mut m = ExternalMemory::dense(n, 0.0);
    let heads: Vec<WriteHead> =
        (0..1).map(|_| WriteHead { a: rng.normal_vec(n, 1.0), b: rng.normal_vec(n, 1.0) }).collect();
    ntm_write(&mut m, &heads);
    let s = singular_values(&m.to_dense());
    s[1..].iter().copied().fold(worst, f64::max)
}

/// Deviation of three-head writes from independently summed outer products.
pub fn write_sum_error() -> f64 {
    let mut rng = RngStream::new(0xa4);
    let n = 7;
    let base = rng.normal_vec(n * n, 1.0);
    let mut m = ExternalMemory::Dense(Matrix::from_vec(n, n, base.clone()));
    let heads: Vec<WriteHead> =
        (0..3).map(|_| WriteHead { a: rng.normal_vec(n, 1.0), b: rng.normal_vec(n, 1.0) }).collect();
    ntm_write(&mut m, &heads);
    let dense = m.to_dense();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let expected = base[r * n + c] + heads.iter().map(|h| h.a[r] * h.b[c]).sum::<f64>();
            worst = worst.max((dense.get(r, c) - expected).abs());
        }
    }
    worst
}

/// Worst difference between dense and history-mode reads at `n = 16` for
/// histories of length 1..=10, plus the dense read against a direct product.
pub fn lbfgs_dense_error() -> f64 {
    let mut rng = RngStream::new(0xa5);
    let n = 16;
    let mut worst: f64 = 0.0;
    for len in 1..=10 {
        let gamma = rng.normal();
        let mut dense = ExternalMemory::dense(n, gamma);
        let mut history = ExternalMemory::history(n, gamma, 10);
        for _ in 0..len {
            let head = [WriteHead { a: rng.normal_vec(n, 1.0), b: rng.normal_vec(n, 1.0) }];
            ntm_write(&mut dense, &head);
            ntm_write(&mut history, &head);
        }
        for _ in 0..5 {
            let r = rng.normal_vec(n, 1.0);
            let a = ntm_read(&dense, &r);
            let b = ntm_read(&history, &r);
            let m = dense.to_dense();
            for i in 0..n {
                let direct: f64 = (0..n).map(|j| m.get(i, j) * r[j]).sum();
                worst = worst.max((a[i] - b[i]).abs()).max((a[i] - direct).abs());
            }
        }
    }
    worst
}
