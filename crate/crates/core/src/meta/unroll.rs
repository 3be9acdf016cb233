use alloc::vec;
use alloc::vec::Vec;

use crate::lstm::{step_layers, LearnedOptimizer, LearnedRun, LstmWeights, StepTape};
use crate::optimizee::Problem;
use crate::{Error, Result};

/// Horizon, truncation length and per-step loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrollConfig {
    pub horizon: usize,
    pub truncation: usize,
    /// `w_1..w_T`, indexed by position within a segment.
    pub step_weights: Vec<f64>,
}

impl Default for UnrollConfig {
    fn default() -> Self {
        Self::new(100, 20)
    }
}

impl UnrollConfig {
    /// Unit weights.
    pub fn new(horizon: usize, truncation: usize) -> Self {
        Self { horizon, truncation, step_weights: vec![1.0; truncation] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.truncation == 0 {
            return Err(Error::InvalidConfig("horizon and truncation must be positive".into()));
        }
        if self.step_weights.len() != self.truncation {
            return Err(Error::InvalidConfig(alloc::format!(
                "{} step weights for truncation {}",
                self.step_weights.len(),
                self.truncation
            )));
        }
        if self.step_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidConfig("step weights must be finite and nonnegative".into()));
        }
        if !self.step_weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidConfig("at least one step weight must be positive".into()));
        }
        Ok(())
    }

    /// Segment lengths covering the horizon; the last one may be short.
    pub fn segments(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut left = self.horizon;
        while left > 0 {
            let len = left.min(self.truncation);
            out.push(len);
            left -= len;
        }
        out
    }
}

/// Everything carried across truncation boundaries within one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub theta: Vec<f64>,
    pub run: LearnedRun,
    /// `f(θ)` and `∇f(θ)` at the current iterate.
    pub loss: f64,
    pub grad: Vec<f64>,
    pub step: usize,
}

impl EpisodeState {
    pub fn start(opt: &LearnedOptimizer, problem: &mut Problem, theta0: &[f64]) -> Result<Self> {
        let run = opt.start(problem)?;
        let (loss, grad) = problem.loss_and_grad(theta0)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: 0 });
        }
        Ok(Self { theta: theta0.to_vec(), run, loss, grad, step: 0 })
    }
}

/// Step `t` of a segment: `θ_t`, `f(θ_t)`, `∇_t` and the update `g_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub update: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The recorded optimizer inputs `∇_0..∇_{T-1}`.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.grad.clone()).collect()
    }
}

/// Loss of one segment together with `∂L/∂φ` for each parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGradient {
    pub loss: f64,
    pub grads: Vec<LstmWeights>,
    pub trace: EpisodeTrace,
}

/// Forward recursion over one segment, optionally keeping per-step tapes.
fn forward(
    opt: &LearnedOptimizer,
    problem: &mut Problem,
    state: &mut EpisodeState,
    weights: &[f64],
    mut tapes: Option<&mut Vec<Vec<StepTape>>>,
) -> Result<(f64, EpisodeTrace)> {
    let groups = state.run.groups.clone();
    let mut total = 0.0;
    let mut trace = EpisodeTrace { steps: Vec::with_capacity(weights.len()) };
    for &w in weights {
        let mut update = vec![0.0; state.theta.len()];
        let mut step_tapes = Vec::with_capacity(groups.len());
        for ((group, phi), bank) in groups.groups().iter().zip(&opt.params).zip(state.run.banks.iter_mut()) {
            phi.check();
            let local: Vec<f64> = group.indices.iter().map(|&i| state.grad[i]).collect();
            let mut tape = StepTape::new(if tapes.is_some() { local.len() } else { 1 }, phi);
            let g = step_layers(phi, &local, bank, &mut tape, None, None);
            for (&i, u) in group.indices.iter().zip(g) {
                update[i] = u;
            }
            step_tapes.push(tape);
        }
        if let Some(coordinate) = update.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { rule: "lstm", coordinate });
        }
        if let Some(t) = tapes.as_mut() {
            t.push(step_tapes);
        }
        let theta_next: Vec<f64> = state.theta.iter().zip(&update).map(|(a, b)| a + b).collect();
        let (loss, grad) = problem.loss_and_grad(&theta_next).map_err(|e| match e {
            Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { step: state.step + 1 },
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: state.step + 1 });
        }
        let prev_theta = core::mem::replace(&mut state.theta, theta_next);
        let prev_grad = core::mem::replace(&mut state.grad, grad);
        trace.steps.push(StepRecord { theta: prev_theta, loss: state.loss, grad: prev_grad, update });
        state.loss = loss;
        state.step += 1;
        total += w * loss;
    }
    Ok((total, trace))
}

fn segment_weights(cfg: &UnrollConfig, segment: usize) -> &[f64] {
    assert!((1..=cfg.truncation).contains(&segment), "segment length {segment} is outside 1..={}", cfg.truncation);
    &cfg.step_weights[..segment]
}

/// Runs `segment` steps from `state`, returning `Σ w_t f(θ_t)` over
/// `t = 1..=segment` and the trace. `state` is advanced to the segment end.
pub fn unroll_loss(
    opt: &LearnedOptimizer,
    problem: &mut Problem,
    state: &mut EpisodeState,
    cfg: &UnrollConfig,
    segment: usize,
) -> Result<(f64, EpisodeTrace)> {
    forward(opt, problem, state, segment_weights(cfg, segment), None)
}

/// [`unroll_loss`] plus the gradient of the segment loss with respect to
/// every group's weights, treating each `∇_t` as a constant input.
///
/// With the gradients detached, `θ_s` depends on `g_t` (`s > t`) with unit
/// Jacobian, so the adjoint of `g_t` is `Σ_{s>t} w_s ∇_s`; the rest is
/// ordinary backpropagation through each coordinate's LSTM.
pub fn meta_gradient(
    opt: &LearnedOptimizer,
    problem: &mut Problem,
    state: &mut EpisodeState,
    cfg: &UnrollConfig,
    segment: usize,
) -> Result<MetaGradient> {
    let weights = segment_weights(cfg, segment);
    let groups = state.run.groups.clone();
    let mut tapes = Vec::with_capacity(segment);
    let (loss, trace) = forward(opt, problem, state, weights, Some(&mut tapes))?;

    // incoming adjoints of every g_t
    let n = state.theta.len();
    let mut adjoints = vec![vec![0.0; n]; segment];
    let mut acc = vec![0.0; n];
    for t in (0..segment).rev() {
        let next_grad = if t + 1 < segment { &trace.steps[t + 1].grad } else { &state.grad };
        for (a, g) in acc.iter_mut().zip(next_grad) {
            *a += weights[t] * g;
        }
        adjoints[t].copy_from_slice(&acc);
    }

    let mut grads = Vec::with_capacity(groups.len());
    for (gi, (group, phi)) in groups.groups().iter().zip(&opt.params).enumerate() {
        let w = &phi.weights;
        let hd = phi.n_hidden();
        let nx = w.layer1.in_dim;
        let m = group.indices.len();
        let mut out = w.zeros_like();
        let (mut dh1, mut dc1) = (vec![0.0; m * hd], vec![0.0; m * hd]);
        let (mut dh2, mut dc2) = (vec![0.0; m * hd], vec![0.0; m * hd]);
        let mut dz = vec![0.0; 4 * hd];
        let mut dx1 = vec![0.0; nx];
        let mut dx2 = vec![0.0; hd];
        let (mut dh_prev, mut dc_prev) = (vec![0.0; hd], vec![0.0; hd]);
        for t in (0..segment).rev() {
            let tape = &tapes[t][gi];
            for (k, &i) in group.indices.iter().enumerate() {
                let hs = k * hd..(k + 1) * hd;
                let dg = phi.output_scale * adjoints[t][i];
                let h2 = &tape.layer2.h_new[hs.clone()];
                for j in 0..hd {
                    out.w_out[j] += dg * h2[j];
                    dh2[k * hd + j] += dg * w.w_out[j];
                }
                out.b_out += dg;

                w.layer2.backward(
                    tape.layer2.record(k),
                    &dh2[hs.clone()],
                    &dc2[hs.clone()],
                    &mut out.layer2,
                    &mut dz,
                    &mut dx2,
                    &mut dh_prev,
                    &mut dc_prev,
                );
                dh2[hs.clone()].copy_from_slice(&dh_prev);
                dc2[hs.clone()].copy_from_slice(&dc_prev);
                for j in 0..hd {
                    dh1[k * hd + j] += dx2[j];
                }

                w.layer1.backward(
                    tape.layer1.record(k),
                    &dh1[hs.clone()],
                    &dc1[hs.clone()],
                    &mut out.layer1,
                    &mut dz,
                    &mut dx1,
                    &mut dh_prev,
                    &mut dc_prev,
                );
                dh1[hs.clone()].copy_from_slice(&dh_prev);
                dc1[hs].copy_from_slice(&dc_prev);
            }
        }
        grads.push(out);
    }
    Ok(MetaGradient { loss, grads, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{init_optimizer_params, InitConfig};
    use crate::numerics::RngStream;
    use crate::optimizee::{ProblemFamily, QuadraticFamily};

    fn setup(seed: u64) -> (LearnedOptimizer, Problem, Vec<f64>) {
        let mut rng = RngStream::new(seed);
        let params = init_optimizer_params(&mut rng, InitConfig { n_hidden: 4, ..Default::default() });
        let (problem, theta) = ProblemFamily::Quadratic(QuadraticFamily::new(3)).sample(&mut rng).unwrap();
        (LearnedOptimizer::shared(params), problem, theta)
    }

    #[test]
    fn zero_projection_keeps_theta() {
        let (opt, mut p, theta) = setup(1);
        let mut state = EpisodeState::start(&opt, &mut p, &theta).unwrap();
        let f0 = state.loss;
        let cfg = UnrollConfig::new(20, 5);
        let (loss, trace) = unroll_loss(&opt, &mut p, &mut state, &cfg, 5).unwrap();
        assert_eq!(state.theta, theta);
        assert_eq!(loss, 5.0 * f0);
        assert_eq!(trace.len(), 5);
    }

    #[test]
    fn last_step_weight_only() {
        let (mut opt, mut p, theta) = setup(2);
        opt.params[0].weights.w_out = RngStream::new(9).normal_vec(4, 0.5);
        let mut state = EpisodeState::start(&opt, &mut p, &theta).unwrap();
        let mut cfg = UnrollConfig::new(4, 4);
        cfg.step_weights = vec![0.0, 0.0, 0.0, 1.0];
        let (loss, _) = unroll_loss(&opt, &mut p, &mut state, &cfg, 4).unwrap();
        assert_eq!(loss, state.loss);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let (mut opt, mut p, theta) = setup(3);
        opt.params[0].weights.w_out = RngStream::new(4).normal_vec(4, 0.5);
        let mut state = EpisodeState::start(&opt, &mut p, &theta).unwrap();
        let mut cfg = UnrollConfig::new(3, 3);
        cfg.step_weights = vec![0.0; 3];
        let mg = meta_gradient(&opt, &mut p, &mut state, &cfg, 3).unwrap();
        assert!(mg.grads[0].flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn segments_cover_horizon() {
        assert_eq!(UnrollConfig::new(100, 20).segments(), vec![20; 5]);
        assert_eq!(UnrollConfig::new(45, 20).segments(), vec![20, 20, 5]);
        let mut bad = UnrollConfig::new(10, 2);
        bad.step_weights = vec![0.0, 0.0];
        assert!(bad.validate().is_err());
    }
}
