//! A common driver for every update rule: baselines, the learned LSTM rule
//! and its memory-augmented variants.

use alloc::vec::Vec;

use crate::baselines::{BaselineConfig, BaselineState};
use crate::lstm::{CoordinateStateBank, LearnedOptimizer, LearnedRun};
use crate::memory::{ntm_bfgs_step, GacOptimizer, NtmOptimizer, NtmRun};
use crate::optimizee::Problem;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateRule {
    Baseline(BaselineConfig),
    Learned(LearnedOptimizer),
    Gac(GacOptimizer),
    Ntm(NtmOptimizer),
}

impl UpdateRule {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline(cfg) => cfg.kind.name(),
            Self::Learned(_) => "lstm",
            Self::Gac(_) => "lstm-gac",
            Self::Ntm(opt) => match opt.memory {
                crate::memory::MemoryMode::Dense { .. } => "ntm-bfgs",
                crate::memory::MemoryMode::History { .. } => "ntm-lbfgs",
            },
        }
    }

    /// Fresh per-run state for an optimization of `problem`.
    pub fn start(&self, problem: &Problem) -> Result<RuleState> {
        let n = problem.dim();
        Ok(match self {
            Self::Baseline(cfg) => RuleState::Baseline(BaselineState::new(*cfg, n)),
            Self::Learned(opt) => RuleState::Learned(opt.start(problem)?),
            Self::Gac(opt) => RuleState::Gac(CoordinateStateBank::zeros(n, opt.params.n_hidden())),
            Self::Ntm(opt) => RuleState::Ntm(opt.start(n)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleState {
    Baseline(BaselineState),
    Learned(LearnedRun),
    Gac(CoordinateStateBank),
    Ntm(NtmRun),
}

impl RuleState {
    /// The additive update `g_t` for gradient `grad`; non-finite updates are
    /// reported as divergence.
    pub fn update(&mut self, rule: &UpdateRule, grad: &[f64]) -> Result<Vec<f64>> {
        let out = match (self, rule) {
            (Self::Baseline(state), UpdateRule::Baseline(_)) => return state.update(grad),
            (Self::Learned(run), UpdateRule::Learned(opt)) => run.step(opt, grad)?,
            (Self::Gac(bank), UpdateRule::Gac(opt)) => opt.step(grad, bank),
            (Self::Ntm(run), UpdateRule::Ntm(opt)) => ntm_bfgs_step(opt, grad, run),
            _ => panic!("rule state does not belong to this rule"),
        };
        if let Some(coordinate) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { rule: rule.name(), coordinate });
        }
        Ok(out)
    }
}

/// Losses `f(θ_0), .., f(θ_steps)` of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub losses: Vec<f64>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trajectory has at least the initial loss")
    }

    pub fn steps(&self) -> usize {
        self.losses.len() - 1
    }
}

/// Runs `steps` updates from `theta0`. A divergent run is marked and its
/// remaining losses are infinite; other errors are returned.
pub fn run_trajectory(rule: &UpdateRule, problem: &mut Problem, theta0: &[f64], steps: usize) -> Result<Trajectory> {
    let mut state = rule.start(problem)?;
    let mut theta = theta0.to_vec();
    let mut losses = Vec::with_capacity(steps + 1);
    let mut diverged = false;
    for t in 0..=steps {
        let (loss, grad) = match problem.loss_and_grad(&theta) {
            Ok(lg) if lg.0.is_finite() => lg,
            Ok(_) | Err(Error::NonFiniteLoss { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        losses.push(loss);
        if t == steps {
            break;
        }
        match state.update(rule, &grad) {
            Ok(g) => theta.iter_mut().zip(&g).for_each(|(p, d)| *p += d),
            Err(Error::Divergence { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    losses.resize(steps + 1, f64::INFINITY);
    Ok(Trajectory { losses, diverged })
}
