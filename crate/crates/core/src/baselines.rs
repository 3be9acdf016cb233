//! Hand-designed update rules and learning-rate tuning.

use alloc::vec;
use alloc::vec::Vec;

use crate::optimizee::{ProblemFamily, Split};
use crate::rule::{run_trajectory, UpdateRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Sgd,
    Nag,
    Rmsprop,
    Adam,
}

impl BaselineKind {
    pub const ALL: [Self; 4] = [Self::Sgd, Self::Nag, Self::Rmsprop, Self::Adam];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Nag => "nag",
            Self::Rmsprop => "rmsprop",
            Self::Adam => "adam",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Hyperparameters other than the learning rate; never tuned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    /// NAG momentum.
    pub momentum: f64,
    /// RMSprop squared-gradient decay.
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self { momentum: 0.9, rho: 0.9, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub learning_rate: f64,
    pub hyper: Hyperparameters,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, learning_rate: f64) -> Self {
        Self { kind, learning_rate, hyper: Hyperparameters::default() }
    }
}

/// A baseline rule with its accumulators for one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    config: BaselineConfig,
    step: u64,
    /// NAG velocity, RMSprop mean square, or ADAM first moment.
    first: Vec<f64>,
    /// ADAM second moment.
    second: Vec<f64>,
}

impl BaselineState {
    pub fn new(config: BaselineConfig, dim: usize) -> Self {
        let second = if config.kind == BaselineKind::Adam { vec![0.0; dim] } else { Vec::new() };
        let first = if config.kind == BaselineKind::Sgd { Vec::new() } else { vec![0.0; dim] };
        Self { config, step: 0, first, second }
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// The additive update `θ' − θ` for gradient `grad`.
    pub fn update(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        let BaselineConfig { kind, learning_rate: lr, hyper: h } = self.config;
        if !self.first.is_empty() {
            assert_eq!(grad.len(), self.first.len(), "gradient does not match optimizer state");
        }
        self.step += 1;
        let out: Vec<f64> = match kind {
            BaselineKind::Sgd => grad.iter().map(|g| -lr * g).collect(),
            BaselineKind::Nag => {
                // Lookahead-free form: v' = μv − αg, Δθ = μv' − αg.
                let mu = h.momentum;
                self.first
                    .iter_mut()
                    .zip(grad)
                    .map(|(v, &g)| {
                        *v = mu * *v - lr * g;
                        mu * *v - lr * g
                    })
                    .collect()
            }
            BaselineKind::Rmsprop => self
                .first
                .iter_mut()
                .zip(grad)
                .map(|(a, &g)| {
                    *a = h.rho * *a + (1.0 - h.rho) * g * g;
                    -lr * g / (libm::sqrt(*a) + h.epsilon)
                })
                .collect(),
            BaselineKind::Adam => {
                let t = self.step as f64;
                let c1 = 1.0 - libm::pow(h.beta1, t);
                let c2 = 1.0 - libm::pow(h.beta2, t);
                self.first
                    .iter_mut()
                    .zip(self.second.iter_mut())
                    .zip(grad)
                    .map(|((m, v), &g)| {
                        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
                        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
                        -lr * (*m / c1) / (libm::sqrt(*v / c2) + h.epsilon)
                    })
                    .collect()
            }
        };
        if let Some(coordinate) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { rule: kind.name(), coordinate });
        }
        Ok(out)
    }
}

/// One step of the rule: returns `θ'`.
pub fn baseline_step(state: &mut BaselineState, theta: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(theta.len(), grad.len(), "θ and gradient disagree on dimension");
    let delta = state.update(grad)?;
    Ok(theta.iter().zip(&delta).map(|(t, d)| t + d).collect())
}

/// `10^k` for `k = -4..=1`.
pub fn default_grid() -> Vec<f64> {
    (-4..=1).map(|k| libm::pow(10.0, k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateScore {
    pub rate: f64,
    /// Mean loss after the last step; infinite if any run diverged.
    pub mean_final_loss: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub kind: BaselineKind,
    pub best_rate: f64,
    pub scores: Vec<RateScore>,
}

/// Runs `steps` optimization steps on `budget` problems from the tuning
/// split for every rate, scoring each by mean final loss.
pub fn score_rates(
    kind: BaselineKind,
    hyper: Hyperparameters,
    family: &ProblemFamily,
    grid: &[f64],
    budget: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<RateScore>> {
    let mut scores = Vec::with_capacity(grid.len());
    for &rate in grid {
        let rule = UpdateRule::Baseline(BaselineConfig { kind, learning_rate: rate, hyper });
        let mut total = 0.0;
        let mut diverged = 0;
        for index in 0..budget {
            let (mut problem, theta) = family.sample_split(seed, Split::Tuning, index)?;
            let run = run_trajectory(&rule, &mut problem, &theta, steps)?;
            if run.diverged {
                diverged += 1;
            }
            total += run.final_loss();
        }
        let mean = if diverged > 0 { f64::INFINITY } else { total / budget as f64 };
        scores.push(RateScore { rate, mean_final_loss: mean, diverged });
    }
    Ok(scores)
}

/// Lowest mean final loss; ties go to the smaller rate.
pub fn select_rate(scores: &[RateScore]) -> Result<f64> {
    let mut best: Option<&RateScore> = None;
    for s in scores.iter().filter(|s| s.mean_final_loss.is_finite()) {
        best = match best {
            Some(b)
                if b.mean_final_loss < s.mean_final_loss
                    || (b.mean_final_loss == s.mean_final_loss && b.rate <= s.rate) =>
            {
                Some(b)
            }
            _ => Some(s),
        };
    }
    best.map(|s| s.rate)
        .ok_or_else(|| Error::AllRatesDiverged { per_rate: scores.iter().map(|s| (s.rate, s.diverged)).collect() })
}

/// Grid search over `grid`.
pub fn tune_learning_rate(
    kind: BaselineKind,
    family: &ProblemFamily,
    grid: &[f64],
    budget: usize,
    steps: usize,
    seed: u64,
) -> Result<TuneReport> {
    assert!(!grid.is_empty(), "learning-rate grid is empty");
    let scores = score_rates(kind, Hyperparameters::default(), family, grid, budget, steps, seed)?;
    let best_rate = select_rate(&scores)?;
    Ok(TuneReport { kind, best_rate, scores })
}

/// Grid search followed by a half-decade refinement around the winner.
pub fn tune_learning_rate_refined(
    kind: BaselineKind,
    family: &ProblemFamily,
    grid: &[f64],
    budget: usize,
    steps: usize,
    seed: u64,
) -> Result<TuneReport> {
    let mut report = tune_learning_rate(kind, family, grid, budget, steps, seed)?;
    let half_decade = libm::sqrt(10.0);
    let refine = [report.best_rate / half_decade, report.best_rate * half_decade];
    let extra = score_rates(kind, Hyperparameters::default(), family, &refine, budget, steps, seed)?;
    report.scores.extend(extra);
    report.scores.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    report.best_rate = select_rate(&report.scores)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn sgd_closed_form() {
        let mut s = BaselineState::new(BaselineConfig::new(BaselineKind::Sgd, 0.1), 1);
        let next = baseline_step(&mut s, &[1.0], &[2.0]).unwrap();
        assert!((next[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_learning_rate_times_sign() {
        let mut cfg = BaselineConfig::new(BaselineKind::Adam, 0.01);
        cfg.hyper.epsilon = 1e-10;
        let mut s = BaselineState::new(cfg, 3);
        let d = s.update(&[3.0, -0.2, 1e-3]).unwrap();
        for (v, sign) in d.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - sign * 0.01).abs() <= 1e-6 * 0.01, "{v}");
        }
    }

    #[test]
    fn rmsprop_first_step() {
        let mut cfg = BaselineConfig::new(BaselineKind::Rmsprop, 0.01);
        cfg.hyper.epsilon = 1e-12;
        let mut s = BaselineState::new(cfg, 2);
        let d = s.update(&[5.0, -0.5]).unwrap();
        let expected = 0.01 / libm::sqrt(0.1);
        assert!((d[0] + expected).abs() < 1e-9);
        assert!((d[1] - expected).abs() < 1e-9);
        assert!((expected / 0.01 - 3.1623).abs() < 1e-4);
    }

    #[test]
    fn nag_matches_momentum_recursion() {
        let mut s = BaselineState::new(BaselineConfig::new(BaselineKind::Nag, 0.1), 1);
        let d1 = s.update(&[1.0]).unwrap()[0];
        // v1 = -0.1; Δ = 0.9·(-0.1) - 0.1
        assert!((d1 + 0.19).abs() < 1e-15);
        let d2 = s.update(&[0.0]).unwrap()[0];
        // v2 = 0.9·v1 = -0.09; Δ = 0.9·v2
        assert!((d2 + 0.081).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        for kind in BaselineKind::ALL {
            let mut s = BaselineState::new(BaselineConfig::new(kind, 0.3), 4);
            let theta = [1.0, -2.0, 3.5, 0.0];
            assert_eq!(baseline_step(&mut s, &theta, &[0.0; 4]).unwrap(), theta.to_vec(), "{kind:?}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = BaselineState::new(BaselineConfig::new(BaselineKind::Sgd, 1e300), 1);
        assert!(matches!(s.update(&[1e300]), Err(Error::Divergence { rule: "sgd", .. })));
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = RngStream::new(12);
        let perm = [2usize, 0, 3, 1];
        for kind in BaselineKind::ALL {
            let mut a = BaselineState::new(BaselineConfig::new(kind, 0.05), 4);
            let mut b = a.clone();
            for _ in 0..5 {
                let g = rng.normal_vec(4, 1.0);
                let pg: Vec<f64> = perm.iter().map(|&i| g[i]).collect();
                let da = a.update(&g).unwrap();
                let db = b.update(&pg).unwrap();
                let pda: Vec<f64> = perm.iter().map(|&i| da[i]).collect();
                assert_eq!(pda, db);
            }
        }
    }

    #[test]
    fn tie_breaks_to_smaller_rate() {
        let scores = [
            RateScore { rate: 0.5, mean_final_loss: 1.0, diverged: 0 },
            RateScore { rate: 0.1, mean_final_loss: 1.0, diverged: 0 },
            RateScore { rate: 1.0, mean_final_loss: 2.0, diverged: 0 },
        ];
        assert_eq!(select_rate(&scores).unwrap(), 0.1);
        let diverged = [RateScore { rate: 1.0, mean_final_loss: f64::INFINITY, diverged: 3 }];
        assert!(matches!(select_rate(&diverged), Err(Error::AllRatesDiverged { .. })));
    }
}
