use alloc::vec::Vec;

use super::unroll::{meta_gradient, EpisodeState, UnrollConfig};
use crate::baselines::{BaselineConfig, BaselineKind, BaselineState};
use crate::lstm::LearnedOptimizer;
use crate::numerics::{norm, RngStream};
use crate::optimizee::{ProblemFamily, Split};
use crate::rule::{run_trajectory, UpdateRule};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTrainConfig {
    /// Step size of the ADAM meta-optimizer.
    pub meta_learning_rate: f64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub validation_problems: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Rescale each group's meta-gradient to at most this norm.
    pub clip_norm: Option<f64>,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        Self {
            meta_learning_rate: 1e-3,
            epochs: 20,
            episodes_per_epoch: 100,
            validation_problems: 20,
            patience: 5,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl MetaTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.episodes_per_epoch == 0 || self.validation_problems == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig("meta-training counts must be at least 1".into()));
        }
        if !(self.meta_learning_rate > 0.0 && self.meta_learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("meta learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One row per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    /// ADAM updates applied so far.
    pub meta_iterations: usize,
    /// Mean final loss of the epoch's completed training episodes.
    pub train_loss: f64,
    /// Mean final loss over the fixed validation problems.
    pub validation_loss: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTrainResult {
    pub optimizer: LearnedOptimizer,
    pub history: Vec<HistoryRow>,
    /// Index into `history` of the epoch whose snapshot was returned.
    pub best_epoch: usize,
}

impl MetaTrainResult {
    pub fn best_validation(&self) -> f64 {
        self.history[self.best_epoch].validation_loss
    }
}

/// Mean loss after `steps` steps over the validation problems; infinite if
/// any run diverged.
pub fn validation_loss(
    opt: &LearnedOptimizer,
    family: &ProblemFamily,
    n_problems: usize,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    let rule = UpdateRule::Learned(opt.clone());
    let mut total = 0.0;
    for index in 0..n_problems {
        let (mut problem, theta0) = family.sample_split(seed, Split::Validation, index)?;
        let run = run_trajectory(&rule, &mut problem, &theta0, steps)?;
        if run.diverged {
            return Ok(f64::INFINITY);
        }
        total += run.final_loss();
    }
    Ok(total / n_problems as f64)
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence { .. } | Error::NonFiniteLoss { .. })
}

/// Meta-trains `init` by truncated BPTT with one ADAM update per segment,
/// keeping the snapshot with the best validation loss.
pub fn meta_train(
    init: LearnedOptimizer,
    cfg: &MetaTrainConfig,
    ucfg: &UnrollConfig,
    family: &ProblemFamily,
) -> Result<MetaTrainResult> {
    cfg.validate()?;
    ucfg.validate()?;
    init.validate()?;
    let mut opt = init;
    let adam = BaselineConfig::new(BaselineKind::Adam, cfg.meta_learning_rate);
    let mut meta_states: Vec<BaselineState> =
        opt.params.iter().map(|p| BaselineState::new(adam, p.weights.len())).collect();
    let segments = ucfg.segments();

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, LearnedOptimizer)> = None;
    let mut meta_iterations = 0;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        let mut diverged = 0;
        let mut train_total = 0.0;
        for ep in 0..cfg.episodes_per_epoch {
            let index = epoch * cfg.episodes_per_epoch + ep;
            let (mut problem, theta0) = family.sample_split(cfg.seed, Split::Train, index)?;
            let mut state = match EpisodeState::start(&opt, &mut problem, &theta0) {
                Ok(s) => s,
                Err(e) if is_divergence(&e) => {
                    diverged += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut ok = true;
            for &segment in &segments {
                let mg = match meta_gradient(&opt, &mut problem, &mut state, ucfg, segment) {
                    Ok(mg) => mg,
                    Err(e) if is_divergence(&e) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                for ((phi, grad), meta) in opt.params.iter_mut().zip(&mg.grads).zip(meta_states.iter_mut()) {
                    let mut flat = grad.flatten();
                    if let Some(limit) = cfg.clip_norm {
                        let n = norm(&flat);
                        if n > limit {
                            flat.iter_mut().for_each(|g| *g *= limit / n);
                        }
                    }
                    let delta = match meta.update(&flat) {
                        Ok(d) => d,
                        Err(e) if is_divergence(&e) => {
                            ok = false;
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                    let mut w = phi.weights.flatten();
                    w.iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
                    phi.weights.assign_flat(&w)?;
                }
                if !ok {
                    break;
                }
                meta_iterations += 1;
            }
            if ok {
                train_total += state.loss;
            } else {
                diverged += 1;
            }
        }
        if diverged == cfg.episodes_per_epoch {
            return Err(Error::AllEpisodesDiverged { epoch, episodes: diverged });
        }
        let completed = cfg.episodes_per_epoch - diverged;
        let validation = validation_loss(&opt, family, cfg.validation_problems, ucfg.horizon, cfg.seed)?;
        history.push(HistoryRow {
            epoch,
            meta_iterations,
            train_loss: train_total / completed as f64,
            validation_loss: validation,
            diverged,
        });
        let improved = match &best {
            None => validation.is_finite(),
            Some((_, score, _)) => validation < *score,
        };
        if improved {
            best = Some((epoch, validation, opt.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, optimizer) = match best {
        Some((epoch, _, opt)) => (epoch, opt),
        None => (history.len() - 1, opt),
    };
    Ok(MetaTrainResult { optimizer, history, best_epoch })
}

/// One trial of the meta learning-rate search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrial {
    pub meta_learning_rate: f64,
    pub best_validation: f64,
}

/// Random search over the meta learning rate, log-uniform in `range`.
/// Every trial starts from `init`; the best validation score wins.
pub fn search_meta_learning_rate(
    init: &LearnedOptimizer,
    cfg: &MetaTrainConfig,
    ucfg: &UnrollConfig,
    family: &ProblemFamily,
    trials: usize,
    range: (f64, f64),
) -> Result<(MetaTrainResult, Vec<SearchTrial>)> {
    if trials == 0 || !(0.0 < range.0 && range.0 <= range.1) {
        return Err(Error::InvalidConfig("search needs at least one trial and a positive range".into()));
    }
    let mut rng = RngStream::new(cfg.seed).substream(0x5eac);
    let mut best: Option<MetaTrainResult> = None;
    let mut log = Vec::with_capacity(trials);
    for _ in 0..trials {
        let rate = rng.log_uniform(range.0, range.1);
        let trial_cfg = MetaTrainConfig { meta_learning_rate: rate, ..cfg.clone() };
        let result = match meta_train(init.clone(), &trial_cfg, ucfg, family) {
            Ok(r) => r,
            Err(Error::AllEpisodesDiverged { .. }) => {
                log.push(SearchTrial { meta_learning_rate: rate, best_validation: f64::INFINITY });
                continue;
            }
            Err(e) => return Err(e),
        };
        log.push(SearchTrial { meta_learning_rate: rate, best_validation: result.best_validation() });
        if best.as_ref().is_none_or(|b| result.best_validation() < b.best_validation()) {
            best = Some(result);
        }
    }
    let best = best.ok_or(Error::AllEpisodesDiverged { epoch: 0, episodes: cfg.episodes_per_epoch })?;
    Ok((best, log))
}
