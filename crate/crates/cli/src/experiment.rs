//! The verbs: tuning, meta-training, evaluation, traces and sweeps.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use metaopt_core::analysis::{snapshot_at, trace_coordinate_updates, update_response_sweep};
use metaopt_core::baselines::{tune_learning_rate, tune_learning_rate_refined, BaselineConfig, TuneReport};
use metaopt_core::lstm::{init_optimizer_params, InitConfig, LearnedOptimizer};
use metaopt_core::memory::{GacOptimizer, GacSpec, MemoryMode, NtmOptimizer};
use metaopt_core::meta::{evaluate_problem, meta_train, search_meta_learning_rate, summarize, LossCurve};
use metaopt_core::optimizee::{ProblemFamily, Split};
use metaopt_core::rule::UpdateRule;
use metaopt_core::RngStream;

use crate::config::{ExperimentConfig, RateSpec, RosterEntry};
use crate::format::{self, Variant};
use crate::{csv, CliError, ConfigError, Result};

/// Substream of the master seed that initializes learned optimizers.
const INIT_STREAM: u64 = 6;

pub const WORKERS_VAR: &str = "METAOPT_WORKERS";

/// Thread pool for fanning out independent problems.
pub struct Workers(rayon::ThreadPool);

impl Workers {
    pub fn new(threads: usize) -> Self {
        Self(rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool"))
    }

    /// Reads the worker count from `METAOPT_WORKERS`; unset means one per CPU.
    pub fn from_env() -> Result<Self> {
        match std::env::var(WORKERS_VAR) {
            Err(_) => Ok(Self::new(0)),
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Self::new(n)),
                _ => Err(ConfigError::general(format!("{WORKERS_VAR} must be a positive integer, found `{v}`")).into()),
            },
        }
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        self.0.install(f)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|cause| CliError::Io { path: dir.to_owned(), cause })?;
    }
    std::fs::write(path, contents).map_err(|cause| CliError::Io { path: path.to_owned(), cause })
}

pub fn save_optimizer(path: &Path, rule: &UpdateRule) -> Result<()> {
    let text = format::serialize(rule).map_err(|cause| CliError::Format { path: path.to_owned(), cause })?;
    write(path, &text)
}

pub fn load_optimizer(path: &Path) -> Result<UpdateRule> {
    let text = std::fs::read_to_string(path).map_err(|cause| CliError::Io { path: path.to_owned(), cause })?;
    format::deserialize(&text).map_err(|cause| CliError::Format { path: path.to_owned(), cause })
}

/// A fresh optimizer of the configured architecture.
pub fn initial_optimizer(cfg: &ExperimentConfig) -> UpdateRule {
    let a = &cfg.architecture;
    let mut rng = RngStream::new(cfg.seed).substream(INIT_STREAM);
    let init = InitConfig {
        n_hidden: a.n_hidden,
        encoding: a.encoding,
        init_std: a.init_std,
        forget_bias: a.forget_bias,
        output_scale: a.output_scale,
    };
    let gac = GacSpec::leading(a.gac_cells);
    match a.variant {
        Variant::Plain => {
            let params = (0..a.layout.group_count()).map(|_| init_optimizer_params(&mut rng, init)).collect();
            UpdateRule::Learned(LearnedOptimizer { layout: a.layout.clone(), params })
        }
        Variant::Gac => UpdateRule::Gac(GacOptimizer { params: init_optimizer_params(&mut rng, init), gac }),
        Variant::NtmBfgs | Variant::NtmLbfgs => {
            let memory = if a.variant == Variant::NtmBfgs {
                MemoryMode::Dense { base_scale: a.memory_scale }
            } else {
                MemoryMode::History { base_scale: a.memory_scale, history_len: a.history_len }
            };
            let mut ntm = NtmOptimizer::init(&mut rng, a.n_hidden, a.encoding, a.init_std, gac, memory);
            ntm.controller.output_scale = a.output_scale;
            UpdateRule::Ntm(ntm)
        }
    }
}

/// Writes the untrained optimizer; the only way to obtain non-plain variants.
pub fn init(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = cfg.optimizer_path();
    save_optimizer(&path, &initial_optimizer(cfg))?;
    Ok(path)
}

/// Tunes every roster baseline marked `tune`; writes `tuning.csv`.
pub fn tune(cfg: &ExperimentConfig, family: &ProblemFamily, workers: &Workers) -> Result<Vec<(String, TuneReport)>> {
    let jobs: Vec<_> = cfg
        .roster
        .iter()
        .filter_map(|(name, e)| match e {
            RosterEntry::Baseline { kind, rate: RateSpec::Tune } => Some((name.clone(), *kind)),
            _ => None,
        })
        .collect();
    let t = &cfg.tuning;
    let reports = workers.install(|| {
        jobs.par_iter()
            .map(|(name, kind)| {
                let report = if t.refine {
                    tune_learning_rate_refined(*kind, family, &t.grid, t.budget, t.steps, cfg.seed)
                } else {
                    tune_learning_rate(*kind, family, &t.grid, t.budget, t.steps, cfg.seed)
                };
                report.map(|r| (name.clone(), r))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    write(&cfg.output.join("tuning.csv"), &csv::tuning(&reports))?;
    Ok(reports)
}

/// The roster as update rules, with tuned rates filled in.
pub fn resolve_roster(cfg: &ExperimentConfig, tuned: &[(String, TuneReport)]) -> Result<Vec<(String, UpdateRule)>> {
    cfg.roster
        .iter()
        .map(|(name, entry)| {
            let rule = match entry {
                RosterEntry::Baseline { kind, rate } => {
                    let rate = match rate {
                        RateSpec::Fixed(r) => *r,
                        RateSpec::Tune => {
                            tuned.iter().find(|(n, _)| n == name).expect("every tuned entry was tuned").1.best_rate
                        }
                    };
                    UpdateRule::Baseline(BaselineConfig::new(*kind, rate))
                }
                RosterEntry::Trained => {
                    let path = cfg.optimizer_path();
                    if !path.is_file() {
                        return Err(CliError::Missing(format!(
                            "roster entry `{name}` needs {}; run meta-train first",
                            path.display()
                        )));
                    }
                    load_optimizer(&path)?
                }
                RosterEntry::Learned(path) => load_optimizer(path)?,
            };
            Ok((name.clone(), rule))
        })
        .collect()
}

/// Loss curve of `rule` over the configured test problems.
pub fn evaluate_rule(
    rule: &UpdateRule,
    family: &ProblemFamily,
    cfg: &ExperimentConfig,
    workers: &Workers,
) -> Result<LossCurve> {
    let runs = workers.install(|| {
        (0..cfg.test_problems)
            .into_par_iter()
            .map(|i| evaluate_problem(rule, family, cfg.seed, i, cfg.steps))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(summarize(&runs, cfg.exclude_diverged))
}

/// Evaluates the whole roster; writes `tuning.csv` and `curves.csv`.
pub fn evaluate(cfg: &ExperimentConfig, workers: &Workers) -> Result<Vec<(String, LossCurve)>> {
    let family = cfg.problem_family()?;
    let tuned = tune(cfg, &family, workers)?;
    let rules = resolve_roster(cfg, &tuned)?;
    let mut curves = Vec::with_capacity(rules.len());
    for (name, rule) in &rules {
        curves.push((name.clone(), evaluate_rule(rule, &family, cfg, workers)?));
    }
    write(&cfg.output.join("curves.csv"), &csv::curves(&curves))?;
    if !curves.is_empty() && curves.iter().all(|(_, c)| c.diverged_runs == cfg.test_problems) {
        let names: Vec<_> = curves.iter().map(|(n, _)| n.as_str()).collect();
        return Err(CliError::Diverged(format!("{} of {}", cfg.test_problems, names.join(", "))));
    }
    Ok(curves)
}

fn require_plain(cfg: &ExperimentConfig, what: &str) -> Result<()> {
    if cfg.architecture.variant == Variant::Plain {
        Ok(())
    } else {
        Err(ConfigError::general(format!(
            "`optimizer.variant = {}`: {what} supports only the plain variant",
            cfg.architecture.variant.name()
        ))
        .into())
    }
}

/// Meta-trains from a fresh optimizer; writes `history.csv`, `search.csv`
/// when a search is configured, and the optimizer file.
pub fn train(cfg: &ExperimentConfig) -> Result<LearnedOptimizer> {
    require_plain(cfg, "meta-training")?;
    let family = cfg.problem_family()?;
    let UpdateRule::Learned(init) = initial_optimizer(cfg) else { unreachable!() };
    let result = match &cfg.search {
        None => meta_train(init, &cfg.meta, &cfg.unroll, &family)?,
        Some(s) => {
            let (best, trials) = search_meta_learning_rate(&init, &cfg.meta, &cfg.unroll, &family, s.trials, s.range)?;
            write(&cfg.output.join("search.csv"), &csv::search(&trials))?;
            best
        }
    };
    write(&cfg.output.join("history.csv"), &csv::history(&result.history))?;
    let rule = UpdateRule::Learned(result.optimizer);
    save_optimizer(&cfg.optimizer_path(), &rule)?;
    let UpdateRule::Learned(opt) = rule else { unreachable!() };
    Ok(opt)
}

fn learned_by_name(rules: &[(String, UpdateRule)], name: &str) -> Result<LearnedOptimizer> {
    match rules.iter().find(|(n, _)| n == name).map(|(_, r)| r) {
        Some(UpdateRule::Learned(opt)) => Ok(opt.clone()),
        Some(other) => Err(ConfigError::general(format!(
            "`{name}` is a {} optimizer; traces and sweeps need a plain one",
            other.name()
        ))
        .into()),
        None => Err(ConfigError::general(format!("`{name}` is not in the roster")).into()),
    }
}

/// Writes `trace.csv`: the learned optimizer drives the trajectory while
/// every roster baseline proposes updates from the same gradients.
pub fn trace(cfg: &ExperimentConfig, workers: &Workers) -> Result<PathBuf> {
    let spec = cfg.trace.as_ref().ok_or_else(|| ConfigError::general("missing [trace] section"))?;
    let family = cfg.problem_family()?;
    if let Some(&c) = spec.coords.iter().find(|&&c| c >= family.dim()) {
        return Err(ConfigError::general(format!("`trace.coords`: {c} is outside 0..{}", family.dim())).into());
    }
    let tuned = tune(cfg, &family, workers)?;
    let rules = resolve_roster(cfg, &tuned)?;
    let opt = learned_by_name(&rules, &spec.optimizer)?;
    let mut names = vec![spec.optimizer.clone()];
    let mut baselines = Vec::new();
    for (name, rule) in &rules {
        if let UpdateRule::Baseline(b) = rule {
            names.push(name.clone());
            baselines.push(*b);
        }
    }
    let (mut problem, theta0) = family.sample_split(cfg.seed, Split::Test, spec.problem)?;
    let rows = trace_coordinate_updates(&opt, &baselines, &mut problem, &theta0, &spec.coords, spec.steps)?;
    let path = cfg.output.join("trace.csv");
    write(&path, &csv::trace(&names, &rows))?;
    Ok(path)
}

/// Writes `sweep.csv`: the update proposed to one coordinate as a function
/// of its gradient, from the state reached after `sweep.step` steps.
pub fn sweep(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| ConfigError::general("missing [sweep] section"))?;
    let family = cfg.problem_family()?;
    if spec.coord >= family.dim() {
        return Err(
            ConfigError::general(format!("`sweep.coord`: {} is outside 0..{}", spec.coord, family.dim())).into()
        );
    }
    let rules = resolve_roster_learned_only(cfg)?;
    let opt = learned_by_name(&rules, &spec.optimizer)?;
    let (mut problem, theta0) = family.sample_split(cfg.seed, Split::Test, spec.problem)?;
    let snap = snapshot_at(&opt, &mut problem, &theta0, spec.step)?;
    let points = update_response_sweep(&opt, &snap.run, spec.coord, &spec.grid())?;
    let path = cfg.output.join("sweep.csv");
    write(&path, &csv::sweep(&points))?;
    Ok(path)
}

fn resolve_roster_learned_only(cfg: &ExperimentConfig) -> Result<Vec<(String, UpdateRule)>> {
    let learned = ExperimentConfig {
        roster: cfg.roster.iter().filter(|(_, e)| !matches!(e, RosterEntry::Baseline { .. })).cloned().collect(),
        ..cfg.clone()
    };
    resolve_roster(&learned, &[])
}

/// Meta-trains when the roster asks for a trained optimizer, then evaluates,
/// and emits traces and sweeps when configured.
pub fn run(cfg: &ExperimentConfig, workers: &Workers) -> Result<()> {
    if cfg.roster.iter().any(|(_, e)| matches!(e, RosterEntry::Trained)) {
        train(cfg)?;
    }
    evaluate(cfg, workers)?;
    if cfg.trace.is_some() {
        trace(cfg, workers)?;
    }
    if cfg.sweep.is_some() {
        sweep(cfg)?;
    }
    Ok(())
}
