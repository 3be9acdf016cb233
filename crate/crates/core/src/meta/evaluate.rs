use alloc::vec::Vec;

use crate::optimizee::{ProblemFamily, Split};
use crate::rule::{run_trajectory, Trajectory, UpdateRule};
use crate::Result;

/// Summary of `f(θ_t)` over problems at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
    /// Runs that had diverged by this step.
    pub diverged: usize,
}

/// Per-step summaries for `t = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub points: Vec<CurvePoint>,
    pub diverged_runs: usize,
}

impl LossCurve {
    pub fn mean_at(&self, step: usize) -> f64 {
        self.points[step].mean
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Per-step mean and quartiles across runs. Diverged runs carry infinite
/// losses; with `exclude_diverged` they are left out of the statistics.
pub fn summarize(runs: &[Trajectory], exclude_diverged: bool) -> LossCurve {
    assert!(!runs.is_empty(), "no runs to summarize");
    let steps = runs[0].losses.len();
    let kept: Vec<&Trajectory> = runs.iter().filter(|r| !(exclude_diverged && r.diverged)).collect();
    let mut points = Vec::with_capacity(steps);
    let mut column = Vec::with_capacity(runs.len());
    for t in 0..steps {
        column.clear();
        column.extend(kept.iter().map(|r| r.losses[t]));
        column.sort_by(|a, b| a.total_cmp(b));
        let diverged = runs.iter().filter(|r| !r.losses[t].is_finite()).count();
        let (mean, q25, q75) = if column.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let mean = column.iter().sum::<f64>() / column.len() as f64;
            (mean, quantile(&column, 0.25), quantile(&column, 0.75))
        };
        points.push(CurvePoint { step: t, mean, q25, q75, diverged });
    }
    LossCurve { points, diverged_runs: runs.iter().filter(|r| r.diverged).count() }
}

/// Runs `rule` on test problem `index`.
pub fn evaluate_problem(
    rule: &UpdateRule,
    family: &ProblemFamily,
    seed: u64,
    index: usize,
    steps: usize,
) -> Result<Trajectory> {
    let (mut problem, theta0) = family.sample_split(seed, Split::Test, index)?;
    run_trajectory(rule, &mut problem, &theta0, steps)
}

/// Mean loss curve of `rule` over `n_problems` freshly sampled test problems.
pub fn evaluate_optimizer(
    rule: &UpdateRule,
    family: &ProblemFamily,
    n_problems: usize,
    steps: usize,
    seed: u64,
    exclude_diverged: bool,
) -> Result<LossCurve> {
    assert!(n_problems >= 1, "need at least one problem");
    let runs = (0..n_problems).map(|i| evaluate_problem(rule, family, seed, i, steps)).collect::<Result<Vec<_>>>()?;
    Ok(summarize(&runs, exclude_diverged))
}
