//! Update traces along a shared trajectory and update-versus-gradient sweeps.

use alloc::vec::Vec;

use crate::baselines::{BaselineConfig, BaselineState};
use crate::lstm::{optimizer_step, LearnedOptimizer, LearnedRun};
use crate::optimizee::Problem;
use crate::{Error, Result};

/// Updates proposed to one coordinate at one step. `updates[0]` is the
/// learned rule, followed by the baselines in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub coord: usize,
    /// 1-based.
    pub step: usize,
    pub grad: f64,
    pub updates: Vec<f64>,
}

/// Drives the optimizee with the learned rule and records, for each listed
/// coordinate, what each baseline would have proposed from the same gradient.
/// Baselines keep their own accumulators along the trajectory but never move θ.
pub fn trace_coordinate_updates(
    opt: &LearnedOptimizer,
    baselines: &[BaselineConfig],
    problem: &mut Problem,
    theta0: &[f64],
    coords: &[usize],
    steps: usize,
) -> Result<Vec<TraceRow>> {
    let n = problem.dim();
    if let Some(&bad) = coords.iter().find(|&&c| c >= n) {
        return Err(Error::InvalidConfig(alloc::format!("coordinate {bad} is outside 0..{n}")));
    }
    let mut run = opt.start(problem)?;
    let mut states: Vec<BaselineState> = baselines.iter().map(|c| BaselineState::new(*c, n)).collect();
    let mut theta = theta0.to_vec();
    let mut rows = Vec::with_capacity(steps * coords.len());
    for step in 1..=steps {
        let (_, grad) = problem.loss_and_grad(&theta)?;
        let learned = run.step(opt, &grad)?;
        let proposals = states.iter_mut().map(|s| s.update(&grad)).collect::<Result<Vec<_>>>()?;
        for &coord in coords {
            let mut updates = Vec::with_capacity(1 + proposals.len());
            updates.push(learned[coord]);
            updates.extend(proposals.iter().map(|p| p[coord]));
            rows.push(TraceRow { coord, step, grad: grad[coord], updates });
        }
        theta.iter_mut().zip(&learned).for_each(|(p, d)| *p += d);
    }
    Ok(rows)
}

/// Optimizer state just before step `step + 1`, with the gradient it is about to consume.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub theta: Vec<f64>,
    pub grad: Vec<f64>,
    pub run: LearnedRun,
}

/// Runs `step` learned updates from `theta0` and freezes the state.
pub fn snapshot_at(opt: &LearnedOptimizer, problem: &mut Problem, theta0: &[f64], step: usize) -> Result<Snapshot> {
    let mut run = opt.start(problem)?;
    let mut theta = theta0.to_vec();
    for _ in 0..step {
        let (_, grad) = problem.loss_and_grad(&theta)?;
        let g = run.step(opt, &grad)?;
        theta.iter_mut().zip(&g).for_each(|(p, d)| *p += d);
    }
    let (_, grad) = problem.loss_and_grad(&theta)?;
    Ok(Snapshot { step, theta, grad, run })
}

/// The update the frozen optimizer would propose to `coord` for each
/// gradient value in `grid`. The snapshot is never modified.
pub fn update_response_sweep(
    opt: &LearnedOptimizer,
    snapshot: &LearnedRun,
    coord: usize,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("sweep grid must be finite and sorted".into()));
    }
    let (gi, local) = snapshot
        .groups
        .groups()
        .iter()
        .enumerate()
        .find_map(|(gi, g)| g.indices.iter().position(|&i| i == coord).map(|k| (gi, k)))
        .ok_or_else(|| Error::InvalidConfig(alloc::format!("coordinate {coord} is not in any group")))?;
    let phi = &opt.params[gi];
    let frozen = snapshot.banks[gi].gather(&[local]);
    Ok(grid
        .iter()
        .map(|&g| {
            let mut bank = frozen.clone();
            (g, optimizer_step(phi, &[g], &mut bank)[0])
        })
        .collect())
}
