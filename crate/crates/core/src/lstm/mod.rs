//! The coordinatewise two-layer LSTM update rule.
//!
//! One set of weights is shared by every coordinate of the optimizee while
//! each coordinate keeps its own recurrent state, so the rule is equivariant
//! to any reordering of the parameters.

mod cell;
mod groups;
mod optimizer;

use alloc::vec::Vec;

pub use cell::{lstm_cell_backward, lstm_cell_forward, CellGradients, LstmLayerParams};
pub use groups::{grouped_optimizer_step, GroupLayout, ParameterGroup, ParameterGroupSpec};
pub use optimizer::{
    init_optimizer_params, optimizer_step, CoordinateStateBank, InitConfig, LstmOptimizerParams, LstmWeights,
};

pub(crate) use optimizer::{step_layers, StepTape};

use crate::optimizee::Problem;
use crate::{Error, Result};

/// Learned update rule together with its coordinate-to-parameter assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedOptimizer {
    pub layout: GroupLayout,
    /// One parameter set per group, in group order.
    pub params: Vec<LstmOptimizerParams>,
}

impl LearnedOptimizer {
    pub fn shared(params: LstmOptimizerParams) -> Self {
        Self { layout: GroupLayout::Shared, params: alloc::vec![params] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.layout.group_count() {
            return Err(Error::InvalidGroups(alloc::format!(
                "layout has {} groups but {} parameter sets were given",
                self.layout.group_count(),
                self.params.len()
            )));
        }
        Ok(())
    }

    /// Fresh zero states for a run on `problem`.
    pub fn start(&self, problem: &Problem) -> Result<LearnedRun> {
        self.validate()?;
        let groups = self.layout.resolve(problem)?;
        let banks = groups
            .groups()
            .iter()
            .zip(&self.params)
            .map(|(g, p)| CoordinateStateBank::zeros(g.indices.len(), p.n_hidden()))
            .collect();
        Ok(LearnedRun { groups, banks })
    }
}

/// Per-episode state of a [`LearnedOptimizer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedRun {
    pub groups: ParameterGroupSpec,
    pub banks: Vec<CoordinateStateBank>,
}

impl LearnedRun {
    pub fn step(&mut self, opt: &LearnedOptimizer, grad: &[f64]) -> Result<Vec<f64>> {
        grouped_optimizer_step(&self.groups, &opt.params, grad, &mut self.banks)
    }
}
