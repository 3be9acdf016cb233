use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::optimizer::{optimizer_step, CoordinateStateBank, LstmOptimizerParams};
use crate::optimizee::{Problem, ShapeMap, TensorKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterGroup {
    pub name: String,
    pub indices: Vec<usize>,
}

/// A partition of the optimizee coordinates `0..n` into named groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterGroupSpec {
    groups: Vec<ParameterGroup>,
    n_coords: usize,
}

impl ParameterGroupSpec {
    pub fn new(groups: Vec<ParameterGroup>) -> Result<Self> {
        let n_coords: usize = groups.iter().map(|g| g.indices.len()).sum();
        let mut seen = vec![false; n_coords];
        for group in &groups {
            if group.indices.is_empty() {
                return Err(Error::InvalidGroups(format!("group `{}` is empty", group.name)));
            }
            for &i in &group.indices {
                if i >= n_coords {
                    return Err(Error::InvalidGroups(format!(
                        "coordinate {i} in group `{}` is outside 0..{n_coords}",
                        group.name
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidGroups(format!("coordinate {i} is assigned twice")));
                }
                seen[i] = true;
            }
        }
        Ok(Self { groups, n_coords })
    }

    pub fn single(n_coords: usize) -> Self {
        Self { groups: vec![ParameterGroup { name: "all".into(), indices: (0..n_coords).collect() }], n_coords }
    }

    /// Weights in one group, biases in the other.
    pub fn by_tensor_kind(shapes: &ShapeMap) -> Result<Self> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for slot in shapes.slots() {
            match slot.kind {
                TensorKind::Weight => weights.extend(slot.range()),
                TensorKind::Bias => biases.extend(slot.range()),
            }
        }
        Self::new(vec![
            ParameterGroup { name: "weights".into(), indices: weights },
            ParameterGroup { name: "biases".into(), indices: biases },
        ])
    }

    pub fn groups(&self) -> &[ParameterGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_coords(&self) -> usize {
        self.n_coords
    }
}

/// Each group's coordinates run through that group's own parameters.
pub fn grouped_optimizer_step(
    groups: &ParameterGroupSpec,
    params: &[LstmOptimizerParams],
    grad: &[f64],
    banks: &mut [CoordinateStateBank],
) -> Result<Vec<f64>> {
    if groups.n_coords() != grad.len() {
        return Err(Error::InvalidGroups(format!(
            "groups cover {} coordinates, gradient has {}",
            groups.n_coords(),
            grad.len()
        )));
    }
    if params.len() != groups.len() || banks.len() != groups.len() {
        return Err(Error::InvalidGroups(format!(
            "{} groups but {} parameter sets and {} state banks",
            groups.len(),
            params.len(),
            banks.len()
        )));
    }
    let mut out = vec![0.0; grad.len()];
    for ((group, phi), bank) in groups.groups().iter().zip(params).zip(banks.iter_mut()) {
        let local: Vec<f64> = group.indices.iter().map(|&i| grad[i]).collect();
        let update = optimizer_step(phi, &local, bank);
        for (&i, u) in group.indices.iter().zip(update) {
            out[i] = u;
        }
    }
    Ok(out)
}

/// How coordinates are assigned to parameter sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupLayout {
    /// One parameter set for every coordinate.
    Shared,
    /// Weights and biases of an MLP optimizee get separate parameter sets.
    TensorKind,
    Explicit(ParameterGroupSpec),
}

impl GroupLayout {
    pub fn group_count(&self) -> usize {
        match self {
            Self::Shared => 1,
            Self::TensorKind => 2,
            Self::Explicit(spec) => spec.len(),
        }
    }

    pub fn resolve(&self, problem: &Problem) -> Result<ParameterGroupSpec> {
        match self {
            Self::Shared => Ok(ParameterGroupSpec::single(problem.dim())),
            Self::TensorKind => match problem {
                Problem::Mlp(m) => ParameterGroupSpec::by_tensor_kind(m.shape_map()),
                Problem::Quadratic(_) => Err(Error::InvalidGroups("tensor-kind groups need an MLP optimizee".into())),
            },
            Self::Explicit(spec) => {
                if spec.n_coords() == problem.dim() {
                    Ok(spec.clone())
                } else {
                    Err(Error::InvalidGroups(format!(
                        "explicit groups cover {} coordinates, problem has {}",
                        spec.n_coords(),
                        problem.dim()
                    )))
                }
            }
        }
    }
}
