//! Problem families: random quadratics and small MLP classifiers.

mod dataset;
mod mlp;
mod quadratic;

use alloc::sync::Arc;
use alloc::vec::Vec;

pub use dataset::{synthetic_dataset, Dataset, BLOB_STD};
pub use mlp::{Activation, MlpArchitecture, MlpProblemInstance, ShapeMap, TensorKind, TensorSlot};
pub use quadratic::QuadraticInstance;

use crate::numerics::RngStream;
use crate::Result;

/// One sampled objective.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Problem {
    Quadratic(QuadraticInstance),
    Mlp(MlpProblemInstance),
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.dim(),
            Self::Mlp(m) => m.dim(),
        }
    }

    /// Loss and gradient at `theta`. MLP problems draw a fresh minibatch on
    /// every call, so repeated calls form a deterministic batch sequence.
    pub fn loss_and_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Self::Quadratic(q) => Ok(q.loss_and_grad(theta)),
            Self::Mlp(m) => m.loss_and_grad(theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraticWeights {
    Gaussian,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFamily {
    pub dim: usize,
    pub weights: QuadraticWeights,
    pub init_std: f64,
}

impl QuadraticFamily {
    pub fn new(dim: usize) -> Self {
        Self { dim, weights: QuadraticWeights::Gaussian, init_std: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct MlpFamily {
    pub arch: MlpArchitecture,
    pub dataset: Arc<Dataset>,
    pub minibatch_size: usize,
    pub init_std: f64,
}

/// A distribution over problems together with the initial iterate.
#[derive(Debug, Clone)]
pub enum ProblemFamily {
    Quadratic(QuadraticFamily),
    Mlp(MlpFamily),
}

impl ProblemFamily {
    /// Samples a problem and `θ₀` from `rng`.
    pub fn sample(&self, rng: &mut RngStream) -> Result<(Problem, Vec<f64>)> {
        match self {
            Self::Quadratic(fam) => {
                let inst = match fam.weights {
                    QuadraticWeights::Gaussian => QuadraticInstance::sample(fam.dim, rng),
                    QuadraticWeights::Identity => QuadraticInstance::sample_identity(fam.dim, rng),
                };
                let theta = rng.normal_vec(fam.dim, fam.init_std);
                Ok((Problem::Quadratic(inst), theta))
            }
            Self::Mlp(fam) => {
                let batches = rng.substream(0);
                let inst = MlpProblemInstance::new(fam.arch.clone(), fam.dataset.clone(), fam.minibatch_size, batches)?;
                let theta = rng.normal_vec(inst.dim(), fam.init_std);
                Ok((Problem::Mlp(inst), theta))
            }
        }
    }

    /// Samples problem `index` of `split` under `seed`.
    pub fn sample_split(&self, seed: u64, split: Split, index: usize) -> Result<(Problem, Vec<f64>)> {
        self.sample(&mut split.stream(seed, index))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(fam) => fam.dim,
            Self::Mlp(fam) => fam.arch.shape_map().total(),
        }
    }
}

/// Disjoint seed spaces for the different uses of sampled problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
    Tuning,
}

impl Split {
    pub fn stream(self, seed: u64, index: usize) -> RngStream {
        let tag = match self {
            Self::Train => 1,
            Self::Validation => 2,
            Self::Test => 3,
            Self::Tuning => 4,
        };
        RngStream::new(seed).substream(tag).substream(index as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_reproducible_and_distinct() {
        let fam = ProblemFamily::Quadratic(QuadraticFamily::new(4));
        let (a, ta) = fam.sample_split(1, Split::Test, 3).unwrap();
        let (b, tb) = fam.sample_split(1, Split::Test, 3).unwrap();
        let (_, tc) = fam.sample_split(1, Split::Train, 3).unwrap();
        match (a, b) {
            (Problem::Quadratic(a), Problem::Quadratic(b)) => assert_eq!(a, b),
            _ => unreachable!(),
        }
        assert_eq!(ta, tb);
        assert_ne!(ta, tc);
    }
}
