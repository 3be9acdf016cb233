//! Meta-training: truncated unrolls, the detached-gradient meta-gradient,
//! the training loop with early stopping, and evaluation.

mod evaluate;
mod train;
mod unroll;

pub use evaluate::{evaluate_optimizer, evaluate_problem, quantile, summarize, CurvePoint, LossCurve};
pub use train::{
    meta_train, search_meta_learning_rate, validation_loss, HistoryRow, MetaTrainConfig, MetaTrainResult, SearchTrial,
};
pub use unroll::{meta_gradient, unroll_loss, EpisodeState, EpisodeTrace, MetaGradient, StepRecord, UnrollConfig};
