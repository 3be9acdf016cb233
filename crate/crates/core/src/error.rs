use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("objective is not finite when probing coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },

    #[error("gradient coordinate {coordinate} is not finite ({value})")]
    NonFiniteGradient { coordinate: usize, value: f64 },

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("{rule} update diverged at coordinate {coordinate}")]
    Divergence { rule: &'static str, coordinate: usize },

    #[error("every learning rate diverged: {}", format_rates(.per_rate))]
    AllRatesDiverged { per_rate: Vec<(f64, usize)> },

    #[error("all {episodes} episodes of epoch {epoch} diverged")]
    AllEpisodesDiverged { epoch: usize, episodes: usize },

    #[error("invalid parameter groups: {0}")]
    InvalidGroups(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("weight payload has {found} values, expected {expected}")]
    PayloadLength { expected: usize, found: usize },
}

fn format_rates(per_rate: &[(f64, usize)]) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    for (i, (rate, diverged)) in per_rate.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "rate {rate:e}: {diverged} diverged");
    }
    out
}
