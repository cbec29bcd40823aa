use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("parameter `{name}` = {value} out of range, expected {allowed}")]
    Range {
        name: &'static str,
        value: f64,
        allowed: &'static str,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("integration diverged at step {step} (t = {time}): {detail}")]
    IntegrationDiverged {
        step: usize,
        time: f64,
        detail: String,
    },

    #[error("all {n_traj} trajectories were discarded by postselection; use QT2 or a shorter horizon")]
    EmptyEnsemble { n_traj: usize },

    #[error("degenerate Gaussian state: rank {rank} < {particles} particles after {op}")]
    DegenerateState {
        op: &'static str,
        rank: usize,
        particles: usize,
    },

    #[error("jump has zero amplitude (<d†d> = {expectation:e})")]
    ZeroAmplitudeJump { expectation: f64 },

    #[error("interval [{a}, {b}] invalid for a chain of {len} sites")]
    InvalidInterval { a: usize, b: usize, len: usize },

    #[error("run at gamma = {gamma} did not reach a steady state")]
    NotSteady { gamma: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    allowed: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::Range {
            name,
            value,
            allowed,
        })
    }
}
