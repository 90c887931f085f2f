use thiserror::Error;

use crate::sdp::SdpStatus;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs violate the operation contract (dimensions, structure).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The parameter of interest cannot be estimated with this channel.
    #[error("not estimable: {0}")]
    NotEstimable(String),

    /// A waveform with the requested coherence matrix needs more samples.
    #[error("cannot synthesize a rank-{rank} coherence matrix with only {dwell} samples")]
    InfeasibleSynthesis { rank: usize, dwell: usize },

    /// The explicit extended-target FIM was requested above the size guard.
    #[error("explicit FIM requested for N = {elements}, guard is {guard}")]
    SizeGuard { elements: usize, guard: usize },

    /// The SDP solver stopped without an optimal certificate.
    #[error("SDP solver stopped with status {0:?}")]
    Solver(SdpStatus),

    /// An estimator could not produce an estimate.
    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    /// Experiment configuration problems.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
