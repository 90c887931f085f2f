//! Cramér-Rao bounds, transmit/reflective beamforming design and
//! maximum-likelihood verification for target sensing through an
//! intelligent reflecting surface (IRS) when the direct AP-target link is
//! blocked.
//!
//! The AP transmits with covariance `R_x`, the IRS applies unit-modulus
//! phases `v`, and the AP receives the echo over the same IRS path. Two
//! target models are supported: a point target (unknown angle and complex
//! gain) and an extended target (unknown `N × N` response matrix).
//!
//! Module map: [`scene`] geometry, channels and echo simulation;
//! [`sensing`] bounds and Fisher information; [`sdp`] the semidefinite
//! solver; [`opt_point`] and [`opt_extended`] the designs; [`estimate`] the
//! estimators and Monte-Carlo driver; [`baselines`] comparison schemes;
//! [`experiment`] config-driven sweeps.

pub mod baselines;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod linalg;
pub mod opt_extended;
pub mod opt_point;
pub mod rng;
pub mod scene;
pub mod sdp;
pub mod sensing;
pub mod types;

pub use error::{Error, Result};
pub use estimate::{Design, MseReport};
pub use experiment::{ExperimentConfig, ResultRow};
pub use rng::Streams;
pub use scene::{Channel, Scenario, TargetSpec};
pub use sensing::{CrbReport, SensingParams};
pub use types::{CMat, CVec, RMat, RVec, C64};
