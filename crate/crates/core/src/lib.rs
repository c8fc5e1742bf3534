//! Design of binary (±1) modulation sequences with a shaped DFT spectrum.
//!
//! The design maximizes spectral power over a message band while keeping the
//! power over an interferer band below a tolerance. The integer program is
//! lifted to a semidefinite relaxation ([`sdp`]), whose solution is turned
//! back into binary candidates by Gaussian randomized projection followed by
//! sign quantization ([`rounding`]). The crate also carries the comparison
//! baselines ([`baselines`]), an exhaustive ground-truth search ([`oracle`])
//! and CSV-emitting experiment harnesses ([`experiments`]).

pub mod baselines;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod problem;
pub mod rounding;
pub mod sdp;
pub mod spectral;

mod serde_ext;

pub use error::{Error, Result};
pub use problem::{BandSpec, BinarySequence, DesignProblem, MetricBundle, ScoreKind};
pub use rounding::{Candidate, DesignResult};
pub use sdp::{SdpSolution, SolverConfig};

/// Version string stamped into experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
