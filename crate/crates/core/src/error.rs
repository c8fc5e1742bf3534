use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("message and interferer bands overlap at bin {0}")]
    Overlap(usize),
    #[error("frequency bin {bin} is out of range for sequence length {n}")]
    Index { bin: usize, n: usize },
    #[error("message band is empty")]
    EmptyMessage,
    #[error("band indices must be strictly increasing")]
    UnorderedBand,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("sequence has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sequence entries must be -1 or +1")]
    NotBinary,
    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },
    #[error("relaxation is infeasible: interferer bound {bound} is below the attainable floor (reached {reached})")]
    InfeasibleRelaxation { bound: f64, reached: f64 },
    #[error("relaxation solution has rank zero")]
    RankZero,
    #[error("interferer band is empty")]
    EmptyInterferer,
    #[error("relaxation objective {0} is too small to form an approximation ratio")]
    DegenerateObjective(f64),
    #[error("SHAPE scale factor is zero")]
    ZeroScale,
    #[error("SHAPE spectrum is identically zero")]
    ZeroSpectrum,
    #[error("LPNN diverged at iteration {iteration} (neuron magnitude above 1e6)")]
    Divergence { iteration: usize },
    #[error("exhaustive search limited to n <= {limit}, got n = {n}")]
    SizeLimit { n: usize, limit: usize },
    #[error("no binary sequence satisfies the interferer constraint")]
    NoFeasible,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
