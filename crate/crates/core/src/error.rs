use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix has eigenvalue {0:e} below the PSD tolerance")]
    NegativeEigenvalue(f64),

    #[error("{routine} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { routine: &'static str, iterations: usize, residual: f64 },

    #[error("degenerate spectrum: sigma_{k} - sigma_{next} = {gap:e}", next = .k + 1)]
    DegenerateSpectrum { k: usize, gap: f64 },

    #[error("rank {rank} is below the required {required}")]
    RankDeficient { required: usize, rank: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("bracket search failed: f({lo:e}) = {f_lo:e}, f({hi:e}) = {f_hi:e}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("training diverged at step {0}")]
    Divergence(usize),

    #[error("loss became NaN at step {0}")]
    NanLoss(usize),

    #[error("tape: {0}")]
    Tape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of the numerical routines (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::ShapeMismatch { .. } | Error::InvalidArgument(_) | Error::Tape(_))
    }
}
