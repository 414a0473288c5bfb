use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("the zero element of a line has no dual")]
    ZeroElement,
    #[error("invalid permutation {0:?} for a word of length {1}")]
    InvalidPermutation(Vec<usize>, usize),
    #[error("no adjacent contractible pair at position {0}")]
    NoContractiblePair(usize),
    #[error("line mismatch: {0}")]
    LineMismatch(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("integrator failed to reach tolerance {tol:e} (last difference {diff:e} at {steps} steps)")]
    IntegratorFailure { tol: f64, diff: f64, steps: usize },
    #[error("matrix is not unitary (defect {0:e})")]
    NonUnitary(f64),
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("eigenvalue counting mismatch on [{lo}, {hi}]: {found} roots located, winding count {expected}")]
    CountingMismatch { lo: f64, hi: f64, found: usize, expected: usize },
    #[error("window cutoff {cutoff} below asymptotic threshold {threshold}")]
    WindowTooSmall { cutoff: f64, threshold: f64 },
    #[error("ambiguous kernel: eigenvalue {0:e} is neither certified zero nor certified nonzero")]
    AmbiguousKernel(f64),
    #[error("tail lattice fit error {fit:e} exceeds bound {bound:e}")]
    TailFit { fit: f64, bound: f64 },
    #[error("eta methods disagree: lattice {lattice}, heat kernel {heat}, bound {bound:e}")]
    MethodDisagreement { lattice: f64, heat: f64, bound: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("paths are not composable: {0}")]
    NotComposable(String),
    #[error("path is not closed")]
    PathNotClosed,
    #[error("holonomy too close to -1 for a stable logarithm (loop side {0})")]
    LogBranch(f64),
}

impl Error {
    /// Certification failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::IntegratorFailure { .. }
                | Error::NonUnitary(_)
                | Error::Eigen(_)
                | Error::CountingMismatch { .. }
                | Error::WindowTooSmall { .. }
                | Error::AmbiguousKernel(_)
                | Error::TailFit { .. }
                | Error::MethodDisagreement { .. }
                | Error::NonConvergence(_)
                | Error::LogBranch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
