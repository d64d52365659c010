use thiserror::Error;

/// Errors surfaced by the decomposition and equation-solving kernels.
#[derive(Debug, Clone, Error)]
pub enum MatError {
    /// QR iteration exhausted its budget before the matrix deflated fully.
    #[error("eigenvalue iteration failed to converge for a {size}x{size} matrix ({iters} sweeps)")]
    NonConvergence { size: usize, iters: usize },

    /// A triangular or diagonal factor was too close to singular to use.
    #[error("{context}: factor is numerically singular (pivot {pivot:.3e})")]
    Singular { context: String, pivot: f64 },

    /// An operation required a Hurwitz matrix but found eigenvalues with
    /// nonnegative real part.
    #[error("matrix is not Hurwitz; offending eigenvalues: {0:?}")]
    NotStable(Vec<(f64, f64)>),

    /// The Hamiltonian pencil of a Riccati equation has eigenvalues on the
    /// imaginary axis, so no stabilizing solution exists at this block.
    #[error("not stabilizable/detectable at this block: Hamiltonian eigenvalue {re:.3e}{im:+.3e}i lies on the imaginary axis")]
    ImaginaryAxis { re: f64, im: f64 },

    /// Schur reordering refused an ill-conditioned adjacent block swap.
    #[error("ill-conditioned Schur swap rejected for eigenvalue pair ({0:.6e}, {1:.6e})")]
    BadSwap(f64, f64),

    /// A splitting predicate placed an eigenvalue too close to the boundary
    /// for the invariant-subspace dimension to be trustworthy.
    #[error("eigenvalue {re:.6e}{im:+.6e}i lies within {tol:.1e} of the selection boundary")]
    BoundaryEigenvalue { re: f64, im: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, MatError>;
