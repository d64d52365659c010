//! Dense real linear-algebra kernels: Schur decomposition (Francis QR with
//! eigenvalue reordering), eigenvector extraction, Lyapunov and Riccati
//! solvers. Row-major `f64` storage throughout; no external BLAS/LAPACK.

pub mod care;
pub mod eigvec;
pub mod error;
pub mod francis;
pub mod hessenberg;
pub mod lyapunov;
pub mod matrix;
pub mod reorder;
pub mod schur;
pub mod spectrum;

pub use care::care_small;
pub use error::{MatError, Result};
pub use lyapunov::{lyapunov_backsolve, lyapunov_solve};
pub use matrix::{dot, DenseMatrix};
