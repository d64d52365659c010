//! Real Schur decomposition facade: `A = Z T Zᵀ` with orthogonal `Z` and
//! quasi-upper-triangular `T` (1x1 and standardized 2x2 diagonal blocks).

use crate::error::Result;
use crate::francis::{block_eigenvalues, francis_qr};
use crate::hessenberg::{hessenberg, hessenberg_h};
use crate::matrix::DenseMatrix;
use crate::reorder::reorder_schur;

/// A real Schur factorization `A = Z T Zᵀ`.
pub struct SchurForm {
    pub t: DenseMatrix,
    pub z: DenseMatrix,
}

impl SchurForm {
    /// Eigenvalues in diagonal-block order, conjugate pairs adjacent with
    /// the `+iω` member first.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        block_eigenvalues(&self.t)
    }

    /// Move the eigenvalues selected by `select(re, im)` to the leading
    /// diagonal blocks; returns the dimension of the leading invariant
    /// subspace (spanned by the first columns of `z`).
    pub fn reorder(&mut self, select: &dyn Fn(f64, f64) -> bool) -> Result<usize> {
        reorder_schur(&mut self.t, &mut self.z, select)
    }

    /// Spectral abscissa: the largest real part over the spectrum.
    pub fn abscissa(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Full real Schur decomposition of a square matrix.
pub fn real_schur(a: &DenseMatrix) -> Result<SchurForm> {
    let (mut t, mut z) = hessenberg(a);
    francis_qr(&mut t, Some(&mut z))?;
    Ok(SchurForm { t, z })
}

/// Eigenvalues only (Hessenberg `Q` and Schur `Z` accumulation skipped —
/// roughly a third of the cost of [`real_schur`] at large sizes).
pub fn eigenvalues_only(a: &DenseMatrix) -> Result<Vec<(f64, f64)>> {
    let mut t = hessenberg_h(a);
    francis_qr(&mut t, None)?;
    Ok(block_eigenvalues(&t))
}

/// Sort eigenvalues by descending real part, ties by descending imaginary
/// part (conjugate pairs become adjacent, `+iω` first).
pub fn sort_spectrum(eigs: &mut [(f64, f64)]) {
    eigs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_only_matches_full_schur() {
        let n = 30;
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let a = DenseMatrix::from_fn(n, n, |_, _| next());
        let mut e1 = eigenvalues_only(&a).unwrap();
        let mut e2 = real_schur(&a).unwrap().eigenvalues();
        sort_spectrum(&mut e1);
        sort_spectrum(&mut e2);
        for (x, y) in e1.iter().zip(e2.iter()) {
            assert!((x.0 - y.0).abs() < 1e-8 && (x.1 - y.1).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_matrix_diagonalizes() {
        let n = 12;
        let b = DenseMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let s = real_schur(&b).unwrap();
        // Symmetric input: T must be diagonal (all eigenvalues real).
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert!(s.t[(i, j)].abs() < 1e-10);
                }
            }
        }
    }
}
