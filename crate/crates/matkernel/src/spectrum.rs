//! Whole-spectrum decomposition and threshold-split invariant subspaces.
//!
//! `eig` packages the Schur pipeline into eigenvalue/eigenvector lists sorted
//! by descending real part (ties by descending imaginary part, so conjugate
//! pairs sit adjacent with the `+iω` member first). Complex vectors are split
//! into real and imaginary parts; the `−iω` partner's vector is the conjugate
//! of its `+iω` sibling, stored explicitly so entry `k` of every field refers
//! to the same eigenvalue.

use crate::eigvec::{block_lambda, left_eigvec, right_eigvec};
use crate::error::{MatError, Result};
use crate::matrix::DenseMatrix;
use crate::reorder::block_starts;
use crate::schur::real_schur;

/// A vector with an optional imaginary part (`None` means purely real).
pub type SplitVec = (Vec<f64>, Option<Vec<f64>>);

/// Eigenvalues with matching unit eigenvectors. `values[k]`, `right[k]` and
/// (when present) `left[k]` all describe the same eigenvalue.
pub struct SpectrumResult {
    /// `(re, im)` sorted by descending `re`, ties by descending `im`.
    pub values: Vec<(f64, f64)>,
    /// Unit right eigenvectors: `A(re + i·im) = λ(re + i·im)`.
    pub right: Vec<SplitVec>,
    /// Unit left eigenvectors (`ψᵀA = λψᵀ`), populated on request.
    pub left: Option<Vec<SplitVec>>,
}

fn conj(v: &SplitVec) -> SplitVec {
    (
        v.0.clone(),
        v.1.as_ref().map(|im| im.iter().map(|x| -x).collect()),
    )
}

fn eig_impl(a: &DenseMatrix, with_left: bool) -> Result<SpectrumResult> {
    let s = real_schur(a)?;
    let mut entries: Vec<((f64, f64), SplitVec, Option<SplitVec>)> = Vec::new();
    for (j, bs) in block_starts(&s.t) {
        let lam = block_lambda(&s.t, j);
        let r = right_eigvec(&s.t, &s.z, j);
        let l = if with_left {
            Some(left_eigvec(&s.t, &s.z, j))
        } else {
            None
        };
        if bs == 2 {
            entries.push(((lam.re, -lam.im), conj(&r), l.as_ref().map(conj)));
        }
        entries.push(((lam.re, lam.im), r, l));
    }
    entries.sort_by(|a, b| {
        b.0 .0
            .partial_cmp(&a.0 .0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.0 .1.partial_cmp(&a.0 .1).unwrap_or(std::cmp::Ordering::Equal))
    });
    let values = entries.iter().map(|e| e.0).collect();
    let left = if with_left {
        Some(entries.iter().map(|e| e.2.clone().unwrap()).collect())
    } else {
        None
    };
    let right = entries.into_iter().map(|e| e.1).collect();
    Ok(SpectrumResult { values, right, left })
}

/// Eigenvalues and unit right eigenvectors of a square matrix.
pub fn eig(a: &DenseMatrix) -> Result<SpectrumResult> {
    eig_impl(a, false)
}

/// Like [`eig`] but also extracts unit left eigenvectors.
pub fn eig_full(a: &DenseMatrix) -> Result<SpectrumResult> {
    eig_impl(a, true)
}

/// Orthonormal basis of the invariant subspace for eigenvalues with
/// `Re λ ≥ threshold`, together with the compression `A_sub = VᵀAV` (the
/// leading ordered-Schur block), so that `A V = V A_sub`.
///
/// Fails with [`MatError::BoundaryEigenvalue`] if any eigenvalue lies within
/// `1e−8` of the threshold line: the split would be numerically meaningless.
pub fn stable_invariant_subspace(
    a: &DenseMatrix,
    threshold: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    const GAP_TOL: f64 = 1e-8;
    let mut s = real_schur(a)?;
    for (re, im) in s.eigenvalues() {
        if (re - threshold).abs() < GAP_TOL {
            return Err(MatError::BoundaryEigenvalue { re, im, tol: GAP_TOL });
        }
    }
    let k = s.reorder(&|re, _| re >= threshold)?;
    let n = a.rows();
    let v = s.z.submatrix(0, n, 0, k);
    let a_sub = s.t.submatrix(0, k, 0, k);
    Ok((v, a_sub))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Dot products against a residual check: ‖Aψ − λψ‖ ≤ 1e−8·‖A‖·‖ψ‖ with
    // ‖ψ‖ = 1 by construction, complex arithmetic split into parts.
    fn spectrum_residual(a: &DenseMatrix, s: &SpectrumResult) -> f64 {
        let n = a.rows();
        let zero = vec![0.0; n];
        let mut worst = 0.0f64;
        for (k, (lr, li)) in s.values.iter().enumerate() {
            let re = &s.right[k].0;
            let im = s.right[k].1.as_deref().unwrap_or(&zero);
            let mut sq = 0.0;
            for i in 0..n {
                let row = a.row(i);
                let mut ar = 0.0;
                let mut ai = 0.0;
                for j in 0..n {
                    ar += row[j] * re[j];
                    ai += row[j] * im[j];
                }
                let rr = ar - (lr * re[i] - li * im[i]);
                let ri = ai - (lr * im[i] + li * re[i]);
                sq += rr * rr + ri * ri;
            }
            worst = worst.max(sq.sqrt());
        }
        worst
    }

    #[test]
    fn rotation_and_diagonal_cases() {
        let rot = DenseMatrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let s = eig(&rot).unwrap();
        assert!((s.values[0].0).abs() < 1e-14 && (s.values[0].1 - 1.0).abs() < 1e-14);
        assert!((s.values[1].0).abs() < 1e-14 && (s.values[1].1 + 1.0).abs() < 1e-14);

        let d = DenseMatrix::diag(&[-1.0, -2.0, -3.0]);
        let s = eig(&d).unwrap();
        for (k, want) in [-1.0, -2.0, -3.0].iter().enumerate() {
            assert!((s.values[k].0 - want).abs() < 1e-14 && s.values[k].1 == 0.0);
            // Eigenvectors of a diagonal matrix are the unit axes.
            for (i, &v) in s.right[k].0.iter().enumerate() {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((v.abs() - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hand_checked_companion_pair() {
        // Characteristic polynomial λ² + 2λ + 2 has roots −1 ± i.
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0], &[-2.0, -2.0]]);
        let s = eig(&a).unwrap();
        assert!((s.values[0].0 + 1.0).abs() < 1e-12 && (s.values[0].1 - 1.0).abs() < 1e-12);
        assert!((s.values[1].0 + 1.0).abs() < 1e-12 && (s.values[1].1 + 1.0).abs() < 1e-12);
        assert!(spectrum_residual(&a, &s) < 1e-12);
    }

    #[test]
    fn residual_bound_and_conjugate_pairing_on_random_matrices() {
        let mut state = 0x7777u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        for n in [3usize, 8, 17, 50] {
            let a = DenseMatrix::from_fn(n, n, |_, _| next());
            let s = eig_full(&a).unwrap();
            assert!(spectrum_residual(&a, &s) <= 1e-8 * a.norm_fro());
            // Left vectors are right vectors of Aᵀ.
            let at = a.transpose();
            let st = SpectrumResult {
                values: s.values.clone(),
                right: s.left.clone().unwrap(),
                left: None,
            };
            assert!(spectrum_residual(&at, &st) <= 1e-8 * a.norm_fro());
            // Sorted order and conjugate pairing.
            for k in 1..s.values.len() {
                let (pr, pi) = s.values[k - 1];
                let (cr, ci) = s.values[k];
                assert!(pr > cr || (pr == cr && pi >= ci));
            }
            for &(re, im) in &s.values {
                if im != 0.0 {
                    assert!(s
                        .values
                        .iter()
                        .any(|&(r2, i2)| (r2 - re).abs() < 1e-12 && (i2 + im).abs() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn subspace_for_diagonal_split() {
        let a = DenseMatrix::diag(&[1.0, -1.0]);
        let (v, a_sub) = stable_invariant_subspace(&a, 0.0).unwrap();
        assert_eq!(v.cols(), 1);
        assert!((v[(0, 0)].abs() - 1.0).abs() < 1e-14 && v[(1, 0)].abs() < 1e-14);
        assert!((a_sub[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn subspace_spans_complex_pair_and_commutes() {
        // Unstable complex pair 0.2 ± i mixed into a random stable tail.
        let mut state = 0x51u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let n = 9;
        let mut a = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -1.5 + 0.4 * next()
            } else if i < j {
                next()
            } else {
                0.0
            }
        });
        a[(0, 0)] = 0.2;
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(1, 1)] = 0.2;
        let q = random_orthogonal(n, &mut next);
        let a = q.matmul(&a).matmul_nt(&q);
        let (v, a_sub) = stable_invariant_subspace(&a, 0.0).unwrap();
        assert_eq!(v.cols(), 2);
        // Orthonormal columns and AV = V·A_sub.
        let vtv = v.matmul_tn(&v);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - want).abs() < 1e-12);
            }
        }
        let defect = a.matmul(&v).sub(&v.matmul(&a_sub)).norm_fro();
        assert!(defect <= 1e-10 * a.norm_fro(), "commutation defect {defect:.3e}");
    }

    #[test]
    fn boundary_eigenvalue_is_rejected() {
        let a = DenseMatrix::diag(&[1.0, 0.3e-8, -1.0]);
        match stable_invariant_subspace(&a, 0.0) {
            Err(MatError::BoundaryEigenvalue { .. }) => {}
            other => panic!("expected boundary rejection, got {other:?}"),
        }
    }

    fn random_orthogonal(n: usize, next: &mut dyn FnMut() -> f64) -> DenseMatrix {
        // QR of a random matrix via repeated Householder reflections.
        let mut q = DenseMatrix::identity(n);
        for _ in 0..n {
            let w: Vec<f64> = (0..n).map(|_| next()).collect();
            let nrm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm < 1e-9 {
                continue;
            }
            let w: Vec<f64> = w.iter().map(|v| v / nrm).collect();
            // q ← q(I − 2wwᵀ)
            let qw: Vec<f64> = (0..n)
                .map(|i| q.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            for i in 0..n {
                let qi = q.row_mut(i);
                for j in 0..n {
                    qi[j] -= 2.0 * qw[i] * w[j];
                }
            }
        }
        q
    }
}
