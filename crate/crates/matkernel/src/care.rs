//! Continuous-time algebraic Riccati equation
//! `AᵀΠ + ΠA + Q - Π B R⁻¹ Bᵀ Π = 0` by the Hamiltonian Schur method.
//!
//! Intended for small dense problems (projected subproblems, references for
//! iterative solvers); cost is a Schur decomposition at twice the state
//! dimension.

use crate::error::{MatError, Result};
use crate::matrix::DenseMatrix;
use crate::schur::real_schur;

/// Solve the CARE for stabilizable `(A, B)` with `Q ⪰ 0`, `R ≻ 0`. Returns
/// the symmetric stabilizing solution `Π`.
///
/// The Hamiltonian `[[A, -B R⁻¹ Bᵀ], [-Q, -Aᵀ]]` has spectrum symmetric
/// about the imaginary axis; the stabilizing solution is recovered from its
/// stable invariant subspace `[X₁; X₂]` as `Π = X₂ X₁⁻¹`. Eigenvalues on
/// the axis (no stabilizing solution exists) and singular `X₁` (the
/// subspace is not a graph) are reported as errors.
pub fn care_small(
    a: &DenseMatrix,
    b: &DenseMatrix,
    q: &DenseMatrix,
    r: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = a.rows();
    let m = b.cols();
    assert!(a.is_square() && b.rows() == n, "shape mismatch");
    assert!(q.rows() == n && q.cols() == n, "shape mismatch");
    assert!(r.rows() == m && r.cols() == m, "shape mismatch");

    // S = B R⁻¹ Bᵀ via LU of R (symmetric PD by contract).
    let rinv_bt = r.lu()?.solve_mat(&b.transpose());
    let s = b.matmul(&rinv_bt);

    let mut h = DenseMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = a[(i, j)];
            h[(i, n + j)] = -s[(i, j)];
            h[(n + i, j)] = -q[(i, j)];
            h[(n + i, n + j)] = -a[(j, i)];
        }
    }

    let mut sf = real_schur(&h)?;
    let axis_tol = 1e-9 * h.norm_inf().max(1.0);
    if let Some(&(re, im)) = sf.eigenvalues().iter().find(|e| e.0.abs() <= axis_tol) {
        return Err(MatError::ImaginaryAxis { re, im });
    }
    let dim = sf.reorder(&|re, _| re < 0.0)?;
    if dim != n {
        // Symmetry of the Hamiltonian spectrum failed numerically.
        return Err(MatError::Singular {
            context: format!("Hamiltonian stable subspace has dimension {dim}, expected {n}"),
            pivot: 0.0,
        });
    }

    // Stable basis [X1; X2] = leading n columns of Z.
    let x1 = sf.z.submatrix(0, n, 0, n);
    let x2 = sf.z.submatrix(n, 2 * n, 0, n);
    // Π = X2 X1⁻¹ from X1ᵀ Πᵀ = X2ᵀ.
    let lu = x1.transpose().lu().map_err(|_| MatError::Singular {
        context: "Riccati graph projection (X1)".into(),
        pivot: 0.0,
    })?;
    if lu.min_pivot() < 1e-10 {
        return Err(MatError::Singular {
            context: "Riccati graph projection (X1)".into(),
            pivot: lu.min_pivot(),
        });
    }
    let mut pi = lu.solve_mat(&x2.transpose()).transpose();
    pi.symmetrize();
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_closed_form() {
        // a = b = q = r = 1: π² - 2π - 1 = 0, stabilizing root 1 + √2.
        let one = DenseMatrix::identity(1);
        let pi = care_small(&one, &one, &one, &one).unwrap();
        assert!((pi[(0, 0)] - (1.0 + 2.0f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn residual_vanishes_on_random_system() {
        let n = 6;
        let m = 2;
        let mut state = 0xfeedu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let a = DenseMatrix::from_fn(n, n, |i, j| next() - if i == j { 0.4 } else { 0.0 });
        let b = DenseMatrix::from_fn(n, m, |_, _| next());
        let q = DenseMatrix::identity(n);
        let mut r = DenseMatrix::identity(m);
        r.scale(2.0);
        let pi = care_small(&a, &b, &q, &r).unwrap();
        // Residual AᵀΠ + ΠA + Q - ΠBR⁻¹BᵀΠ.
        let rinv_bt = r.lu().unwrap().solve_mat(&b.transpose());
        let s = b.matmul(&rinv_bt);
        let resid = a
            .matmul_tn(&pi)
            .add(&pi.matmul(&a))
            .add(&q)
            .sub(&pi.matmul(&s).matmul(&pi));
        assert!(resid.norm_fro() / q.norm_fro() < 1e-10);
        // Closed loop A - BR⁻¹BᵀΠ must be stable.
        let acl = a.sub(&s.matmul(&pi));
        let absc = crate::schur::eigenvalues_only(&acl)
            .unwrap()
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(absc < 0.0, "closed-loop abscissa {absc}");
    }

    #[test]
    fn imaginary_axis_is_rejected() {
        // a = 0, b = 0: Hamiltonian eigenvalues are ±i-paired at zero.
        let a = DenseMatrix::zeros(1, 1);
        let b = DenseMatrix::zeros(1, 1);
        let q = DenseMatrix::identity(1);
        let r = DenseMatrix::identity(1);
        match care_small(&a, &b, &q, &r) {
            Err(MatError::ImaginaryAxis { .. }) => {}
            other => panic!("expected ImaginaryAxis, got {other:?}"),
        }
    }
}
