//! Continuous-time Lyapunov equation `AᵀX + XA = -Q` by the Schur
//! (Bartels–Stewart) method with a quasi-triangular block backsolve.

use crate::error::{MatError, Result};
use crate::matrix::DenseMatrix;
use crate::reorder::block_starts;
use crate::schur::real_schur;

/// Solve `AᵀX + XA = -Q` for symmetric `Q` and (Hurwitz) stable `A`.
/// Returns the symmetric solution; errors with the offending eigenvalues if
/// `A` has any eigenvalue with nonnegative real part.
pub fn lyapunov_solve(a: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix> {
    let s = real_schur(a)?;
    let bad: Vec<(f64, f64)> = s.eigenvalues().into_iter().filter(|e| e.0 >= 0.0).collect();
    if !bad.is_empty() {
        return Err(MatError::NotStable(bad));
    }
    let qt = s.z.matmul_tn(q).matmul(&s.z);
    let xt = lyapunov_backsolve(&s.t, &qt)?;
    let mut x = s.z.matmul(&xt).matmul_nt(&s.z);
    x.symmetrize();
    Ok(x)
}

/// Backsolve `TᵀX + XT = -Q` for upper quasi-triangular `T` (real Schur
/// form) and symmetric `Q`. Solves block column by block column, using the
/// symmetry of `X` to fill both triangles as it goes.
pub fn lyapunov_backsolve(t: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix> {
    let n = t.rows();
    assert!(q.rows() == n && q.cols() == n, "shape mismatch");
    let blocks = block_starts(t);
    let tnorm = t.norm_inf().max(1.0);
    let mut x = DenseMatrix::zeros(n, n);
    // Contiguous copy of the current block column of T (up to two columns).
    let mut tcol = vec![0.0f64; 2 * n];
    // Running right-hand side for the current block column.
    let mut acc = vec![0.0f64; 2 * n];

    for (jbi, &(js, jw)) in blocks.iter().enumerate() {
        let jend = js + jw;
        for k in 0..jend {
            for c in 0..jw {
                tcol[k * jw + c] = t[(k, js + c)];
            }
        }
        // acc starts at -Q[0..jend, J]; contributions from earlier row
        // blocks of this column are pushed in below as they are solved.
        for i in 0..jend {
            for c in 0..jw {
                acc[i * jw + c] = -q[(i, js + c)];
            }
        }

        for &(is_, iw) in blocks.iter().take(jbi + 1) {
            // Solve T[I,I]ᵀ · Xij + Xij · T[J,J] = rhs (sizes iw x jw).
            // The X·T column term is folded in here rather than at column
            // setup: for the diagonal block it reads mirror entries that
            // only materialize during this pass.
            let mut rhs = [0.0f64; 4];
            for r in 0..iw {
                let xrow = &x.row(is_ + r)[..js];
                for c in 0..jw {
                    let mut s = acc[(is_ + r) * jw + c];
                    for (k, xv) in xrow.iter().enumerate() {
                        s -= xv * tcol[k * jw + c];
                    }
                    rhs[c * iw + r] = s;
                }
            }
            let xij = solve_block(t, is_, iw, js, jw, &rhs, tnorm)?;
            for r in 0..iw {
                for c in 0..jw {
                    let v = xij[c * iw + r];
                    x[(is_ + r, js + c)] = v;
                    x[(js + c, is_ + r)] = v;
                }
            }
            if is_ == js {
                break; // diagonal block reached: column J complete
            }
            // Push the new block's contribution T[K,I']ᵀ X[K,J] onto the
            // remaining rows I' > I of this block column (K = I).
            for k in is_..is_ + iw {
                let trow = t.row(k);
                let xk = [x[(k, js)], if jw == 2 { x[(k, js + 1)] } else { 0.0 }];
                for i2 in is_ + iw..jend {
                    let coef = trow[i2];
                    if coef != 0.0 {
                        for c in 0..jw {
                            acc[i2 * jw + c] -= coef * xk[c];
                        }
                    }
                }
            }
        }
    }
    x.symmetrize();
    Ok(x)
}

/// Solve the at-most-4x4 Kronecker system for one block of the backsolve:
/// `Aᵀ·V + V·B = rhs` with `A = T[I,I]`, `B = T[J,J]`, `vec` indexing
/// `V[r][c] = v[c*iw + r]`.
fn solve_block(
    t: &DenseMatrix,
    is_: usize,
    iw: usize,
    js: usize,
    jw: usize,
    rhs: &[f64; 4],
    tnorm: f64,
) -> Result<[f64; 4]> {
    let k = iw * jw;
    let mut m = [[0.0f64; 4]; 4];
    for c in 0..jw {
        for r in 0..iw {
            let row = c * iw + r;
            for r2 in 0..iw {
                m[row][c * iw + r2] += t[(is_ + r2, is_ + r)]; // Aᵀ ⊗ I part
            }
            for c2 in 0..jw {
                m[row][c2 * iw + r] += t[(js + c2, js + c)]; // I ⊗ Bᵀ part
            }
        }
    }
    let mut rhs = *rhs;
    let mut sol = [0.0f64; 4];
    // Partial-pivot LU on the tiny system; a singular block means the
    // spectra of T[I,I] and -T[J,J] intersect (A not Lyapunov-regular).
    for step in 0..k {
        let mut piv = step;
        for i in step + 1..k {
            if m[i][step].abs() > m[piv][step].abs() {
                piv = i;
            }
        }
        if m[piv][step].abs() < 1e-13 * tnorm {
            return Err(MatError::Singular {
                context: "Lyapunov diagonal block (eigenvalue pair sums to zero)".into(),
                pivot: m[piv][step].abs(),
            });
        }
        m.swap(step, piv);
        rhs.swap(step, piv);
        for i in step + 1..k {
            let f = m[i][step] / m[step][step];
            m[i][step] = 0.0;
            for j in step + 1..k {
                m[i][j] -= f * m[step][j];
            }
            rhs[i] -= f * rhs[step];
        }
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in i + 1..k {
            s -= m[i][j] * sol[j];
        }
        sol[i] = s / m[i][i];
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schur::eigenvalues_only;

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    /// Random matrix shifted to be comfortably Hurwitz stable.
    fn random_stable(n: usize, seed: u64) -> DenseMatrix {
        let mut s = seed;
        let mut a = DenseMatrix::from_fn(n, n, |_, _| lcg(&mut s));
        let absc = eigenvalues_only(&a)
            .unwrap()
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max);
        a.shift_diag(-(absc + 0.3));
        a
    }

    /// Dense Kronecker-product reference: vec(X) from
    /// (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) = -vec(Q), column-stacked.
    fn kron_reference(a: &DenseMatrix, q: &DenseMatrix) -> DenseMatrix {
        let n = a.rows();
        let mut m = DenseMatrix::zeros(n * n, n * n);
        for c in 0..n {
            for r in 0..n {
                let row = c * n + r;
                for r2 in 0..n {
                    m[(row, c * n + r2)] += a[(r2, r)];
                }
                for c2 in 0..n {
                    m[(row, c2 * n + r)] += a[(c2, c)];
                }
            }
        }
        let rhs: Vec<f64> = (0..n * n).map(|i| -q[(i % n, i / n)]).collect();
        let sol = m.lu().unwrap().solve(&rhs);
        DenseMatrix::from_fn(n, n, |r, c| sol[c * n + r])
    }

    #[test]
    fn matches_kronecker_reference_and_residual() {
        for trial in 0..24 {
            let n = 2 + (trial % 7);
            let mut s = 0x1234 + 97 * trial as u64;
            let a = random_stable(n, s);
            let g = DenseMatrix::from_fn(n, n, |_, _| lcg(&mut s));
            let mut q = g.matmul_tn(&g);
            q.shift_diag(0.5);
            let x = lyapunov_solve(&a, &q).unwrap();
            let xref = kron_reference(&a, &q);
            let rel = x.sub(&xref).norm_fro() / xref.norm_fro();
            assert!(rel < 1e-10, "n={n} trial={trial} rel={rel:.3e}");
            // Residual AᵀX + XA + Q must vanish.
            let resid = a.matmul_tn(&x).add(&x.matmul(&a)).add(&q);
            let rr = resid.norm_fro() / q.norm_fro();
            assert!(rr < 1e-10, "residual {rr:.3e}");
        }
    }

    #[test]
    fn rejects_unstable_coefficient() {
        let a = DenseMatrix::from_rows(&[&[0.1, 1.0], &[0.0, -1.0]]);
        let q = DenseMatrix::identity(2);
        match lyapunov_solve(&a, &q) {
            Err(MatError::NotStable(eigs)) => {
                assert!((eigs[0].0 - 0.1).abs() < 1e-12);
            }
            other => panic!("expected NotStable, got {other:?}"),
        }
    }
}
