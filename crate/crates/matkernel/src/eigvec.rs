//! Eigenvectors of a real Schur form by quasi-triangular substitution.
//!
//! Right vectors solve `(T - λI)x = 0` by backward substitution from the
//! eigenvalue's diagonal block; left vectors solve `yᵀ(T - λI) = 0` forward.
//! Both are lifted to the original basis with `Z` and normalized. Complex
//! conjugate pairs are represented by the `+iω` member: the returned pair
//! `(re, im)` means the eigenvector `re + i·im`.

use crate::matrix::DenseMatrix;
use num_complex::Complex64;

type C = Complex64;

/// Size (1 or 2) of the diagonal block starting at `j`.
fn block_size(t: &DenseMatrix, j: usize) -> usize {
    if j + 1 < t.rows() && t[(j + 1, j)] != 0.0 {
        2
    } else {
        1
    }
}

/// Divisor guard: tiny pivots are replaced by a matrix-scale epsilon so a
/// (nearly) defective eigenvalue yields a large-but-finite direction instead
/// of a NaN. Directions remain meaningful after normalization.
fn smin_of(t: &DenseMatrix) -> f64 {
    (f64::EPSILON * t.norm_inf()).max(f64::MIN_POSITIVE / f64::EPSILON)
}

fn guard(d: C, smin: f64) -> C {
    if d.norm() < smin {
        C::new(smin, 0.0)
    } else {
        d
    }
}

/// Eigenvalue of the block at `j` (the `+iω` member for a 2x2 block).
pub(crate) fn block_lambda(t: &DenseMatrix, j: usize) -> C {
    if block_size(t, j) == 2 {
        let prod = -t[(j, j + 1)] * t[(j + 1, j)];
        C::new(t[(j, j)], prod.max(0.0).sqrt())
    } else {
        C::new(t[(j, j)], 0.0)
    }
}

/// Right eigenvector for the eigenvalue whose diagonal block starts at `j`,
/// lifted by `z` and normalized. `debug_assert`s that `j` starts a block.
pub fn right_eigvec(t: &DenseMatrix, z: &DenseMatrix, j: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    debug_assert!(j == 0 || t[(j, j - 1)] == 0.0, "j must start a block");
    let bs = block_size(t, j);
    let lam = block_lambda(t, j);
    let smin = smin_of(t);
    let top = j + bs; // vector support is rows 0..top
    let mut x = vec![C::new(0.0, 0.0); top];
    if bs == 1 {
        x[j] = C::new(1.0, 0.0);
    } else {
        // Block [[p, b], [c, p]]: ((b, iq)) is annihilated by (B - λI).
        x[j] = C::new(t[(j, j + 1)], 0.0);
        x[j + 1] = C::new(0.0, (-t[(j, j + 1)] * t[(j + 1, j)]).max(0.0).sqrt());
    }

    let mut i = j; // walk block starts downward from the block above j
    while i > 0 {
        let ib = if i >= 2 && t[(i - 1, i - 2)] != 0.0 { 2 } else { 1 };
        i -= ib;
        // rhs_I = -Σ_{k>I} T[I,k] x[k]
        let mut r0 = C::new(0.0, 0.0);
        let mut r1 = C::new(0.0, 0.0);
        let row0 = t.row(i);
        for k in i + ib..top {
            r0 -= x[k] * row0[k];
        }
        if ib == 2 {
            let row1 = t.row(i + 1);
            for k in i + ib..top {
                r1 -= x[k] * row1[k];
            }
        }
        if ib == 1 {
            x[i] = r0 / guard(C::new(t[(i, i)], 0.0) - lam, smin);
        } else {
            // Solve the 2x2 complex system (T_II - λ) x_I = rhs by Cramer.
            let a11 = C::new(t[(i, i)], 0.0) - lam;
            let a12 = C::new(t[(i, i + 1)], 0.0);
            let a21 = C::new(t[(i + 1, i)], 0.0);
            let a22 = C::new(t[(i + 1, i + 1)], 0.0) - lam;
            let det = guard(a11 * a22 - a12 * a21, smin * smin);
            x[i] = (r0 * a22 - a12 * r1) / det;
            x[i + 1] = (a11 * r1 - r0 * a21) / det;
        }
        // Keep the direction representable; the scale is arbitrary.
        let big = x[i].norm().max(x[i + ib - 1].norm());
        if big > 1e250 {
            for v in x.iter_mut() {
                *v /= big;
            }
        }
    }
    lift(z, &x, lam.im != 0.0)
}

/// Left eigenvector (row vector `yᵀT = λyᵀ`, returned as a column) for the
/// eigenvalue whose diagonal block starts at `j`, lifted by `z`, normalized.
pub fn left_eigvec(t: &DenseMatrix, z: &DenseMatrix, j: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = t.rows();
    debug_assert!(j == 0 || t[(j, j - 1)] == 0.0, "j must start a block");
    let bs = block_size(t, j);
    let lam = block_lambda(t, j);
    let smin = smin_of(t);
    let mut x = vec![C::new(0.0, 0.0); n]; // support is rows j..n
    if bs == 1 {
        x[j] = C::new(1.0, 0.0);
    } else {
        // Row vector (c, iq) is annihilated on the right by (B - λI).
        x[j] = C::new(t[(j + 1, j)], 0.0);
        x[j + 1] = C::new(0.0, (-t[(j, j + 1)] * t[(j + 1, j)]).max(0.0).sqrt());
    }

    let mut i = j + bs; // walk block starts forward
    while i < n {
        let ib = block_size(t, i);
        // rhs_I = -Σ_{k<I} x[k] T[k,I]
        let mut r0 = C::new(0.0, 0.0);
        let mut r1 = C::new(0.0, 0.0);
        for k in j..i {
            r0 -= x[k] * t[(k, i)];
        }
        if ib == 2 {
            for k in j..i {
                r1 -= x[k] * t[(k, i + 1)];
            }
        }
        if ib == 1 {
            x[i] = r0 / guard(C::new(t[(i, i)], 0.0) - lam, smin);
        } else {
            // Solve x_I (T_II - λ) = rhs, i.e. (T_II - λ)ᵀ x_Iᵀ = rhsᵀ.
            let a11 = C::new(t[(i, i)], 0.0) - lam;
            let a12 = C::new(t[(i + 1, i)], 0.0); // transposed
            let a21 = C::new(t[(i, i + 1)], 0.0);
            let a22 = C::new(t[(i + 1, i + 1)], 0.0) - lam;
            let det = guard(a11 * a22 - a12 * a21, smin * smin);
            x[i] = (r0 * a22 - a12 * r1) / det;
            x[i + 1] = (a11 * r1 - r0 * a21) / det;
        }
        let big = x[i].norm().max(x[(i + ib - 1).min(n - 1)].norm());
        if big > 1e250 {
            for v in x.iter_mut() {
                *v /= big;
            }
        }
        i += ib;
    }
    lift(z, &x, lam.im != 0.0)
}

/// Multiply by `z`, normalize to unit joint 2-norm, and split into parts.
fn lift(z: &DenseMatrix, x: &[C], complex: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = z.rows();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for i in 0..n {
        let row = z.row(i);
        let mut sr = 0.0;
        let mut si = 0.0;
        for (k, xv) in x.iter().enumerate() {
            sr += row[k] * xv.re;
            si += row[k] * xv.im;
        }
        re[i] = sr;
        im[i] = si;
    }
    let nrm = (re.iter().map(|v| v * v).sum::<f64>() + im.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
    if nrm > 0.0 {
        for v in re.iter_mut() {
            *v /= nrm;
        }
        for v in im.iter_mut() {
            *v /= nrm;
        }
    }
    (re, if complex { Some(im) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::francis::francis_qr;
    use crate::hessenberg::hessenberg;
    use crate::reorder::block_starts;

    fn check_right(a: &DenseMatrix, re: &[f64], im: Option<&Vec<f64>>, lam: C, tol: f64) {
        let n = a.rows();
        let zero = vec![0.0; n];
        let im = im.map(|v| v.as_slice()).unwrap_or(&zero);
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut ar = 0.0;
            let mut ai = 0.0;
            for k in 0..n {
                ar += a[(i, k)] * re[k];
                ai += a[(i, k)] * im[k];
            }
            worst = worst.max((ar - (lam.re * re[i] - lam.im * im[i])).abs());
            worst = worst.max((ai - (lam.im * re[i] + lam.re * im[i])).abs());
        }
        assert!(worst < tol, "right residual {worst:.3e}");
    }

    #[test]
    fn right_and_left_eigvectors_of_random_matrix() {
        let n = 20;
        let mut state = 0xabcdef12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let a = DenseMatrix::from_fn(n, n, |_, _| next());
        let (mut t, mut z) = hessenberg(&a);
        francis_qr(&mut t, Some(&mut z)).unwrap();
        let at = a.transpose();
        for (j, _) in block_starts(&t) {
            let lam = block_lambda(&t, j);
            let (re, im) = right_eigvec(&t, &z, j);
            check_right(&a, &re, im.as_ref(), lam, 1e-9);
            let (lre, lim) = left_eigvec(&t, &z, j);
            // yᵀA = λyᵀ  ⇔  Aᵀy = λy (plain transpose, no conjugation).
            check_right(&at, &lre, lim.as_ref(), lam, 1e-9);
        }
    }

    #[test]
    fn complex_pair_vectors() {
        // eigenvalues 0.3 ± i with known rotation structure
        let a = DenseMatrix::from_rows(&[&[0.3, -1.0], &[1.0, 0.3]]);
        let (mut t, mut z) = hessenberg(&a);
        francis_qr(&mut t, Some(&mut z)).unwrap();
        let lam = block_lambda(&t, 0);
        assert!((lam.re - 0.3).abs() < 1e-14 && (lam.im - 1.0).abs() < 1e-14);
        let (re, im) = right_eigvec(&t, &z, 0);
        check_right(&a, &re, im.as_ref(), lam, 1e-12);
    }
}
