//! Householder reduction to upper Hessenberg form.

use crate::matrix::{axpy, DenseMatrix};

/// Reduce `a` to upper Hessenberg form `H = Qᵀ A Q`, returning `(H, Q)`.
///
/// The reduction is exact for already-Hessenberg input (reflectors on zero
/// columns degenerate to the identity), so triangular matrices pass through
/// unchanged.
pub fn hessenberg(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (h, q) = hess_impl(a, true);
    (h, q.expect("q accumulated"))
}

/// Hessenberg form only, skipping the accumulation of `Q` (cheaper when just
/// the eigenvalues are wanted downstream).
pub fn hessenberg_h(a: &DenseMatrix) -> DenseMatrix {
    hess_impl(a, false).0
}

fn hess_impl(a: &DenseMatrix, want_q: bool) -> (DenseMatrix, Option<DenseMatrix>) {
    assert!(a.is_square());
    let n = a.rows();
    let mut h = a.clone();
    // Reflectors: column k eliminates h[k+2.., k] via v acting on rows k+1..n.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(2));
    let mut w = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let mut v: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || v[1..].iter().all(|&x| x == 0.0) {
            vs.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let beta = 2.0 / vnorm2;

        // Left: H[k+1.., k..] -= beta v (vᵀ H[k+1.., k..])
        let wk = &mut w[k..];
        wk.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(wk, vi, &h.row(k + 1 + i)[k..]);
            }
        }
        for (i, &vi) in v.iter().enumerate() {
            let s = beta * vi;
            if s != 0.0 {
                let row = &mut h.row_mut(k + 1 + i)[k..];
                for (x, &y) in row.iter_mut().zip(wk.iter()) {
                    *x -= s * y;
                }
            }
        }
        // Right: H[.., k+1..] -= beta (H[.., k+1..] v) vᵀ
        for i in 0..n {
            let row = &mut h.row_mut(i)[k + 1..];
            let s = beta * row.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
            if s != 0.0 {
                for (x, &y) in row.iter_mut().zip(&v) {
                    *x -= s * y;
                }
            }
        }
        // The eliminated column is exactly alpha e1 in exact arithmetic.
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
        vs.push(v);
    }

    if !want_q {
        return (h, None);
    }
    // Backward accumulation of Q touches only the trailing blocks.
    let mut q = DenseMatrix::identity(n);
    for k in (0..vs.len()).rev() {
        let v = &vs[k];
        if v.is_empty() {
            continue;
        }
        let beta = 2.0 / v.iter().map(|x| x * x).sum::<f64>();
        let wk = &mut w[k + 1..];
        wk.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(wk, vi, &q.row(k + 1 + i)[k + 1..]);
            }
        }
        for (i, &vi) in v.iter().enumerate() {
            let s = beta * vi;
            if s != 0.0 {
                let row = &mut q.row_mut(k + 1 + i)[k + 1..];
                for (x, &y) in row.iter_mut().zip(wk.iter()) {
                    *x -= s * y;
                }
            }
        }
    }
    (h, Some(q))
}
