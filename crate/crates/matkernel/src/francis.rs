//! Francis implicit double-shift QR iteration on an upper Hessenberg matrix,
//! producing the real Schur form with standardized 2x2 blocks.

use crate::error::{MatError, Result};
use crate::matrix::DenseMatrix;

/// Standardize a real 2x2 block: find a rotation (cs, sn) such that the
/// similarity-transformed block is either upper triangular (real eigenvalues)
/// or in standard form `[[p, b], [c, p]]` with `b*c < 0` (complex pair).
/// Returns the transformed entries, the rotation, and both eigenvalues.
#[allow(clippy::too_many_lines)]
pub fn standardize_2x2(
    mut a: f64,
    mut b: f64,
    mut c: f64,
    mut d: f64,
) -> (f64, f64, f64, f64, f64, f64, (f64, f64), (f64, f64)) {
    let eps = f64::EPSILON;
    let (mut cs, mut sn);
    if c == 0.0 {
        cs = 1.0;
        sn = 0.0;
    } else if b == 0.0 {
        // Swap rows and columns.
        cs = 0.0;
        sn = 1.0;
        let t = d;
        d = a;
        a = t;
        b = -c;
        c = 0.0;
    } else if (a - d) == 0.0 && b.signum() != c.signum() {
        cs = 1.0;
        sn = 0.0;
    } else {
        let temp = a - d;
        let p = 0.5 * temp;
        let bcmax = b.abs().max(c.abs());
        let bcmis = b.abs().min(c.abs()) * b.signum() * c.signum();
        let scale = p.abs().max(bcmax);
        let mut z = (p / scale) * p + (bcmax / scale) * bcmis;
        if z >= 4.0 * eps {
            // Real eigenvalues: split the block.
            z = p + (scale.sqrt() * z.sqrt()).copysign(p);
            a = d + z;
            d -= (bcmax / z) * bcmis;
            let tau = c.hypot(z);
            cs = z / tau;
            sn = c / tau;
            b -= c;
            c = 0.0;
        } else {
            // Complex or nearly equal real eigenvalues: balance the block.
            let sigma = b + c;
            let tau = sigma.hypot(temp);
            cs = (0.5 * (1.0 + sigma.abs() / tau)).sqrt();
            sn = -(p / (tau * cs)) * sigma.signum();
            let aa = a * cs + b * sn;
            let bb = -a * sn + b * cs;
            let cc = c * cs + d * sn;
            let dd = -c * sn + d * cs;
            a = aa * cs + cc * sn;
            b = bb * cs + dd * sn;
            c = -aa * sn + cc * cs;
            d = -bb * sn + dd * cs;
            let temp = 0.5 * (a + d);
            a = temp;
            d = temp;
            if c != 0.0 {
                if b != 0.0 {
                    if b.signum() == c.signum() {
                        // Real eigenvalues after all: reduce to triangular.
                        let sab = b.abs().sqrt();
                        let sac = c.abs().sqrt();
                        let pp = (sab * sac).copysign(c);
                        let tau = 1.0 / (b + c).abs().sqrt();
                        a = temp + pp;
                        d = temp - pp;
                        b -= c;
                        c = 0.0;
                        let cs1 = sab * tau;
                        let sn1 = sac * tau;
                        let t = cs * cs1 - sn * sn1;
                        sn = cs * sn1 + sn * cs1;
                        cs = t;
                    }
                } else {
                    b = -c;
                    c = 0.0;
                    let t = cs;
                    cs = -sn;
                    sn = t;
                }
            }
        }
    }
    let (im1, im2) = if c == 0.0 {
        (0.0, 0.0)
    } else {
        let im = b.abs().sqrt() * c.abs().sqrt();
        (im, -im)
    };
    (a, b, c, d, cs, sn, (a, im1), (d, im2))
}

/// Rotate columns `p, p+1` of `z` by `G = [[cs, sn], [-sn, cs]]` (i.e.
/// `z ← z Gᵀ`), walking the rows of the row-major storage.
pub(crate) fn rot_cols(z: &mut DenseMatrix, p: usize, cs: f64, sn: f64) {
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        let x = row[p];
        let y = row[p + 1];
        row[p] = cs * x + sn * y;
        row[p + 1] = -sn * x + cs * y;
    }
}

/// Same update as [`rot_cols`] but for a transposed accumulator: rows `p,
/// p+1` of `zt` are the columns of `z`, so the walk is contiguous.
fn rot_rows_t(zt: &mut DenseMatrix, p: usize, cs: f64, sn: f64) {
    let (r0, r1) = zt.rows2_mut(p, p + 1);
    for (x, y) in r0.iter_mut().zip(r1.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = cs * a + sn * b;
        *y = -sn * a + cs * b;
    }
}

/// Apply the rotation `G = [[cs, sn], [-sn, cs]]` as a similarity on
/// coordinates `(p, p+1)` of `t`, and accumulate into the transposed
/// accumulator `zt` when given.
pub(crate) fn apply_rotation(
    t: &mut DenseMatrix,
    zt: Option<&mut DenseMatrix>,
    p: usize,
    cs: f64,
    sn: f64,
    col_from: usize,
) {
    let n = t.cols();
    {
        let (r0, r1) = t.rows2_mut(p, p + 1);
        for j in col_from..n {
            let x = r0[j];
            let y = r1[j];
            r0[j] = cs * x + sn * y;
            r1[j] = -sn * x + cs * y;
        }
    }
    let row_to = (p + 2).min(t.rows());
    for i in 0..row_to {
        let row = t.row_mut(i);
        let x = row[p];
        let y = row[p + 1];
        row[p] = cs * x + sn * y;
        row[p + 1] = -sn * x + cs * y;
    }
    if let Some(zt) = zt {
        rot_rows_t(zt, p, cs, sn);
    }
}

/// Drive an upper Hessenberg `t` to real Schur form, accumulating every
/// similarity into `z` when given (on entry typically the Hessenberg `Q`,
/// so that `A = Z T Zᵀ` holds on exit). Pass `None` for eigenvalues only.
/// Deflated 2x2 blocks are standardized.
pub fn francis_qr(t: &mut DenseMatrix, z: Option<&mut DenseMatrix>) -> Result<()> {
    // Work on the transpose of the accumulator: its sweep updates touch
    // three adjacent columns of Z across all rows, which in transposed
    // storage are contiguous row slices.
    let mut zt_store = z.as_ref().map(|z| z.transpose());
    let out = francis_qr_t(t, zt_store.as_mut());
    if let (Some(z), Some(zt)) = (z, zt_store) {
        *z = zt.transpose();
    }
    out
}

fn francis_qr_t(t: &mut DenseMatrix, mut z: Option<&mut DenseMatrix>) -> Result<()> {
    let n = t.rows();
    if n <= 1 {
        return Ok(());
    }
    let mut hi = n - 1; // active block is t[lo..=hi, lo..=hi]
    let mut its = 0usize;
    let mut total = 0usize;
    let budget = 40 * n;

    'outer: loop {
        // Scan for negligible subdiagonals from the bottom of the block.
        let mut lo = hi;
        while lo > 0 {
            let s = t[(lo - 1, lo - 1)].abs() + t[(lo, lo)].abs();
            let s = if s == 0.0 { t.norm_inf() } else { s };
            if t[(lo, lo - 1)].abs() <= f64::EPSILON * s {
                t[(lo, lo - 1)] = 0.0;
                break;
            }
            lo -= 1;
        }

        if lo == hi {
            // 1x1 block deflated.
            if hi == 0 {
                return Ok(());
            }
            hi -= 1;
            its = 0;
            continue;
        }
        if lo + 1 == hi {
            // 2x2 block deflated: standardize it.
            let (a, b, c, d, cs, sn, _, _) =
                standardize_2x2(t[(lo, lo)], t[(lo, hi)], t[(hi, lo)], t[(hi, hi)]);
            apply_rotation(t, z.as_deref_mut(), lo, cs, sn, lo);
            t[(lo, lo)] = a;
            t[(lo, hi)] = b;
            t[(hi, lo)] = c;
            t[(hi, hi)] = d;
            if hi <= 1 {
                return Ok(());
            }
            hi -= 2;
            its = 0;
            continue;
        }

        its += 1;
        total += 1;
        if its > 42 || total > budget {
            return Err(MatError::NonConvergence { size: n, iters: total });
        }

        // Shift pair encoded by the trailing 2x2 block (x, y, w) as in the
        // classic hqr: x = t[hi,hi], y = t[hi-1,hi-1], w = product of the
        // off-diagonal pair. Exceptional shifts kick a stalled iteration.
        let (x, y, w) = if its % 10 == 0 {
            let s = t[(hi, hi - 1)].abs() + t[(hi - 1, hi - 2)].abs();
            let xx = 0.75 * s + t[(hi, hi)];
            (xx, xx, -0.4375 * s * s)
        } else {
            (t[(hi, hi)], t[(hi - 1, hi - 1)], t[(hi, hi - 1)] * t[(hi - 1, hi)])
        };

        // Find the sweep start: the highest m where the bulge entries are
        // negligible relative to their neighborhood.
        let mut m = hi - 2;
        let (mut p, mut q, mut r);
        loop {
            let zz = t[(m, m)];
            let rr = x - zz;
            let ss = y - zz;
            p = (rr * ss - w) / t[(m + 1, m)] + t[(m, m + 1)];
            q = t[(m + 1, m + 1)] - zz - rr - ss;
            r = t[(m + 2, m + 1)];
            let s = p.abs() + q.abs() + r.abs();
            p /= s;
            q /= s;
            r /= s;
            if m == lo {
                break;
            }
            let tst1 = p.abs() * (t[(m - 1, m - 1)].abs() + zz.abs() + t[(m + 1, m + 1)].abs());
            if t[(m, m - 1)].abs() * (q.abs() + r.abs()) <= f64::EPSILON * tst1 {
                break;
            }
            m -= 1;
        }
        for i in m + 2..=hi {
            t[(i, i - 2)] = 0.0;
        }
        for i in m + 3..=hi {
            t[(i, i - 3)] = 0.0;
        }

        // Chase the bulge from m to the bottom of the block.
        for k in m..hi {
            let three = k + 2 <= hi;
            if k != m {
                p = t[(k, k - 1)];
                q = t[(k + 1, k - 1)];
                r = if three { t[(k + 2, k - 1)] } else { 0.0 };
                let xs = p.abs() + q.abs() + r.abs();
                if xs == 0.0 {
                    continue;
                }
                p /= xs;
                q /= xs;
                r /= xs;
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                t[(k, k - 1)] = -s * xs;
                t[(k + 1, k - 1)] = 0.0;
                if three {
                    t[(k + 2, k - 1)] = 0.0;
                }
                p += s;
                let (vx, vy, vz) = (p / s, q / s, r / s);
                q /= p;
                r /= p;
                sweep_apply(t, z.as_deref_mut(), k, hi, three, vx, vy, vz, q, r);
            } else {
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if lo != m {
                    t[(k, k - 1)] = -t[(k, k - 1)];
                }
                p += s;
                let (vx, vy, vz) = (p / s, q / s, r / s);
                q /= p;
                r /= p;
                sweep_apply(t, z.as_deref_mut(), k, hi, three, vx, vy, vz, q, r);
            }
        }
        if total % 64 == 0 && !t.data().iter().all(|v| v.is_finite()) {
            return Err(MatError::NonConvergence { size: n, iters: total });
        }
        continue 'outer;
    }
}

/// Apply the Householder reflector of the bulge at position `k` to rows
/// `k..k+3` (columns `k..n`), columns `k..k+3` (rows `0..min(hi, k+3)+1`),
/// and the accumulation matrix `z`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn sweep_apply(
    t: &mut DenseMatrix,
    z: Option<&mut DenseMatrix>,
    k: usize,
    hi: usize,
    three: bool,
    x: f64,
    y: f64,
    zz: f64,
    q: f64,
    r: f64,
) {
    let n = t.cols();
    if three {
        {
            let (r0, r1, r2) = t.rows3_mut(k);
            for j in k..n {
                let p = r0[j] + q * r1[j] + r * r2[j];
                r0[j] -= p * x;
                r1[j] -= p * y;
                r2[j] -= p * zz;
            }
        }
        let row_to = hi.min(k + 3) + 1;
        for i in 0..row_to {
            let row = t.row_mut(i);
            let p = x * row[k] + y * row[k + 1] + zz * row[k + 2];
            row[k] -= p;
            row[k + 1] -= p * q;
            row[k + 2] -= p * r;
        }
        if let Some(zt) = z {
            let (z0, z1, z2) = zt.rows3_mut(k);
            for j in 0..n {
                let p = x * z0[j] + y * z1[j] + zz * z2[j];
                z0[j] -= p;
                z1[j] -= p * q;
                z2[j] -= p * r;
            }
        }
    } else {
        {
            let (r0, r1) = t.rows2_mut(k, k + 1);
            for j in k..n {
                let p = r0[j] + q * r1[j];
                r0[j] -= p * x;
                r1[j] -= p * y;
            }
        }
        let row_to = hi.min(k + 3) + 1;
        for i in 0..row_to {
            let row = t.row_mut(i);
            let p = x * row[k] + y * row[k + 1];
            row[k] -= p;
            row[k + 1] -= p * q;
        }
        if let Some(zt) = z {
            let (z0, z1) = zt.rows2_mut(k, k + 1);
            for j in 0..n {
                let p = x * z0[j] + y * z1[j];
                z0[j] -= p;
                z1[j] -= p * q;
            }
        }
    }
}

/// Eigenvalues read off the diagonal blocks of a quasi-triangular matrix.
pub fn block_eigenvalues(t: &DenseMatrix) -> Vec<(f64, f64)> {
    let n = t.rows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let re = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let prod = -t[(i, i + 1)] * t[(i + 1, i)];
            let im = if prod > 0.0 { prod.sqrt() } else { 0.0 };
            out.push((re, im));
            out.push((re, -im));
            i += 2;
        } else {
            out.push((t[(i, i)], 0.0));
            i += 1;
        }
    }
    out
}
