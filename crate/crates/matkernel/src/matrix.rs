//! Row-major dense matrix storage plus the small set of BLAS-like
//! operations the decomposition kernels are built on.

use crate::error::{MatError, Result};

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Two disjoint mutable row views (`i != j`).
    #[inline]
    pub fn rows2_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        assert_ne!(i, j);
        let c = self.cols;
        if i < j {
            let (a, b) = self.data.split_at_mut(j * c);
            (&mut a[i * c..(i + 1) * c], &mut b[..c])
        } else {
            let (a, b) = self.data.split_at_mut(i * c);
            (&mut b[..c], &mut a[j * c..(j + 1) * c])
        }
    }

    /// Three consecutive disjoint mutable row views starting at `i`.
    #[inline]
    pub fn rows3_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64], &mut [f64]) {
        let c = self.cols;
        let (_, rest) = self.data.split_at_mut(i * c);
        let (r0, rest) = rest.split_at_mut(c);
        let (r1, rest) = rest.split_at_mut(c);
        (r0, r1, &mut rest[..c])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        // Tiled to keep both access streams cache-resident.
        const B: usize = 32;
        for ib in (0..self.rows).step_by(B) {
            for jb in (0..self.cols).step_by(B) {
                for i in ib..(ib + B).min(self.rows) {
                    for j in jb..(jb + B).min(self.cols) {
                        t[(j, i)] = self[(i, j)];
                    }
                }
            }
        }
        t
    }

    /// Sub-matrix copy of `self[r0..r1, c0..c1]`.
    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        let mut m = Self::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            m.row_mut(i - r0).copy_from_slice(&self.row(i)[c0..c1]);
        }
        m
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += s * y;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = self.clone();
        m.axpy(1.0, other);
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut m = self.clone();
        m.axpy(-1.0, other);
        m
    }

    /// `self += s * I`
    pub fn shift_diag(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    /// Replace by the symmetric part `(self + selfᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `y = Aᵀ x`
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(&mut y, xi, self.row(i));
            }
        }
        y
    }

    /// `C = A B`
    pub fn matmul(&self, b: &Self) -> Self {
        assert_eq!(self.cols, b.rows);
        let mut c = Self::zeros(self.rows, b.cols);
        gemm_acc(&mut c, self, b);
        c
    }

    /// `C = Aᵀ B`
    pub fn matmul_tn(&self, b: &Self) -> Self {
        assert_eq!(self.rows, b.rows);
        let mut c = Self::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = b.row(k);
            for (i, &aki) in arow.iter().enumerate() {
                if aki != 0.0 {
                    axpy(c.row_mut(i), aki, brow);
                }
            }
        }
        c
    }

    /// `C = A Bᵀ`
    pub fn matmul_nt(&self, b: &Self) -> Self {
        assert_eq!(self.cols, b.cols);
        let mut c = Self::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let crow = c.row_mut(i);
            for j in 0..b.rows {
                crow[j] = dot(arow, b.row(j));
            }
        }
        c
    }

    /// LU factorization with partial pivoting; returns the factor in packed
    /// form together with the pivot permutation.
    pub fn lu(&self) -> Result<Lu> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut piv = Vec::with_capacity(n);
        let mut sign = 1.0f64;
        for k in 0..n {
            let (mut p, mut best) = (k, a[(k, k)].abs());
            for i in (k + 1)..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(MatError::Singular { context: "lu".into(), pivot: 0.0 });
            }
            if p != k {
                let (rk, rp) = a.rows2_mut(k, p);
                rk.swap_with_slice(rp);
                sign = -sign;
            }
            piv.push(p);
            let pivot = a[(k, k)];
            for i in (k + 1)..n {
                let m = a[(i, k)] / pivot;
                a[(i, k)] = m;
                if m != 0.0 {
                    let (rk, ri) = a.rows2_mut(k, i);
                    for (x, &y) in ri[k + 1..].iter_mut().zip(&rk[k + 1..]) {
                        *x -= m * y;
                    }
                }
            }
        }
        Ok(Lu { a, piv, sign })
    }

    /// Cholesky factor of a symmetric positive-definite matrix (lower).
    /// Fails if a pivot is not strictly positive.
    pub fn cholesky(&self) -> Result<Self> {
        assert!(self.is_square());
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                s -= dot(&l.row(i)[..j], &l.row(j)[..j]);
                if i == j {
                    if s <= 0.0 {
                        return Err(MatError::Singular { context: "cholesky".into(), pivot: s });
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(l)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Packed LU factorization.
pub struct Lu {
    a: DenseMatrix,
    piv: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Solve `A x = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.a.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // The factor stores fully swapped rows (multiplier columns included),
        // so the entire permutation must be applied before elimination.
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                for i in (k + 1)..n {
                    x[i] -= self.a[(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            x[k] /= self.a[(k, k)];
            let xk = x[k];
            if xk != 0.0 {
                for i in 0..k {
                    x[i] -= self.a[(i, k)] * xk;
                }
            }
        }
        x
    }

    /// Solve `A X = B` column by column.
    pub fn solve_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut x = DenseMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            x.set_col(j, &self.solve(&b.col(j)));
        }
        x
    }

    pub fn min_pivot(&self) -> f64 {
        (0..self.a.rows()).map(|i| self.a[(i, i)].abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn det(&self) -> f64 {
        self.sign * (0..self.a.rows()).map(|i| self.a[(i, i)]).product::<f64>()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `C += A B`, strip-mined over four-row bundles of C so each row of B
/// streams once per bundle while the C strip stays cache-resident.
fn gemm_acc(c: &mut DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) {
    let (m, kk, n) = (a.rows(), a.cols(), b.cols());
    const MR: usize = 4;
    const KC: usize = 256;
    let mut i = 0;
    while i < m {
        let ib = MR.min(m - i);
        for k0 in (0..kk).step_by(KC) {
            let k1 = (k0 + KC).min(kk);
            match ib {
                4 => {
                    let (c0, rest) = c.data[i * n..(i + 4) * n].split_at_mut(n);
                    let (c1, rest) = rest.split_at_mut(n);
                    let (c2, c3) = rest.split_at_mut(n);
                    for k in k0..k1 {
                        let brow = &b.data[k * n..(k + 1) * n];
                        let a0 = a[(i, k)];
                        let a1 = a[(i + 1, k)];
                        let a2 = a[(i + 2, k)];
                        let a3 = a[(i + 3, k)];
                        for (j, &bv) in brow.iter().enumerate() {
                            c0[j] += a0 * bv;
                            c1[j] += a1 * bv;
                            c2[j] += a2 * bv;
                            c3[j] += a3 * bv;
                        }
                    }
                }
                _ => {
                    for r in 0..ib {
                        let crow = &mut c.data[(i + r) * n..(i + r + 1) * n];
                        for k in k0..k1 {
                            let av = a[(i + r, k)];
                            if av != 0.0 {
                                axpy(crow, av, &b.data[k * n..(k + 1) * n]);
                            }
                        }
                    }
                }
            }
        }
        i += ib;
    }
}
