//! Dense row-major matrices and the handful of factorizations the data
//! generators need (Cholesky, QR, symmetric eigenvalues).

use serde::{Deserialize, Serialize};

use crate::error::{NbdError, Result};

/// A dense row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec size mismatch");
        Mat { rows, cols, data }
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "Mat::from_rows needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Select a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other` (plain matrix product).
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        matmul_acc(&mut out.data, &self.data, &other.data, self.rows, self.cols, other.cols);
        out
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// Serialized as nested arrays so checkpoints stay human-readable.
impl Serialize for Mat {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(de)?;
        if rows.is_empty() {
            return Ok(Mat::zeros(0, 0));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(Mat::from_rows(&rows))
    }
}

/// `c += a * b` with `a: r x m`, `b: m x n`, `c: r x n`, all row-major flat
/// slices. The i-k-j loop order keeps the inner loop free of reductions so
/// it vectorizes, and the fixed k order makes results bit-reproducible
/// regardless of thread count.
pub fn matmul_acc(c: &mut [f64], a: &[f64], b: &[f64], r: usize, m: usize, n: usize) {
    assert_eq!(a.len(), r * m);
    assert_eq!(b.len(), m * n);
    assert_eq!(c.len(), r * n);
    let work = r * m * n;
    if work >= 1 << 18 && rayon::current_num_threads() > 1 {
        use rayon::prelude::*;
        c.par_chunks_mut(n).enumerate().for_each(|(i, crow)| {
            matmul_row(crow, &a[i * m..(i + 1) * m], b, n);
        });
    } else {
        for i in 0..r {
            matmul_row(&mut c[i * n..(i + 1) * n], &a[i * m..(i + 1) * m], b, n);
        }
    }
}

#[inline]
fn matmul_row(crow: &mut [f64], arow: &[f64], b: &[f64], n: usize) {
    for (k, &aik) in arow.iter().enumerate() {
        let brow = &b[k * n..(k + 1) * n];
        for (cv, &bv) in crow.iter_mut().zip(brow) {
            *cv += aik * bv;
        }
    }
}

/// `c += a^T * b` with `a: r x m`, `b: r x n`, `c: m x n`.
pub fn matmul_tn_acc(c: &mut [f64], a: &[f64], b: &[f64], r: usize, m: usize, n: usize) {
    assert_eq!(a.len(), r * m);
    assert_eq!(b.len(), r * n);
    assert_eq!(c.len(), m * n);
    for k in 0..r {
        let arow = &a[k * m..(k + 1) * m];
        let brow = &b[k * n..(k + 1) * n];
        for (i, &aki) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aki * bv;
            }
        }
    }
}

/// Transpose a flat row-major `r x c` slice into `out` (`c x r`).
pub fn transpose_into(out: &mut [f64], x: &[f64], r: usize, c: usize) {
    assert_eq!(x.len(), r * c);
    assert_eq!(out.len(), r * c);
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x[i * c + j];
        }
    }
}

// Plain left-to-right summation, matching the k-order of `matmul_acc` so
// that row dots and matmul entries over the same data agree bit-for-bit.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Cholesky factorization of a symmetric positive definite matrix.
/// Returns the lower-triangular factor `L` with `A = L L^T`.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    if a.rows() != a.cols() {
        return Err(NbdError::NotSpd);
    }
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(NbdError::NotSpd);
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Orthonormalize the rows of a square matrix via modified Gram-Schmidt.
/// Used to draw random orthogonal bases; the input must have full rank
/// (holds almost surely for Gaussian draws).
pub fn orthonormalize_rows(a: &mut Mat) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    for i in 0..n {
        for j in 0..i {
            let proj = dot(a.row(i), a.row(j));
            // Split borrows: copy row j, then update row i.
            let rj: Vec<f64> = a.row(j).to_vec();
            for (v, &u) in a.row_mut(i).iter_mut().zip(&rj) {
                *v -= proj * u;
            }
        }
        let norm = dot(a.row(i), a.row(i)).sqrt();
        assert!(norm > 1e-12, "rank-deficient basis draw");
        for v in a.row_mut(i) {
            *v /= norm;
        }
    }
}

/// All eigenvalues of a symmetric matrix via the cyclic Jacobi method.
/// Plenty for the small covariance matrices used in data generation.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < 1e-12 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}
