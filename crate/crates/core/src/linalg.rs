//! Dense row-major matrices and the handful of kernels the pipeline needs:
//! biased covariance and a cyclic Jacobi symmetric eigensolver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-column matrix still has `rows` empty rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(self.iter_rows().map(|r| dot(r, v)).collect())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Biased (1/n) covariance of the rows of `x`.
///
/// With `centered = true` the rows are taken as already centered and the
/// column means are not subtracted (used for class-centered LDA scatter).
pub fn covariance(x: &Matrix, centered: bool) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let p = x.cols();
    let means = if centered {
        vec![0.0; p]
    } else {
        x.column_means()
    };
    let mut s = Matrix::zeros(p, p);
    let mut centered_row = vec![0.0; p];
    for r in x.iter_rows() {
        for ((c, v), m) in centered_row.iter_mut().zip(r).zip(&means) {
            *c = v - m;
        }
        for a in 0..p {
            let ca = centered_row[a];
            if ca == 0.0 {
                continue;
            }
            let s_row = &mut s.data[a * p..(a + 1) * p];
            for b in a..p {
                s_row[b] += ca * centered_row[b];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for a in 0..p {
        for b in a..p {
            let v = s[(a, b)] * inv_n;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    Ok(s)
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order and
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
/// drops below `1e-12 * ||A||_F`, for at most 100 sweeps.
pub fn sym_eig(a: &Matrix) -> Result<SymEigen> {
    let p = a.rows();
    if a.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: a.cols(),
        });
    }
    let sym_tol = 1e-9 * a.max_abs().max(1.0);
    for i in 0..p {
        for j in (i + 1)..p {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if gap > sym_tol {
                return Err(Error::AsymmetricMatrix { row: i, col: j, gap });
            }
        }
    }

    let mut m = a.clone();
    // symmetrize exactly so rotations stay consistent
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(p);
    let scale = m.frobenius_norm();
    let threshold = JACOBI_TOL * scale;

    let off_norm = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..p {
            for j in (i + 1)..p {
                s += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&m) <= threshold;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for q in 1..p {
            for r in 0..q {
                let apq = m[(r, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(r, r)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, r, q, c, s, t);
            }
        }
        converged = off_norm(&m) <= threshold;
    }
    if !converged {
        return Err(Error::EigenNotConverged { sweeps });
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        for row in 0..p {
            vectors[(row, dst)] = v[(row, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Applies the Jacobi rotation zeroing `m[r][q]`.
fn rotate(m: &mut Matrix, v: &mut Matrix, r: usize, q: usize, c: f64, s: f64, t: f64) {
    let p = m.rows();
    let apq = m[(r, q)];
    let tau = s / (1.0 + c);
    m[(r, r)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(r, q)] = 0.0;
    m[(q, r)] = 0.0;
    for k in 0..p {
        if k == r || k == q {
            continue;
        }
        let akr = m[(k, r)];
        let akq = m[(k, q)];
        let new_kr = akr - s * (akq + tau * akr);
        let new_kq = akq + s * (akr - tau * akq);
        m[(k, r)] = new_kr;
        m[(r, k)] = new_kr;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    for k in 0..p {
        let vkr = v[(k, r)];
        let vkq = v[(k, q)];
        v[(k, r)] = vkr - s * (vkq + tau * vkr);
        v[(k, q)] = vkq + s * (vkr - tau * vkq);
    }
}
