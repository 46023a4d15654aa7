//! Small dense linear-algebra kernels: a column-major matrix, Cholesky
//! factorization for the kernel systems and a Householder least-squares
//! solver for the subset fits.

use crate::error::{Error, Result};

/// Column-major dense matrix. Column `j` occupies `data[j * nrows..(j + 1) * nrows]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_columns(nrows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(nrows * columns.len());
        for c in columns {
            if c.len() != nrows {
                return Err(Error::Dimension {
                    expected: nrows,
                    got: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            nrows,
            ncols: columns.len(),
            data,
        })
    }

    /// Build from row vectors (one per sample).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(nrows, ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Dimension {
                    expected: ncols,
                    got: r.len(),
                });
            }
            for (j, &v) in r.iter().enumerate() {
                m.data[j * nrows + i] = v;
            }
        }
        Ok(m)
    }

    pub(crate) fn from_raw(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), nrows * ncols);
        Self { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.nrows;
        &mut self.data[j * n..(j + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn into_raw(self) -> Vec<f64> {
        self.data
    }

    /// Keep only the listed columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.nrows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Self {
            nrows: self.nrows,
            ncols: idx.len(),
            data,
        }
    }

    /// Keep only the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for j in 0..self.ncols {
            let c = self.col(j);
            data.extend(idx.iter().map(|&i| c[i]));
        }
        Self {
            nrows: idx.len(),
            ncols: self.ncols,
            data,
        }
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (j, &vj) in v.iter().enumerate().take(self.ncols) {
            if vj != 0.0 {
                axpy(vj, self.col(j), &mut out);
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation (divides by `n`), two-pass.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// In-place lower Cholesky factorization of a symmetric positive-definite
/// row-major `n x n` matrix. Only the lower triangle is read; on success the
/// lower triangle holds `L` with `A = L L^T`. On failure returns the pivot index.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> std::result::Result<(), usize> {
    for j in 0..n {
        let (row_j, below) = a[j * n..].split_at_mut(n);
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let ljj = d.sqrt();
        row_j[j] = ljj;
        let lj = &row_j[..j];
        for row_i in below.chunks_exact_mut(n) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], lj)) / ljj;
        }
    }
    Ok(())
}

/// Solve `L L^T x = b` given the factor produced by [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        z[i] = (z[i] - dot(row, &z[..i])) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Relative pivot size below which a subset design is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Least squares `y ~ b0 + sum_j c_j x_j` via Householder QR on centered,
/// unit-norm columns. Returns `None` when the design is rank deficient.
pub fn ols_with_intercept(columns: &[&[f64]], y: &[f64]) -> Option<OlsFit> {
    let n = y.len();
    let k = columns.len();
    if n == 0 || k >= n {
        return None;
    }
    let y_mean = mean(y);
    let mut means = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    let mut a = vec![0.0; n * k];
    for (j, c) in columns.iter().enumerate() {
        debug_assert_eq!(c.len(), n);
        let m = mean(c);
        let col = &mut a[j * n..(j + 1) * n];
        for (dst, &v) in col.iter_mut().zip(c.iter()) {
            *dst = v - m;
        }
        let s = dot(col, col).sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        col.iter_mut().for_each(|v| *v /= s);
        means.push(m);
        scales.push(s);
    }
    let mut qty: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    // Householder QR, R stored in the upper triangle of `a`.
    for j in 0..k {
        let (colj, others) = a[j * n..].split_at_mut(n);
        let x = &mut colj[j..];
        let norm = dot(x, x).sqrt();
        if norm <= RANK_TOL {
            return None;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        x[0] -= alpha;
        let vnorm2 = dot(x, x);
        for other in others.chunks_exact_mut(n) {
            let seg = &mut other[j..];
            let f = 2.0 * dot(x, seg) / vnorm2;
            axpy(-f, x, seg);
        }
        let seg = &mut qty[j..];
        let f = 2.0 * dot(x, seg) / vnorm2;
        axpy(-f, x, seg);
        // Store R_jj in place of the reflector head; the tail is no longer needed.
        x[0] = alpha;
    }
    for j in 0..k {
        if a[j * n + j].abs() <= RANK_TOL {
            return None;
        }
    }
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for j in i + 1..k {
            s -= a[j * n + i] * beta[j];
        }
        beta[i] = s / a[i * n + i];
    }
    let coefficients: Vec<f64> = beta.iter().zip(&scales).map(|(b, s)| b / s).collect();
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&means)
            .map(|(c, m)| c * m)
            .sum::<f64>();
    let mut residuals: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    for (c, col) in coefficients.iter().zip(columns) {
        axpy(-c, col, &mut residuals);
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return None;
    }
    Some(OlsFit {
        coefficients,
        intercept,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_matches_known_factor() {
        // A = L L^T with L = [[2,0,0],[1,3,0],[4,-1,5]]
        let l = [2.0, 0.0, 0.0, 1.0, 3.0, 0.0, 4.0, -1.0, 5.0];
        let mut a = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                a[i * 3 + j] = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
            }
        }
        let mut f = a.clone();
        cholesky_in_place(&mut f, 3).unwrap();
        for i in 0..3 {
            for j in 0..=i {
                assert!((f[i * 3 + j] - l[i * 3 + j]).abs() < 1e-12);
            }
        }
        let b = [1.0, 2.0, 3.0];
        let x = cholesky_solve(&f, 3, &b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert_eq!(cholesky_in_place(&mut a, 2), Err(1));
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let fit = ols_with_intercept(&[&x], &y).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn ols_flags_duplicate_columns() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(ols_with_intercept(&[&x, &x], &y).is_none());
    }

    #[test]
    fn ols_flags_constant_column() {
        let x = vec![2.0; 6];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(ols_with_intercept(&[&x], &y).is_none());
    }

    #[test]
    fn select_rows_and_columns() {
        let m = ColMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.col(1), &[2.0, 4.0, 6.0]);
        let r = m.select_rows(&[2, 0]);
        assert_eq!(r.row(0), vec![5.0, 6.0]);
        let c = m.select_columns(&[1]);
        assert_eq!(c.col(0), &[2.0, 4.0, 6.0]);
        assert_eq!(m.mul_vec(&[1.0, -1.0]), vec![-1.0, -1.0, -1.0]);
    }
}
