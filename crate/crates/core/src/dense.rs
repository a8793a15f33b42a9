//! Small dense matrices and direct factorizations.
//!
//! Everything here works on row-major `f64` storage. Sizes are the local
//! problem sizes of the smoothers (at most a few thousand) or the coarse
//! grid, so no blocking is attempted.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
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

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &DenseMatrix) -> DenseMatrix {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        DenseMatrix::from_fn(r, c, |i, j| {
            self[(i / other.rows, j / other.cols)] * other[(i % other.rows, j % other.cols)]
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest entry of `|A - Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// Principal submatrix on the given index set.
    pub fn submatrix(&self, idx: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }

    /// Lower Cholesky factor `L` with `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<DenseMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for p in 0..j {
                d -= l[(j, p)] * l[(j, p)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::MassNotSpd { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// Solves `A x = b` for SPD `A` through a Cholesky factorization.
    pub fn solve_spd(&self, b: &[f64]) -> Result<Vec<f64>> {
        let l = self.cholesky()?;
        let mut y = b.to_vec();
        forward_substitute(&l, &mut y);
        backward_substitute_transposed(&l, &mut y);
        Ok(y)
    }

    /// Inverse of an SPD matrix.
    pub fn inverse_spd(&self) -> Result<DenseMatrix> {
        let n = self.rows;
        let l = self.cholesky()?;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            forward_substitute(&l, &mut col);
            backward_substitute_transposed(&l, &mut col);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `L y = b` in place for lower triangular `L`.
pub fn forward_substitute(l: &DenseMatrix, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let mut s = b[i];
        let row = l.row(i);
        for p in 0..i {
            s -= row[p] * b[p];
        }
        b[i] = s / row[i];
    }
}

/// Solves `Lᵀ x = y` in place for lower triangular `L`.
pub fn backward_substitute_transposed(l: &DenseMatrix, b: &mut [f64]) {
    let n = l.rows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in i + 1..n {
            s -= l[(p, i)] * b[p];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Cholesky factorization of a symmetric positive definite band matrix.
///
/// Stores the lower band row by row: entry `(i, j)` with `i - bw <= j <= i`
/// lives at `i * (bw + 1) + (j + bw - i)`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the matrix given as rows of `(column, value)` pairs. Entries
    /// above the diagonal are ignored; the matrix is taken to be symmetric.
    pub fn factor(n: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        assert_eq!(rows.len(), n);
        let bw = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                r.iter()
                    .filter(move |(j, _)| *j <= i)
                    .map(move |(j, _)| i - j)
            })
            .max()
            .unwrap_or(0);
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                if j <= i {
                    band[i * w + (j + bw - i)] += v;
                }
            }
        }
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = band[j * w + bw];
            for p in lo..j {
                let ljp = band[j * w + (p + bw - j)];
                d -= ljp * ljp;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "banded Cholesky pivot {j} is {d:e}"
                )));
            }
            let djj = d.sqrt();
            band[j * w + bw] = djj;
            let hi = (j + bw + 1).min(n);
            for i in j + 1..hi {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = band[i * w + (j + bw - i)];
                for p in lo_i..j {
                    s -= band[i * w + (p + bw - i)] * band[j * w + (p + bw - j)];
                }
                band[i * w + (j + bw - i)] = s / djj;
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Number of floating point operations of one `solve`.
    pub fn solve_flops(&self) -> u64 {
        4 * (self.n as u64) * (self.bw as u64 + 1)
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        x.copy_from_slice(b);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for p in lo..i {
                s -= self.band[i * w + (p + bw - i)] * x[p];
            }
            x[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let xi = x[i] / self.band[i * w + bw];
            x[i] = xi;
            let lo = i.saturating_sub(bw);
            for p in lo..i {
                x[p] -= self.band[i * w + (p + bw - i)] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DenseMatrix {
        let b = DenseMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        let mut a = b.transpose().matmul(&b);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd(6);
        let l = a.cholesky().unwrap();
        let r = l.matmul(&l.transpose());
        let mut diff = r.clone();
        diff.add_scaled(-1.0, &a);
        assert!(diff.max_abs() < 1e-13);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            a.cholesky(),
            Err(Error::MassNotSpd { pivot: 1, .. })
        ));
    }

    #[test]
    fn banded_matches_dense() {
        let n = 9;
        let a = DenseMatrix::from_fn(n, n, |i, j| {
            let d = i.abs_diff(j);
            match d {
                0 => 4.0,
                1 => -1.0,
                2 => 0.3,
                _ => 0.0,
            }
        });
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| a[(i, j)] != 0.0)
                    .map(|j| (j, a[(i, j)]))
                    .collect()
            })
            .collect();
        let chol = BandedCholesky::factor(n, &rows).unwrap();
        assert_eq!(chol.bandwidth(), 2);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        chol.solve(&b, &mut x);
        let xd = a.solve_spd(&b).unwrap();
        for (p, q) in x.iter().zip(&xd) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn kron_shape_and_entries() {
        let a = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let i = DenseMatrix::identity(2);
        let k = a.kron(&i);
        assert_eq!(k[(0, 2)], 2.0);
        assert_eq!(k[(3, 1)], 3.0);
        assert_eq!(k[(1, 2)], 0.0);
    }
}
