//! Small dense real-matrix kernel.
//!
//! Dimensions in this crate stay at desk scale (a dozen rows at most), so
//! everything here is plain `O(n³)` row-major code without blocking.

mod eig;
mod expm;
mod linalg;
mod lyapunov;

pub use eig::{spectral_norm, sym_eig, SymEigen};
pub use expm::expm;
pub use linalg::{inverse, lu_solve, sym_inverse};
pub use lyapunov::{solve_lyapunov, LyapunovCert};

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(r, c, rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    pub fn from_nested(rows: &[Vec<f64>]) -> Result<Self> {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        Self::from_rows(&refs)
    }

    /// Column vector from a slice.
    pub fn column(v: &[f64]) -> Result<Self> {
        Self::new(v.len(), 1, v.to_vec())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be non-empty");
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

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Tr[selfᵀ · other]`, the Frobenius inner product.
    pub fn frobenius_dot(&self, other: &Mat) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        dot(&self.data, &other.data)
    }

    pub fn try_mul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(matmul(self, rhs))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn sym_part(&self) -> Mat {
        assert!(self.is_square());
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..b.cols {
                out.data[i * b.cols + j] += aik * b.data[k * b.cols + j];
            }
        }
    }
    out
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        matmul(self, rhs)
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum dimension mismatch");
        Mat::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        )
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference dimension mismatch");
        Mat::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        )
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Symmetric matrix stored as its packed upper triangle (row by row), so
/// symmetry holds by representation.
#[derive(Clone, PartialEq)]
pub struct SymMat {
    dim: usize,
    packed: Vec<f64>,
}

pub(crate) fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix must be non-empty");
        Self {
            dim,
            packed: vec![0.0; packed_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, s);
        }
        m
    }

    pub fn from_packed(dim: usize, packed: Vec<f64>) -> Result<Self> {
        if dim == 0 || packed.len() != packed_len(dim) {
            return Err(Error::Dimension(format!(
                "packed symmetric {dim}x{dim} needs {} entries, got {}",
                packed_len(dim),
                packed.len()
            )));
        }
        if packed.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix entries".into()));
        }
        Ok(Self { dim, packed })
    }

    /// Takes the upper triangle of a square matrix; the lower one is ignored.
    pub fn from_upper(m: &Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let mut packed = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            for j in i..n {
                packed.push(m[(i, j)]);
            }
        }
        Ok(Self { dim: n, packed })
    }

    /// Accepts a square matrix only if `|M_ij − M_ji| ≤ tol·max(1, max|M|)`.
    pub fn try_from_mat(m: &Mat, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("symmetric matrix must be square".into()));
        }
        let scale = m.max_abs().max(1.0);
        for i in 0..m.rows() {
            for j in (i + 1)..m.cols() {
                if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                    return Err(Error::invalid(
                        "matrix",
                        format!("not symmetric at ({i},{j})"),
                    ));
                }
            }
        }
        Self::from_upper(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[upper_offset(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = upper_offset(self.dim, i, j);
        self.packed[k] = v;
    }

    pub fn to_mat(&self) -> Mat {
        let n = self.dim;
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat {
            dim: self.dim,
            packed: self.packed.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        assert_eq!(self.dim, other.dim);
        SymMat {
            dim: self.dim,
            packed: self
                .packed
                .iter()
                .zip(&other.packed)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        self.add(&other.scale(-1.0))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius norm of the full (not packed) matrix.
    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.get(i, j);
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn upper_offset(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    debug_assert!(j < n);
    // rows before i hold n + (n-1) + ... + (n-i+1) entries
    i * (2 * n - i + 1) / 2 + (j - i)
}

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.to_mat())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
