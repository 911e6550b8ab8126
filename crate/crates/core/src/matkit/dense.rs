use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::MatError;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if rows == 0 || cols == 0 {
            return Err(MatError::Empty);
        }
        if data.len() != rows * cols {
            return Err(MatError::DimensionMismatch {
                op: "new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
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
        Self::from_raw(rows, cols, data)
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, MatError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(MatError::Ragged);
        }
        Self::new(
            r,
            c,
            rows.iter().flat_map(|row| row.iter().copied()).collect(),
        )
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| alpha * v).collect(),
        )
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, MatError> {
        if self.shape() != other.shape() {
            return Err(MatError::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `I + self` for a square matrix.
    pub fn plus_identity(&self) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m.data[i * self.cols + i] += 1.0;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - b_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, MatError> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn frobenius_norm(&self) -> f64 {
        super::frobenius_norm(self)
    }

    /// Frobenius norm of the strictly off-diagonal part.
    pub fn offdiag_frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    let v = self.get(i, j);
                    acc += v * v;
                }
            }
        }
        acc.sqrt()
    }

    /// Sub-matrix formed by the given row and column indices.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>12.5e} ", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Dense symmetric matrix. Construction symmetrizes the input exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    inner: DenseMatrix,
    max_asymmetry: f64,
}

/// Relative asymmetry above which [`SymMatrix::from_dense`] refuses the input.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-8;

impl SymMatrix {
    /// Symmetrizes `m` as `(M + Mᵀ)/2`, recording the largest `|m_ij - m_ji|`.
    ///
    /// Fails when that asymmetry exceeds `1e-8 · ‖M‖_F`.
    pub fn from_dense(m: DenseMatrix) -> Result<Self, MatError> {
        if !m.is_square() {
            return Err(MatError::NotSquare(m.shape()));
        }
        if !m.is_finite() {
            let pos = m.as_slice().iter().position(|v| !v.is_finite()).unwrap();
            return Err(MatError::NonFinite {
                row: pos / m.cols(),
                col: pos % m.cols(),
            });
        }
        let (inner, max_asymmetry) = symmetrize(&m);
        let limit = ASYMMETRY_TOLERANCE * m.frobenius_norm();
        if max_asymmetry > limit {
            return Err(MatError::Asymmetric {
                asymmetry: max_asymmetry,
                limit,
            });
        }
        Ok(Self {
            inner,
            max_asymmetry,
        })
    }

    /// Symmetrizes without the asymmetry gate. Used for computed residuals
    /// that are symmetric in exact arithmetic.
    pub(crate) fn symmetrized(m: &DenseMatrix) -> Self {
        let (inner, max_asymmetry) = symmetrize(m);
        Self {
            inner,
            max_asymmetry,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DenseMatrix::identity(n),
            max_asymmetry: 0.0,
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            inner: DiagMatrix::from(d.to_vec()).to_dense(),
            max_asymmetry: 0.0,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.max_asymmetry
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.inner
    }
}

fn symmetrize(m: &DenseMatrix) -> (DenseMatrix, f64) {
    let n = m.rows();
    let mut out = m.clone();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m.get(i, j), m.get(j, i));
            asym = asym.max((a - b).abs());
            let avg = if a == b { a } else { 0.5 * (a + b) };
            out.set(i, j, avg);
            out.set(j, i, avg);
        }
    }
    (out, asym)
}

impl AsRef<DenseMatrix> for SymMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        &self.inner
    }
}

impl AsRef<DenseMatrix> for DenseMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        self
    }
}

/// Diagonal matrix stored as its diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagMatrix {
    d: Vec<f64>,
}

impl DiagMatrix {
    pub fn new(d: Vec<f64>) -> Result<Self, MatError> {
        if d.is_empty() {
            return Err(MatError::Empty);
        }
        if let Some(pos) = d.iter().position(|v| !v.is_finite()) {
            return Err(MatError::NonFinite { row: pos, col: pos });
        }
        Ok(Self { d })
    }

    pub fn zeros(n: usize) -> Self {
        Self { d: vec![0.0; n] }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.d.len()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.d
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.d
    }

    /// Largest `|d_i|`, which is also the spectral norm.
    pub fn max_abs(&self) -> f64 {
        self.d.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.d.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &v) in self.d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }
}

impl From<Vec<f64>> for DiagMatrix {
    fn from(d: Vec<f64>) -> Self {
        Self { d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_non_finite() {
        let err = DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, MatError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn sym_from_dense_symmetrizes_small_noise() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0 + 1e-12, 3.0]]).unwrap();
        let s = SymMatrix::from_dense(m).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
        assert!((s.max_asymmetry() - 1e-12).abs() < 1e-15);
    }

    #[test]
    fn sym_from_dense_rejects_large_asymmetry() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 3.0]]).unwrap();
        assert!(matches!(
            SymMatrix::from_dense(m),
            Err(MatError::Asymmetric { .. })
        ));
    }

    #[test]
    fn offdiag_norm() {
        let m = DenseMatrix::from_rows(&[&[9.0, 3.0], &[4.0, 9.0]]).unwrap();
        assert_eq!(m.offdiag_frobenius_norm(), 5.0);
    }
}
