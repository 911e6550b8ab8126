//! Dense matrix substrate: storage, products, norms, compensated residual
//! arithmetic, an LU solver and a cyclic Jacobi eigensolver used as an
//! independent oracle.

mod dense;
pub mod eft;
mod jacobi;
mod lu;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dense::{DenseMatrix, DiagMatrix, SymMatrix, ASYMMETRY_TOLERANCE};
pub use jacobi::{jacobi_eigen, jacobi_eigen_with_limit, SymEigen, DEFAULT_ORACLE_LIMIT};
pub use lu::{inverse, lu_solve};

/// Unit roundoff of binary64, `2⁻⁵³`.
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix must be square, got {0:?}")]
    NotSquare((usize, usize)),
    #[error("matrix has no entries")]
    Empty,
    #[error("rows have different lengths")]
    Ragged,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("asymmetry {asymmetry:e} exceeds limit {limit:e}")]
    Asymmetric { asymmetry: f64, limit: f64 },
    #[error("Jacobi eigensolver exceeded {sweeps} sweeps (off-diagonal norm {off:e})")]
    SweepLimit { sweeps: usize, off: f64 },
    #[error("order {n} exceeds the oracle limit {limit}")]
    OracleTooLarge { n: usize, limit: usize },
    #[error("matrix is singular (zero pivot in column {0})")]
    Singular(usize),
}

/// Precision regime for residual products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccumMode {
    /// Plain binary64 accumulation.
    #[default]
    Working,
    /// Error-free transformations with a single final rounding.
    Compensated,
}

fn check_product(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<(), MatError> {
    if a.cols() != b.rows() {
        return Err(MatError::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Standard product in working precision.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    check_product("matmul", a, b)?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = DenseMatrix::zeros(m, n);
    let bs = b.as_slice();
    let out = c.as_mut_slice();
    for i in 0..m {
        let crow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a.row(i).iter().enumerate().take(k) {
            if aip == 0.0 {
                continue;
            }
            let brow = &bs[p * n..(p + 1) * n];
            for (cij, &bpj) in crow.iter_mut().zip(brow) {
                *cij += aip * bpj;
            }
        }
    }
    Ok(c)
}

/// `Aᵀ·B` without materializing the transpose.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    matmul(&a.transpose(), b)
}

/// Product `A·B` in the requested precision regime.
///
/// `Working` is bitwise identical to [`matmul`]. `Compensated` evaluates every
/// entry with [`eft::dot2`] in a fixed left-to-right order.
pub fn accurate_product(
    a: &DenseMatrix,
    b: &DenseMatrix,
    mode: AccumMode,
) -> Result<DenseMatrix, MatError> {
    match mode {
        AccumMode::Working => matmul(a, b),
        AccumMode::Compensated => {
            check_product("accurate_product", a, b)?;
            let bt = b.transpose();
            Ok(DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
                eft::dot2(a.row(i), bt.row(j))
            }))
        }
    }
}

/// `C − A·B` in the requested precision regime.
///
/// In `Compensated` mode `c_ij` enters the compensated accumulation, so the
/// cancellation in e.g. `I − XᵀX` happens before the single final rounding.
pub fn accurate_residual(
    c: &DenseMatrix,
    a: &DenseMatrix,
    b: &DenseMatrix,
    mode: AccumMode,
) -> Result<DenseMatrix, MatError> {
    check_product("accurate_residual", a, b)?;
    if c.shape() != (a.rows(), b.cols()) {
        return Err(MatError::DimensionMismatch {
            op: "accurate_residual",
            left: c.shape(),
            right: (a.rows(), b.cols()),
        });
    }
    match mode {
        AccumMode::Working => c.sub(&matmul(a, b)?),
        AccumMode::Compensated => {
            let bt = b.transpose();
            Ok(DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
                eft::dot2_with_init(
                    c.get(i, j),
                    a.row(i).iter().map(|v| -v),
                    bt.row(j).iter().copied(),
                )
            }))
        }
    }
}

/// `C + σ·(A₁ + A₂ + …)(B₁ + B₂ + …)` for `σ = ±1`, with every entry
/// accumulated by a compensated dot product and returned as an unevaluated
/// sum `hi + lo`.
///
/// Operands given as several parts let a matrix carried in two words
/// enter a product without first being rounded to one.
pub fn split_product(
    c: Option<&DenseMatrix>,
    negate: bool,
    a_parts: &[&DenseMatrix],
    b_parts: &[&DenseMatrix],
) -> Result<(DenseMatrix, DenseMatrix), MatError> {
    let (Some(a0), Some(b0)) = (a_parts.first(), b_parts.first()) else {
        return Err(MatError::Empty);
    };
    for a in a_parts {
        check_product("split_product", a, b0)?;
        if a.shape() != a0.shape() {
            return Err(MatError::DimensionMismatch {
                op: "split_product",
                left: a0.shape(),
                right: a.shape(),
            });
        }
    }
    for b in b_parts {
        if b.shape() != b0.shape() {
            return Err(MatError::DimensionMismatch {
                op: "split_product",
                left: b0.shape(),
                right: b.shape(),
            });
        }
    }
    let (m, n) = (a0.rows(), b0.cols());
    if let Some(c) = c {
        if c.shape() != (m, n) {
            return Err(MatError::DimensionMismatch {
                op: "split_product",
                left: c.shape(),
                right: (m, n),
            });
        }
    }
    let sign = if negate { -1.0 } else { 1.0 };
    let bts: Vec<DenseMatrix> = b_parts.iter().map(|b| b.transpose()).collect();
    let mut hi = DenseMatrix::zeros(m, n);
    let mut lo = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let init = c.map_or(0.0, |c| c.get(i, j));
            let xs = a_parts
                .iter()
                .flat_map(|a| bts.iter().map(move |_| a.row(i)))
                .flatten()
                .map(|v| sign * v);
            let ys = a_parts
                .iter()
                .flat_map(|_| bts.iter().map(|bt| bt.row(j)))
                .flatten()
                .copied();
            let (h, l) = eft::dot2_pair(init, xs, ys);
            hi.set(i, j, h);
            lo.set(i, j, l);
        }
    }
    Ok((hi, lo))
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    // scaled accumulation avoids overflow for huge entries
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let acc: f64 = m.as_slice().iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * acc.sqrt()
}

/// Largest singular value, from Lanczos on `MᵀM`.
///
/// Starts from the normalized all-ones vector; a second deterministic start
/// `(1, 1/2, 1/3, …)` guards against a start orthogonal to the dominant
/// singular vector, and the larger estimate is returned. Lanczos runs with
/// full reorthogonalization until the Krylov space is invariant, so close
/// leading singular values cost no extra iterations.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64, MatError> {
    let n = m.cols();
    let scale = m.max_abs();
    if n == 0 || scale == 0.0 {
        return Ok(0.0);
    }
    let m = m.scale(1.0 / scale);
    let ones = vec![1.0; n];
    let harmonic: Vec<f64> = (0..n).map(|i| 1.0 / (i + 1) as f64).collect();
    let a = lanczos_sigma(&m, ones);
    let b = if n > 1 {
        lanczos_sigma(&m, harmonic)
    } else {
        a
    };
    let r = scale * a.max(b);
    debug_assert!(r <= frobenius_norm(&m) * scale * (1.0 + 1e-12));
    Ok(r)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn lanczos_sigma(m: &DenseMatrix, mut q: Vec<f64>) -> f64 {
    let n = m.cols();
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);
    let (mut alpha, mut beta) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    loop {
        // w = Mᵀ(M q)
        let mq: Vec<f64> = (0..m.rows()).map(|i| dot(m.row(i), &q)).collect();
        let mut w = vec![0.0; n];
        for (i, &v) in mq.iter().enumerate() {
            for (wj, &mij) in w.iter_mut().zip(m.row(i)) {
                *wj += mij * v;
            }
        }
        // dividing by qᵀq keeps exact cases such as M = cI exact
        let a = dot(&q, &w) / dot(&q, &q);
        alpha.push(a);
        let scale = dot(&w, &w).sqrt().max(a.abs());
        basis.push(q);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nw = dot(&w, &w).sqrt();
        if basis.len() == n || nw <= 1e-14 * scale.max(alpha[0].abs()) {
            break;
        }
        beta.push(nw);
        q = w.into_iter().map(|x| x / nw).collect();
    }
    tridiagonal_max_eigenvalue(&alpha, &beta).max(0.0).sqrt()
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] / q };
        q = a[i] - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (a[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiagonal_max_eigenvalue(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    let radius = |i: usize| {
        let left = if i > 0 { b[i - 1].abs() } else { 0.0 };
        let right = if i < b.len() { b[i].abs() } else { 0.0 };
        left + right
    };
    let mut hi = (0..k).map(|i| a[i] + radius(i)).fold(f64::MIN, f64::max);
    let mut lo = (0..k)
        .map(|i| a[i] - radius(i))
        .fold(f64::MAX, f64::min)
        .min(a.iter().cloned().fold(f64::MIN, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_product_matches_single_part() {
        let a = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1 - 0.5);
        let b = DenseMatrix::from_fn(4, 2, |i, j| 1.0 / (1 + i + j) as f64);
        let (hi, _) = split_product(None, false, &[&a], &[&b]).unwrap();
        assert_eq!(
            hi,
            accurate_product(&a, &b, AccumMode::Compensated).unwrap()
        );
        let c = DenseMatrix::identity(3).select(&[0, 1, 2], &[0, 1]);
        let (hi, _) = split_product(Some(&c), true, &[&a], &[&b]).unwrap();
        assert_eq!(
            hi,
            accurate_residual(&c, &a, &b, AccumMode::Compensated).unwrap()
        );
    }

    #[test]
    fn split_product_sees_low_parts() {
        // x = 1 + 2⁻⁶⁰ carried as two words; 1 − x·x = −2⁻⁵⁹ − 2⁻¹²⁰
        let t = 2f64.powi(-60);
        let one = DenseMatrix::identity(1);
        let tail = DenseMatrix::from_rows(&[&[t]]).unwrap();
        let (hi, lo) = split_product(Some(&one), true, &[&one, &tail], &[&one, &tail]).unwrap();
        assert_eq!(hi.get(0, 0), -2.0 * t);
        assert_eq!(lo.get(0, 0), -t * t);
    }

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[&[19.0, 22.0], &[43.0, 50.0]]));
    }

    #[test]
    fn matmul_identity_and_zero() {
        let a = m(&[&[1.5, -2.0, 0.25], &[3.0, 4.0, 1.0], &[0.0, 7.0, -1.0]]);
        assert_eq!(matmul(&DenseMatrix::identity(3), &a).unwrap(), a);
        assert_eq!(
            matmul(&a, &DenseMatrix::zeros(3, 3)).unwrap(),
            DenseMatrix::zeros(3, 3)
        );
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            matmul(&a, &a),
            Err(MatError::DimensionMismatch { .. })
        ));
        assert!(accurate_product(&a, &a, AccumMode::Compensated).is_err());
    }

    #[test]
    fn compensated_identity_is_exact() {
        let a = m(&[&[0.1, 1.0 / 3.0], &[2.0f64.sqrt(), -7.25]]);
        let p = accurate_product(&DenseMatrix::identity(2), &a, AccumMode::Compensated).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn compensated_row_dot() {
        let a = m(&[&[1e16, 1.0, -1e16]]);
        let b = m(&[&[1.0], &[1.0], &[1.0]]);
        assert_eq!(
            accurate_product(&a, &b, AccumMode::Compensated)
                .unwrap()
                .get(0, 0),
            1.0
        );
        assert_eq!(
            accurate_product(&a, &b, AccumMode::Working)
                .unwrap()
                .get(0, 0),
            0.0
        );
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(3, 3)), 0.0);
        assert!((frobenius_norm(&DenseMatrix::identity(4)) - 2.0).abs() < 1e-15);
        assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0], &[0.0, 0.0]])), 5.0);
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&DenseMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-14);
        let d = m(&[&[3.0, 0.0], &[0.0, -4.0]]);
        assert!((spectral_norm(&d).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn spectral_norm_close_leading_values() {
        // singular values 1 and 1 − 1e−9 behind a rotation
        let (c, s) = (0.6, 0.8);
        let q = m(&[&[c, -s, 0.0], &[s, c, 0.0], &[0.0, 0.0, 1.0]]);
        let d = m(&[
            &[1.0, 0.0, 0.0],
            &[0.0, -(1.0 - 1e-9), 0.0],
            &[0.0, 0.0, 0.3],
        ]);
        let a = matmul(&matmul(&q, &d).unwrap(), &q.transpose()).unwrap();
        assert!((spectral_norm(&a).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_tiny_and_rectangular() {
        let a = m(&[&[3e-300, 0.0, 4e-300]]);
        assert!((spectral_norm(&a).unwrap() / 5e-300 - 1.0).abs() < 1e-14);
        let b = m(&[&[1.0], &[2.0], &[2.0]]);
        assert!((spectral_norm(&b).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_start_orthogonal_to_ones() {
        // dominant right singular vector (1, -1)/√2 is orthogonal to the ones start
        let a = m(&[&[2.0, -2.0], &[-2.0, 2.0]]);
        assert!((spectral_norm(&a).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn accurate_residual_modes_agree_on_exact_data() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let i = DenseMatrix::identity(2);
        let w = accurate_residual(&i, &x, &x, AccumMode::Working).unwrap();
        let c = accurate_residual(&i, &x, &x, AccumMode::Compensated).unwrap();
        assert_eq!(w, c);
        assert_eq!(w, m(&[&[-6.0, -10.0], &[-15.0, -21.0]]));
    }
}
