use super::{DenseMatrix, MatError};

/// Solves `A·Y = B` by LU factorization with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    if !a.is_square() {
        return Err(MatError::NotSquare(a.shape()));
    }
    let n = a.rows();
    if b.rows() != n {
        return Err(MatError::DimensionMismatch {
            op: "lu_solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let m = b.cols();
    let mut lu = a.clone();
    let mut y = b.clone();

    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu.get(i, k).abs()))
            .fold(
                (k, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        if pivot == 0.0 {
            return Err(MatError::Singular(k));
        }
        if p != k {
            for j in 0..n {
                let t = lu.get(k, j);
                lu.set(k, j, lu.get(p, j));
                lu.set(p, j, t);
            }
            for j in 0..m {
                let t = y.get(k, j);
                y.set(k, j, y.get(p, j));
                y.set(p, j, t);
            }
        }
        let akk = lu.get(k, k);
        for i in (k + 1)..n {
            let l = lu.get(i, k) / akk;
            if l == 0.0 {
                continue;
            }
            lu.set(i, k, l);
            for j in (k + 1)..n {
                lu[(i, j)] -= l * lu.get(k, j);
            }
            for j in 0..m {
                y[(i, j)] -= l * y.get(k, j);
            }
        }
    }

    // back substitution with U
    for k in (0..n).rev() {
        let ukk = lu.get(k, k);
        for j in 0..m {
            let mut acc = y.get(k, j);
            for i in (k + 1)..n {
                acc -= lu.get(k, i) * y.get(i, j);
            }
            y.set(k, j, acc / ukk);
        }
    }
    if !y.is_finite() {
        return Err(MatError::Singular(n - 1));
    }
    Ok(y)
}

pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    lu_solve(a, &DenseMatrix::identity(a.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::matmul;

    #[test]
    fn solves_small_system() {
        let a = DenseMatrix::from_rows(&[&[0.0, 2.0], &[1.0, 1.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[4.0], &[3.0]]).unwrap();
        let y = lu_solve(&a, &b).unwrap();
        assert_eq!(y, DenseMatrix::from_rows(&[&[1.0], &[2.0]]).unwrap());
    }

    #[test]
    fn inverse_roundtrip() {
        let a = DenseMatrix::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, -1.0], &[0.5, -1.0, 2.0]])
            .unwrap();
        let ai = inverse(&a).unwrap();
        let err = matmul(&a, &ai)
            .unwrap()
            .max_abs_diff(&DenseMatrix::identity(3))
            .unwrap();
        assert!(err < 1e-15);
    }

    #[test]
    fn singular_detected() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(inverse(&a), Err(MatError::Singular(_))));
    }
}
