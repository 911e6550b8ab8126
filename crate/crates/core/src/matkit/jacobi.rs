use super::{DenseMatrix, DiagMatrix, MatError, SymMatrix};

/// Default largest order accepted by [`jacobi_eigen`].
pub const DEFAULT_ORACLE_LIMIT: usize = 64;

const MAX_SWEEPS: usize = 60;
const OFF_TOL: f64 = 1e-14;

/// Eigendecomposition `A = Q·Λ·Qᵀ` with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub vectors: DenseMatrix,
    pub values: DiagMatrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices up to [`DEFAULT_ORACLE_LIMIT`].
///
/// Sweeps over all pairs `p < q` until the off-diagonal Frobenius norm drops
/// to `1e-14·‖A‖_F`. Slow, but independent of everything else in the crate,
/// which is what the tests need from it.
pub fn jacobi_eigen(a: &SymMatrix) -> Result<SymEigen, MatError> {
    jacobi_eigen_with_limit(a, DEFAULT_ORACLE_LIMIT)
}

pub fn jacobi_eigen_with_limit(a: &SymMatrix, limit: usize) -> Result<SymEigen, MatError> {
    let n = a.n();
    if n > limit {
        return Err(MatError::OracleTooLarge { n, limit });
    }
    let mut w = a.as_dense().clone();
    let mut v = DenseMatrix::identity(n);
    let target = OFF_TOL * w.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off = w.offdiag_frobenius_norm();
        if off <= target {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(MatError::SweepLimit { sweeps, off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut w, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w.get(i, i).total_cmp(&w.get(j, j)).then(i.cmp(&j)));
    let values = DiagMatrix::from(order.iter().map(|&i| w.get(i, i)).collect::<Vec<_>>());
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok(SymEigen { vectors, values })
}

/// Annihilates `w[p][q]` with a plane rotation and accumulates it into `v`.
fn rotate(w: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = w.get(p, q);
    if apq == 0.0 {
        return;
    }
    let n = w.rows();
    let (app, aqq) = (w.get(p, p), w.get(q, q));
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    w.set(p, p, app - t * apq);
    w.set(q, q, aqq + t * apq);
    w.set(p, q, 0.0);
    w.set(q, p, 0.0);
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let (akp, akq) = (w.get(k, p), w.get(k, q));
        let kp = c * akp - s * akq;
        let kq = s * akp + c * akq;
        w.set(k, p, kp);
        w.set(p, k, kp);
        w.set(k, q, kq);
        w.set(q, k, kq);
    }
    for k in 0..n {
        let (vkp, vkq) = (v.get(k, p), v.get(k, q));
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::matmul;

    fn check_decomposition(a: &SymMatrix, e: &SymEigen) {
        let n = a.n();
        let q = &e.vectors;
        let qtq = matmul(&q.transpose(), q).unwrap();
        assert!(qtq.max_abs_diff(&DenseMatrix::identity(n)).unwrap() <= 1e-13);
        let aq = matmul(a.as_dense(), q).unwrap();
        let ql = matmul(q, &e.values.to_dense()).unwrap();
        assert!(
            aq.sub(&ql).unwrap().frobenius_norm()
                <= 1e-12 * a.as_dense().frobenius_norm().max(1e-300)
        );
        let w = e.values.values();
        assert!(w.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn already_diagonal() {
        let a = SymMatrix::from_diagonal(&[3.0, -1.0, 2.0]);
        let e = jacobi_eigen(&a).unwrap();
        assert_eq!(e.values.values(), &[-1.0, 2.0, 3.0]);
        // permutation of the identity
        for j in 0..3 {
            let col = e.vectors.column(j);
            assert_eq!(col.iter().filter(|v| **v == 0.0).count(), 2);
            assert_eq!(col.iter().map(|v| v.abs()).sum::<f64>(), 1.0);
        }
        check_decomposition(&a, &e);
    }

    #[test]
    fn two_by_two_swap() {
        let a = SymMatrix::from_dense(DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap())
            .unwrap();
        let e = jacobi_eigen(&a).unwrap();
        assert!((e.values.values()[0] + 1.0).abs() < 1e-15);
        assert!((e.values.values()[1] - 1.0).abs() < 1e-15);
        check_decomposition(&a, &e);
    }

    #[test]
    fn identity_multiple_eigenvalue() {
        let a = SymMatrix::identity(4);
        let e = jacobi_eigen(&a).unwrap();
        assert_eq!(e.values.values(), &[1.0; 4]);
        check_decomposition(&a, &e);
    }

    #[test]
    fn dense_matrix() {
        let n = 12;
        let m = DenseMatrix::from_fn(n, n, |i, j| {
            ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 2.0 } else { 0.0 }
        });
        let a = SymMatrix::from_dense(m.add(&m.transpose()).unwrap()).unwrap();
        let e = jacobi_eigen(&a).unwrap();
        check_decomposition(&a, &e);
    }

    #[test]
    fn oracle_limit() {
        let a = SymMatrix::identity(5);
        assert!(matches!(
            jacobi_eigen_with_limit(&a, 4),
            Err(MatError::OracleTooLarge { n: 5, limit: 4 })
        ));
    }
}
