//! Iterative refinement of an approximate eigendecomposition `A ≈ X̃·D̃·X̃ᵀ`.
//!
//! One step computes the residual pair `R = I − X̃ᵀX̃`, `S = X̃ᵀAX̃`, solves
//! the linearized correction equations for `Ẽ` and updates `X̃ ← X̃(I + Ẽ)`.
//! The basic step divides by differences of approximate eigenvalues and
//! breaks down for multiple eigenvalues; the clustered step replaces the
//! within-cluster equations by a symmetry constraint and never divides by a
//! gap smaller than the cluster threshold.

mod cluster;
mod driver;
mod step;

use thiserror::Error;

use crate::matkit::{
    accurate_product, accurate_residual, split_product, AccumMode, DenseMatrix, DiagMatrix,
    MatError, SymMatrix, UNIT_ROUNDOFF,
};

pub use cluster::{detect_clusters, ClusterMap};
pub use driver::{
    refine_loop, ConvergenceTrace, EigenApprox, IterRecord, RefineConfig, RefineOutcome, StepKind,
    StopReason,
};
pub use step::{apply_correction, basic_step, clustered_step, Correction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("approximate eigenvalues {i} and {j} are too close (gap {gap:e} <= floor {floor:e})")]
    BreakdownNearMultiple {
        i: usize,
        j: usize,
        gap: f64,
        floor: f64,
    },
    #[error("column {index} is far from normalized (1 - r_ii = {denom:e})")]
    BadApproximation { index: usize, denom: f64 },
    #[error("indices {i} and {j} lie in different clusters but their gap {gap:e} is below delta1/2 = {half:e}")]
    InconsistentClusters {
        i: usize,
        j: usize,
        gap: f64,
        half: f64,
    },
    #[error("X is not close enough to orthogonal (||I - XᵀX||₂ = {0:e} >= 1)")]
    NotNearOrthogonal(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl RefineError {
    /// Failures that end a refinement run as a breakdown rather than a hard error.
    pub fn is_breakdown(&self) -> bool {
        matches!(
            self,
            Self::BreakdownNearMultiple { .. }
                | Self::BadApproximation { .. }
                | Self::InconsistentClusters { .. }
        )
    }
}

/// The constant matrices `R = I − X̃ᵀX̃` and `S = X̃ᵀAX̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub r: SymMatrix,
    pub s: SymMatrix,
    pub mode: AccumMode,
}

impl ResidualPair {
    pub fn n(&self) -> usize {
        self.r.n()
    }

    /// `d̃_i = s_ii / (1 − r_ii)`.
    pub fn approx_eigenvalues(&self) -> DiagMatrix {
        DiagMatrix::from(
            (0..self.n())
                .map(|i| self.s.get(i, i) / (1.0 - self.r.get(i, i)))
                .collect::<Vec<_>>(),
        )
    }

    /// First-order size of the remaining error in eigenvalue units:
    /// `‖offdiag(S)‖_F + max|d̃|·‖R‖_F`.
    pub fn residual_scale(&self, d: &DiagMatrix) -> f64 {
        self.s.as_dense().offdiag_frobenius_norm()
            + d.max_abs() * self.r.as_dense().frobenius_norm()
    }

    /// Default cluster threshold: `max(1e3·u·‖S‖_F, 2·residual_scale)`.
    ///
    /// Approximate eigenvalues belonging to one multiple eigenvalue differ by
    /// second-order terms, which the first-order residual scale dominates.
    pub fn default_delta1(&self, d: &DiagMatrix) -> f64 {
        let noise = 1e3 * UNIT_ROUNDOFF * self.s.as_dense().frobenius_norm();
        noise.max(2.0 * self.residual_scale(d))
    }
}

/// Computes `R` and `S` for `A` and `X` in the given precision regime.
pub fn residuals(
    a: &SymMatrix,
    x: &DenseMatrix,
    mode: AccumMode,
) -> Result<ResidualPair, RefineError> {
    let n = a.n();
    if x.shape() != (n, n) {
        return Err(MatError::DimensionMismatch {
            op: "residuals",
            left: (n, n),
            right: x.shape(),
        }
        .into());
    }
    let xt = x.transpose();
    let r = accurate_residual(&DenseMatrix::identity(n), &xt, x, mode)?;
    let ax = accurate_product(a.as_dense(), x, mode)?;
    let s = accurate_product(&xt, &ax, mode)?;
    Ok(ResidualPair {
        r: SymMatrix::symmetrized(&r),
        s: SymMatrix::symmetrized(&s),
        mode,
    })
}

/// [`residuals`] in compensated mode for `X = hi + lo` given in two words.
pub fn residuals_split(
    a: &SymMatrix,
    hi: &DenseMatrix,
    lo: &DenseMatrix,
) -> Result<ResidualPair, RefineError> {
    let n = a.n();
    for x in [hi, lo] {
        if x.shape() != (n, n) {
            return Err(MatError::DimensionMismatch {
                op: "residuals_split",
                left: (n, n),
                right: x.shape(),
            }
            .into());
        }
    }
    let (hit, lot) = (hi.transpose(), lo.transpose());
    let (r, _) = split_product(
        Some(&DenseMatrix::identity(n)),
        true,
        &[&hit, &lot],
        &[hi, lo],
    )?;
    let (ax_hi, ax_lo) = split_product(None, false, &[a.as_dense()], &[hi, lo])?;
    let (s, _) = split_product(None, false, &[&hit, &lot], &[&ax_hi, &ax_lo])?;
    Ok(ResidualPair {
        r: SymMatrix::symmetrized(&r),
        s: SymMatrix::symmetrized(&s),
        mode: AccumMode::Compensated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::jacobi_eigen;

    #[test]
    fn identity_eigenvectors() {
        let a = SymMatrix::from_dense(
            DenseMatrix::from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, -1.0], &[0.0, -1.0, 4.0]])
                .unwrap(),
        )
        .unwrap();
        let rs = residuals(&a, &DenseMatrix::identity(3), AccumMode::Working).unwrap();
        assert_eq!(rs.r.as_dense(), &DenseMatrix::zeros(3, 3));
        assert_eq!(rs.s, a);
    }

    #[test]
    fn rotation_residuals() {
        let th: f64 = 0.01;
        let a = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let x = DenseMatrix::from_rows(&[&[th.cos(), -th.sin()], &[th.sin(), th.cos()]]).unwrap();
        let rs = residuals(&a, &x, AccumMode::Working).unwrap();
        assert!(rs.r.as_dense().max_abs() < 1e-16);
        // s12 = cosθ·sinθ·(2 − 1)
        assert!((rs.s.get(0, 1) - th.sin() * th.cos()).abs() < 1e-17);
        assert!((rs.s.get(0, 1) - 9.99933334666654e-3).abs() < 1e-16);
    }

    #[test]
    fn oracle_eigenvectors_have_small_residuals() {
        let m = DenseMatrix::from_fn(8, 8, |i, j| {
            1.0 / (1.0 + i as f64 + j as f64) + if i == j { i as f64 } else { 0.0 }
        });
        let a = SymMatrix::from_dense(m).unwrap();
        let e = jacobi_eigen(&a).unwrap();
        for mode in [AccumMode::Working, AccumMode::Compensated] {
            let rs = residuals(&a, &e.vectors, mode).unwrap();
            assert!(rs.r.as_dense().frobenius_norm() <= 1e-13);
            assert!(
                rs.s.as_dense().offdiag_frobenius_norm() <= 1e-12 * a.as_dense().frobenius_norm()
            );
        }
    }

    #[test]
    fn split_with_zero_tail_matches_compensated() {
        let m = DenseMatrix::from_fn(5, 5, |i, j| {
            ((i + 2 * j) as f64).cos() + if i == j { 3.0 } else { 0.0 }
        });
        let a = SymMatrix::from_dense(m.add(&m.transpose()).unwrap()).unwrap();
        let x = DenseMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                1.0
            } else {
                1e-3 * (i as f64 - j as f64)
            }
        });
        let one = residuals(&a, &x, AccumMode::Compensated).unwrap();
        let two = residuals_split(&a, &x, &DenseMatrix::zeros(5, 5)).unwrap();
        assert_eq!(one.r, two.r);
        assert!(one.s.as_dense().max_abs_diff(two.s.as_dense()).unwrap() <= 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let a = SymMatrix::identity(3);
        assert!(residuals(&a, &DenseMatrix::identity(2), AccumMode::Working).is_err());
    }
}
