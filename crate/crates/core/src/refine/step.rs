use crate::matkit::{matmul, DenseMatrix, DiagMatrix, UNIT_ROUNDOFF};

use super::{ClusterMap, RefineError, ResidualPair};

/// Correction `E` with the contract `X_new = X(I + E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub e: DenseMatrix,
    /// Present when produced by [`clustered_step`].
    pub clusters: Option<ClusterMap>,
    /// The `d̃_i` computed alongside `E`.
    pub dnew: DiagMatrix,
}

fn diagonal_part(rs: &ResidualPair) -> Result<(DenseMatrix, DiagMatrix), RefineError> {
    let n = rs.n();
    for i in 0..n {
        let denom = 1.0 - rs.r.get(i, i);
        if denom.abs() <= 0.5 {
            return Err(RefineError::BadApproximation { index: i, denom });
        }
    }
    let d = rs.approx_eigenvalues();
    let mut e = DenseMatrix::zeros(n, n);
    for i in 0..n {
        e.set(i, i, 0.5 * rs.r.get(i, i));
    }
    Ok((e, d))
}

#[inline]
fn quotient(rs: &ResidualPair, d: &[f64], i: usize, j: usize) -> f64 {
    (rs.s.get(i, j) + d[j] * rs.r.get(i, j)) / (d[j] - d[i])
}

fn absolute_floor(d: &DiagMatrix) -> f64 {
    1e2 * UNIT_ROUNDOFF * d.max_abs()
}

/// Linearized correction assuming simple eigenvalues.
///
/// `ẽ_ii = r_ii/2`, `d̃_i = s_ii/(1 − r_ii)` and
/// `ẽ_ij = (s_ij + d̃_j·r_ij)/(d̃_j − d̃_i)`. A gap at or below
/// `max(1e2·u·max|d̃|, residual_scale)` is reported as
/// [`RefineError::BreakdownNearMultiple`]: below the residual scale the
/// approximate eigenvalues cannot separate the pair, and the quotient would
/// produce a correction of order one.
pub fn basic_step(rs: &ResidualPair) -> Result<Correction, RefineError> {
    let n = rs.n();
    let (mut e, d) = diagonal_part(rs)?;
    let floor = absolute_floor(&d).max(rs.residual_scale(&d));
    let dv = d.values();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let gap = (dv[j] - dv[i]).abs();
            if gap <= floor {
                return Err(RefineError::BreakdownNearMultiple {
                    i: i.min(j),
                    j: i.max(j),
                    gap,
                    floor,
                });
            }
            e.set(i, j, quotient(rs, dv, i, j));
        }
    }
    Ok(Correction {
        e,
        clusters: None,
        dnew: d,
    })
}

/// Linearized correction with the within-cluster equations replaced by
/// `f̃_ij = f̃_ji`.
///
/// Within a cluster `f̃_ij = r_ij/2`; across clusters the quotient of
/// [`basic_step`] is used. Uses the raw per-index `d̃` values.
pub fn clustered_step(rs: &ResidualPair, clusters: &ClusterMap) -> Result<Correction, RefineError> {
    let n = rs.n();
    if clusters.n() != n {
        return Err(RefineError::InvalidConfig(format!(
            "cluster map has {} entries, expected {n}",
            clusters.n()
        )));
    }
    let (mut e, d) = diagonal_part(rs)?;
    let floor = absolute_floor(&d);
    let half = 0.5 * clusters.delta1();
    let dv = d.values();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if clusters.same(i, j) {
                e.set(i, j, 0.5 * rs.r.get(i, j));
                continue;
            }
            let gap = (dv[j] - dv[i]).abs();
            if gap < half {
                return Err(RefineError::InconsistentClusters {
                    i: i.min(j),
                    j: i.max(j),
                    gap,
                    half,
                });
            }
            if gap <= floor {
                return Err(RefineError::BreakdownNearMultiple {
                    i: i.min(j),
                    j: i.max(j),
                    gap,
                    floor,
                });
            }
            e.set(i, j, quotient(rs, dv, i, j));
        }
    }
    Ok(Correction {
        e,
        clusters: Some(clusters.clone()),
        dnew: d,
    })
}

/// `X(I + E)`, evaluated as `X + X·E` so the identity part is not rounded.
pub fn apply_correction(x: &DenseMatrix, c: &Correction) -> Result<DenseMatrix, RefineError> {
    Ok(x.add(&matmul(x, &c.e)?)?)
}
