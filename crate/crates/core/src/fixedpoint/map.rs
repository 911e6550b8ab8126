use crate::matkit::{DenseMatrix, DiagMatrix, UNIT_ROUNDOFF};

use super::{remainders, FixedPointError, ProblemData, StateVector};

/// One application of `ℱ`:
///
/// - `d̂_i = (s_ii + Δ₂_ii) / (1 − r_ii − Δ₁_ii)`
/// - `f̂_ij = (s_ij + Δ₂_ij + d_j(r_ij + Δ₁_ij)) / (d_j − d_i)` across clusters
/// - `f̂_ij = (r_ij + Δ₁_ij) / 2` within a cluster, including `i = j`
pub fn fmap(z: &StateVector, pd: &ProblemData) -> Result<StateVector, FixedPointError> {
    let n = pd.n();
    if z.n() != n {
        return Err(FixedPointError::InvalidInput(format!(
            "state has order {}, problem has {n}",
            z.n()
        )));
    }
    let (d1, d2) = remainders(&z.f, &z.d)?;
    let dv = z.d.values();
    let floor = 1e2 * UNIT_ROUNDOFF * z.d.max_abs();

    let mut dhat = Vec::with_capacity(n);
    for i in 0..n {
        let denom = 1.0 - pd.r.get(i, i) - d1.get(i, i);
        if denom <= 0.5 {
            return Err(FixedPointError::BadState { index: i, denom });
        }
        dhat.push((pd.s.get(i, i) + d2.get(i, i)) / denom);
    }

    let mut fhat = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let r = pd.r.get(i, j) + d1.get(i, j);
            let v = if pd.clusters.same(i, j) {
                0.5 * r
            } else {
                let gap = dv[j] - dv[i];
                if gap.abs() <= floor {
                    return Err(FixedPointError::NearSingularDenominator {
                        i,
                        j,
                        gap: gap.abs(),
                        floor,
                    });
                }
                (pd.s.get(i, j) + d2.get(i, j) + dv[j] * r) / gap
            };
            fhat.set(i, j, v);
        }
    }
    Ok(StateVector {
        f: fhat,
        d: DiagMatrix::from(dhat),
    })
}

/// `h = 1e-6·(1 + ‖z‖)`.
pub fn default_step(z: &[f64]) -> f64 {
    1e-6 * (1.0 + z.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Central-difference Jacobian of `g` at `z`: column `k` is
/// `(g(z + h·e_k) − g(z − h·e_k)) / 2h`.
pub fn central_difference<G>(g: G, z: &[f64], h: f64) -> Result<DenseMatrix, FixedPointError>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, FixedPointError>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(FixedPointError::InvalidInput(format!(
            "difference step must be positive, got {h}"
        )));
    }
    let dim = z.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut probe = z.to_vec();
    for k in 0..dim {
        probe[k] = z[k] + h;
        let plus = g(&probe).map_err(|e| FixedPointError::Probe {
            coord: k,
            plus: true,
            source: Box::new(e),
        })?;
        probe[k] = z[k] - h;
        let minus = g(&probe).map_err(|e| FixedPointError::Probe {
            coord: k,
            plus: false,
            source: Box::new(e),
        })?;
        probe[k] = z[k];
        if plus.len() != minus.len() || columns.first().is_some_and(|c| c.len() != plus.len()) {
            return Err(FixedPointError::InvalidInput(
                "map output length changed between probes".into(),
            ));
        }
        columns.push(
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * h))
                .collect(),
        );
    }
    let rows = columns.first().map_or(0, Vec::len);
    Ok(DenseMatrix::from_fn(rows, dim, |i, k| columns[k][i]))
}

/// `∂ℱ/∂z` at `z` by central differences; `h` defaults to [`default_step`].
pub fn fd_jacobian(
    pd: &ProblemData,
    z: &StateVector,
    h: Option<f64>,
) -> Result<DenseMatrix, FixedPointError> {
    let n = z.n();
    let packed = z.pack();
    let h = h.unwrap_or_else(|| default_step(&packed));
    central_difference(
        |p| Ok(fmap(&StateVector::unpack(n, p)?, pd)?.pack()),
        &packed,
        h,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardRun {
    pub z: StateVector,
    /// `‖ℱ(z_k) − z_k‖` for `k = 0, 1, …`.
    pub residuals: Vec<f64>,
}

/// `z_{k+1} = ℱ(z_k)` for `iters` steps.
pub fn picard_iterate(
    pd: &ProblemData,
    z0: &StateVector,
    iters: usize,
) -> Result<PicardRun, FixedPointError> {
    let mut z = z0.clone();
    let mut residuals = Vec::with_capacity(iters);
    for step in 0..iters {
        let next = fmap(&z, pd).map_err(|e| FixedPointError::Picard {
            step,
            trace: residuals.clone(),
            source: Box::new(e),
        })?;
        residuals.push(next.distance(&z)?);
        z = next;
    }
    Ok(PicardRun { z, residuals })
}
