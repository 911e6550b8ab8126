use serde::Serialize;

use crate::matkit::{spectral_norm, DenseMatrix, DiagMatrix};

use super::{
    fd_jacobian, remainder_derivatives, remainders, FixedPointError, ProblemData, StateVector,
};

/// Threshold standing in for an exact zero derivative under finite differences.
pub const FD_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// `rhs − lhs`.
    pub slack: f64,
}

impl BoundRecord {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            satisfied: lhs <= rhs,
            slack: rhs - lhs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundReport {
    pub records: Vec<BoundRecord>,
}

impl BoundReport {
    pub fn push(&mut self, name: impl Into<String>, lhs: f64, rhs: f64) {
        self.records.push(BoundRecord::new(name, lhs, rhs));
    }

    pub fn all_satisfied(&self) -> bool {
        self.records.iter().all(|r| r.satisfied)
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundRecord> {
        self.records.iter().filter(|r| !r.satisfied)
    }

    pub fn get(&self, name: &str) -> Option<&BoundRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Keeps, per name, the record with the smallest slack.
    pub fn merge_worst(&mut self, other: &BoundReport) {
        for rec in &other.records {
            match self.records.iter_mut().find(|r| r.name == rec.name) {
                Some(r) if rec.slack < r.slack => *r = rec.clone(),
                Some(_) => {}
                None => self.records.push(rec.clone()),
            }
        }
    }
}

/// Checks the remainder bounds at `(F, D)`, and the residual bounds when the
/// problem data and `‖F*‖₂` are given.
///
/// Derivative magnitudes are exact (see [`remainder_derivatives`]), so the
/// check is meaningful down to `F = 0` where every bound is zero.
pub fn lemma1_check(
    f: &DenseMatrix,
    d: &DiagMatrix,
    residual_bounds: Option<(&ProblemData, f64)>,
) -> Result<BoundReport, FixedPointError> {
    let nf = spectral_norm(f)?;
    if nf >= 0.1 {
        return Err(FixedPointError::Hypothesis(format!(
            "||F||_2 = {nf} is not below 1/10"
        )));
    }
    let nd = d.max_abs();
    let (d1, d2) = remainders(f, d)?;
    let der = remainder_derivatives(f, d)?;

    let mut rep = BoundReport::default();
    rep.push("delta1_norm", spectral_norm(d1.as_dense())?, 0.5 * nf);
    rep.push("delta2_norm", spectral_norm(d2.as_dense())?, 0.5 * nd * nf);
    rep.push("d_delta1_df", der.d1_df, 9.0 * nf);
    rep.push("d_delta2_df", der.d2_df, 9.0 * nd * nf);
    rep.push("d_delta2_dd", der.d2_dd, 4.0 * nf * nf);

    if let Some((pd, fstar_norm)) = residual_bounds {
        if fstar_norm >= 0.1 {
            return Err(FixedPointError::Hypothesis(format!(
                "||F*||_2 = {fstar_norm} is not below 1/10"
            )));
        }
        let n = pd.n();
        let (mut r_max, mut s_off, mut s_diag) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            for j in 0..n {
                r_max = r_max.max(pd.r.get(i, j).abs());
                let s = pd.s.get(i, j).abs();
                if i == j {
                    s_diag = s_diag.max(s);
                } else {
                    s_off = s_off.max(s);
                }
            }
        }
        rep.push("r_entries", r_max, 2.5 * fstar_norm);
        rep.push("s_offdiag", s_off, 2.5 * pd.norm_a * fstar_norm);
        rep.push("s_diag", s_diag, 1.25 * pd.norm_a);
    }
    Ok(rep)
}

/// Checks the six entry-wise bounds on `∂ℱ/∂z` at `z` using the
/// finite-difference Jacobian.
///
/// Requires `‖F*‖₂ < 1/20`, `δ < min(η/3, ‖F*‖₂)` and `‖z − z*‖ ≤ δ`. The
/// zero radius is accepted as the one-point ball.
pub fn lemma2_check(
    pd: &ProblemData,
    z: &StateVector,
    zstar: &StateVector,
    delta: f64,
    h: Option<f64>,
) -> Result<BoundReport, FixedPointError> {
    let n = pd.n();
    if z.n() != n || zstar.n() != n {
        return Err(FixedPointError::InvalidInput(
            "state order does not match the problem".into(),
        ));
    }
    let fs = spectral_norm(&zstar.f)?;
    if fs >= 0.05 {
        return Err(FixedPointError::Hypothesis(format!(
            "||F*||_2 = {fs} is not below 1/20"
        )));
    }
    let limit = (pd.eta / 3.0).min(fs);
    if delta < 0.0 || (delta > 0.0 && delta >= limit) {
        return Err(FixedPointError::Hypothesis(format!(
            "delta = {delta} is not below min(eta/3, ||F*||_2) = {limit}"
        )));
    }
    let dist = z.distance(zstar)?;
    if dist > delta * (1.0 + 1e-12) {
        return Err(FixedPointError::Hypothesis(format!(
            "z is {dist} from z*, outside the ball of radius {delta}"
        )));
    }

    let jac = fd_jacobian(pd, z, h)?;
    let nn = n * n;
    let mut worst = [0.0f64; 6];
    for row in 0..nn + n {
        for col in 0..nn + n {
            let v = jac.get(row, col).abs();
            let by_f = col < nn;
            let family = if row < nn {
                let (i, j) = (row / n, row % n);
                match (pd.clusters.same(i, j), by_f) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                }
            } else if by_f {
                4
            } else {
                5
            };
            worst[family] = worst[family].max(v);
        }
    }
    let (a, eta) = (pd.norm_a, pd.eta);
    let mut rep = BoundReport::default();
    rep.push("within_df", worst[0], 9.0 * fs);
    rep.push("within_dd", worst[1], FD_ZERO_TOL);
    rep.push("cross_df", worst[2], 216.0 / eta * a * fs);
    rep.push(
        "cross_dd",
        worst[3],
        3.0 / eta * (4.3 + 34.5 * a / eta) * fs,
    );
    rep.push("diag_df", worst[4], 9600.0 / 121.0 * a * fs);
    rep.push("diag_dd", worst[5], 32.0 / 33.0 * fs);
    Ok(rep)
}
