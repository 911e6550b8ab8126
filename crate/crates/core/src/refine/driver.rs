use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::matkit::eft::{fast_two_sum, two_sum};
use crate::matkit::{
    matmul, spectral_norm, AccumMode, DenseMatrix, DiagMatrix, MatError, SymMatrix,
};

use super::{
    apply_correction, basic_step, clustered_step, detect_clusters, residuals, residuals_split,
    Correction, RefineError, ResidualPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Basic,
    #[default]
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Cluster threshold; `None` selects [`ResidualPair::default_delta1`] each iteration.
    pub delta1: Option<f64>,
    pub max_iters: usize,
    /// Stop once `‖Ẽ‖_F` drops to this value.
    pub stop_tol: f64,
    pub mode: AccumMode,
    pub step_kind: StepKind,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            delta1: None,
            max_iters: 20,
            stop_tol: 1e-14,
            mode: AccumMode::Working,
            step_kind: StepKind::Clustered,
        }
    }
}

impl RefineConfig {
    pub fn basic() -> Self {
        Self {
            step_kind: StepKind::Basic,
            ..Self::default()
        }
    }

    pub fn clustered() -> Self {
        Self::default()
    }

    pub fn with_mode(mut self, mode: AccumMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), RefineError> {
        if let Some(d) = self.delta1 {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(RefineError::InvalidConfig(format!(
                    "delta1 must be finite and >= 0, got {d}"
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(RefineError::InvalidConfig(
                "max_iters must be positive".into(),
            ));
        }
        if self.stop_tol.is_nan() || self.stop_tol <= 0.0 {
            return Err(RefineError::InvalidConfig(format!(
                "stop_tol must be > 0, got {}",
                self.stop_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    Stagnated,
    MaxIters,
    Breakdown,
}

/// One row of the convergence trace, describing the iterate `X_iter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub r_norm: f64,
    pub s_off_norm: f64,
    /// `‖Ẽ‖_F` of the correction computed from this iterate; empty for the
    /// final iterate or when the step broke down.
    pub e_norm: Option<f64>,
    pub err_vs_ref: Option<f64>,
    pub seconds: f64,
    #[serde(skip)]
    pub clusters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<IterRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The `‖Ẽ_k‖_F` sequence in iteration order.
    pub fn correction_norms(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.e_norm).collect()
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }
}

/// Approximate eigenvectors and eigenvalues, aligned by column.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenApprox {
    pub x: DenseMatrix,
    /// Second word of `X` in compensated mode: the iterate is `x + x_lo`.
    pub x_lo: Option<DenseMatrix>,
    pub d: DiagMatrix,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub approx: EigenApprox,
    pub trace: ConvergenceTrace,
    pub stop: StopReason,
    /// Number of corrections applied to `X0`.
    pub corrections: usize,
    /// The step failure behind [`StopReason::Breakdown`].
    pub breakdown: Option<RefineError>,
}

/// The iterate, carried in two words in compensated mode.
struct Iterate {
    hi: DenseMatrix,
    lo: Option<DenseMatrix>,
}

impl Iterate {
    fn residuals(&self, a: &SymMatrix, mode: AccumMode) -> Result<ResidualPair, RefineError> {
        match &self.lo {
            Some(lo) => residuals_split(a, &self.hi, lo),
            None => residuals(a, &self.hi, mode),
        }
    }

    fn distance(&self, r: &DenseMatrix) -> Result<f64, RefineError> {
        let mut diff = self.hi.sub(r)?;
        if let Some(lo) = &self.lo {
            diff = diff.add(lo)?;
        }
        Ok(diff.frobenius_norm())
    }

    fn apply(self, c: &Correction) -> Result<Self, RefineError> {
        let Some(mut lo) = self.lo else {
            return Ok(Self {
                hi: apply_correction(&self.hi, c)?,
                lo: None,
            });
        };
        // X·E is small, so one rounding of it costs u·‖E‖ relative to X
        let p = matmul(&self.hi, &c.e)?;
        let mut hi = self.hi;
        for ((h, l), &pv) in hi
            .as_mut_slice()
            .iter_mut()
            .zip(lo.as_mut_slice())
            .zip(p.as_slice())
        {
            let (s, e) = two_sum(*h, pv);
            (*h, *l) = fast_two_sum(s, e + *l);
        }
        Ok(Self { hi, lo: Some(lo) })
    }

    fn into_approx(self, d: DiagMatrix) -> EigenApprox {
        EigenApprox {
            x: self.hi,
            x_lo: self.lo,
            d,
        }
    }
}

/// Runs residuals → step → update until the correction is below
/// `cfg.stop_tol`, stops shrinking, or `cfg.max_iters` corrections were made.
///
/// Clusters are re-detected from the current `d̃` at every iteration. A
/// stagnating correction is not applied. Step failures end the run with
/// [`StopReason::Breakdown`] and the trace collected so far.
///
/// In compensated mode the iterate is kept as an unevaluated sum of two
/// matrices, so the orthogonality it reaches is not capped by one rounding
/// of `X` to binary64.
pub fn refine_loop(
    a: &SymMatrix,
    x0: &DenseMatrix,
    cfg: &RefineConfig,
    reference: Option<&DenseMatrix>,
) -> Result<RefineOutcome, RefineError> {
    cfg.validate()?;
    let n = a.n();
    if x0.shape() != (n, n) {
        return Err(MatError::DimensionMismatch {
            op: "refine_loop",
            left: (n, n),
            right: x0.shape(),
        }
        .into());
    }
    if let Some(r) = reference {
        if r.shape() != (n, n) {
            return Err(MatError::DimensionMismatch {
                op: "refine_loop",
                left: (n, n),
                right: r.shape(),
            }
            .into());
        }
    }

    let record =
        |iter: usize, rs: &ResidualPair, x: &Iterate, e_norm: Option<f64>, clusters, t: Instant| {
            Ok::<_, RefineError>(IterRecord {
                iter,
                r_norm: rs.r.as_dense().frobenius_norm(),
                s_off_norm: rs.s.as_dense().offdiag_frobenius_norm(),
                e_norm,
                err_vs_ref: reference.map(|r| x.distance(r)).transpose()?,
                seconds: t.elapsed().as_secs_f64(),
                clusters,
            })
        };

    let lo = (cfg.mode == AccumMode::Compensated).then(|| DenseMatrix::zeros(n, n));
    let mut x = Iterate { hi: x0.clone(), lo };
    let mut trace = ConvergenceTrace::default();
    let mut prev_e: Option<f64> = None;
    let mut corrections = 0;

    for k in 0..cfg.max_iters {
        let t = Instant::now();
        let rs = x.residuals(a, cfg.mode)?;
        if k == 0 {
            let defect = spectral_norm(rs.r.as_dense())?;
            if defect >= 1.0 {
                return Err(RefineError::NotNearOrthogonal(defect));
            }
        }

        let step = match cfg.step_kind {
            StepKind::Basic => basic_step(&rs),
            StepKind::Clustered => {
                let d = rs.approx_eigenvalues();
                let delta1 = cfg.delta1.unwrap_or_else(|| rs.default_delta1(&d));
                clustered_step(&rs, &detect_clusters(&d, delta1))
            }
        };
        let c = match step {
            Ok(c) => c,
            Err(e) if e.is_breakdown() => {
                trace.records.push(record(k, &rs, &x, None, None, t)?);
                return Ok(RefineOutcome {
                    approx: x.into_approx(rs.approx_eigenvalues()),
                    trace,
                    stop: StopReason::Breakdown,
                    corrections,
                    breakdown: Some(e),
                });
            }
            Err(e) => return Err(e),
        };

        let e_norm = c.e.frobenius_norm();
        let n_clusters = c.clusters.as_ref().map(|m| m.cluster_count());
        trace
            .records
            .push(record(k, &rs, &x, Some(e_norm), n_clusters, t)?);
        if prev_e.is_some_and(|p| e_norm >= p) {
            return Ok(RefineOutcome {
                approx: x.into_approx(rs.approx_eigenvalues()),
                trace,
                stop: StopReason::Stagnated,
                corrections,
                breakdown: None,
            });
        }
        x = x.apply(&c)?;
        corrections += 1;
        if e_norm <= cfg.stop_tol {
            return finish(
                a,
                x,
                cfg,
                trace,
                StopReason::Converged,
                corrections,
                &record,
            );
        }
        prev_e = Some(e_norm);
    }
    finish(a, x, cfg, trace, StopReason::MaxIters, corrections, &record)
}

type RecordFn<'a> = dyn Fn(
        usize,
        &ResidualPair,
        &Iterate,
        Option<f64>,
        Option<usize>,
        Instant,
    ) -> Result<IterRecord, RefineError>
    + 'a;

fn finish(
    a: &SymMatrix,
    x: Iterate,
    cfg: &RefineConfig,
    mut trace: ConvergenceTrace,
    stop: StopReason,
    corrections: usize,
    record: &RecordFn<'_>,
) -> Result<RefineOutcome, RefineError> {
    let t = Instant::now();
    let rs = x.residuals(a, cfg.mode)?;
    trace
        .records
        .push(record(corrections, &rs, &x, None, None, t)?);
    Ok(RefineOutcome {
        approx: x.into_approx(rs.approx_eigenvalues()),
        trace,
        stop,
        corrections,
        breakdown: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::jacobi_eigen;

    fn test_matrix(n: usize) -> SymMatrix {
        let m = DenseMatrix::from_fn(n, n, |i, j| {
            1.0 / (1.0 + i as f64 + j as f64) + if i == j { 2.0 * i as f64 } else { 0.0 }
        });
        SymMatrix::from_dense(m).unwrap()
    }

    #[test]
    fn exact_start_converges_immediately() {
        let a = test_matrix(6);
        let e = jacobi_eigen(&a).unwrap();
        let out = refine_loop(&a, &e.vectors, &RefineConfig::basic(), None).unwrap();
        assert_eq!(out.stop, StopReason::Converged);
        assert!(out.corrections <= 1);
        assert!(out.trace.correction_norms()[0] < 1e-14);
    }

    #[test]
    fn record_count_bounded() {
        let a = test_matrix(5);
        let e = jacobi_eigen(&a).unwrap();
        let x0 = e
            .vectors
            .add(&DenseMatrix::from_fn(5, 5, |i, j| {
                1e-3 * ((i * 5 + j) as f64).sin()
            }))
            .unwrap();
        let cfg = RefineConfig {
            max_iters: 2,
            ..RefineConfig::basic()
        };
        let out = refine_loop(&a, &x0, &cfg, Some(&e.vectors)).unwrap();
        assert_eq!(out.stop, StopReason::MaxIters);
        assert_eq!(out.trace.len(), 3);
        assert!(out.trace.records.iter().all(|r| r.err_vs_ref.is_some()));
    }

    #[test]
    fn invalid_config() {
        let a = test_matrix(3);
        let x = DenseMatrix::identity(3);
        let bad = RefineConfig {
            stop_tol: 0.0,
            ..RefineConfig::default()
        };
        assert!(matches!(
            refine_loop(&a, &x, &bad, None),
            Err(RefineError::InvalidConfig(_))
        ));
        let bad = RefineConfig {
            delta1: Some(-1.0),
            ..RefineConfig::default()
        };
        assert!(refine_loop(&a, &x, &bad, None).is_err());
    }

    #[test]
    fn far_from_orthogonal_start_rejected() {
        let a = test_matrix(3);
        let x = DenseMatrix::identity(3).scale(1.5);
        assert!(matches!(
            refine_loop(&a, &x, &RefineConfig::default(), None),
            Err(RefineError::NotNearOrthogonal(_))
        ));
    }
}
