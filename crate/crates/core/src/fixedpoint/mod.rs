//! The fixed-point formulation of the clustered correction equations.
//!
//! A pair `(F, D)` is packed into `z ∈ ℝ^(n²+n)`. The map `ℱ` solves the
//! orthogonality equations, the diagonal and cross-cluster diagonalization
//! equations and the within-cluster symmetry constraints for one unknown at a
//! time, with the exact remainders `Δ₁(F)`, `Δ₂(F, D)` evaluated at the
//! current point. The canonical correction is a fixed point; this module
//! measures how strongly `ℱ` contracts around it.

mod bounds;
mod map;
mod probe;
mod remainder;

use serde::Serialize;
use thiserror::Error;

use crate::matkit::{DenseMatrix, DiagMatrix, MatError, SymMatrix};
use crate::refine::{detect_clusters, ClusterMap, ResidualPair};

pub use bounds::{lemma1_check, lemma2_check, BoundRecord, BoundReport, FD_ZERO_TOL};
pub use map::{central_difference, default_step, fd_jacobian, fmap, picard_iterate, PicardRun};
pub use probe::{contraction_probe, sample_ball, ContractionReport};
pub use remainder::{
    delta1_map, delta2_map, delta_map, remainder_derivatives, remainders, RemainderDerivatives,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedPointError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("||E||_2 = {0} is not below 1")]
    NormTooLarge(f64),
    #[error(
        "d_{i} and d_{j} lie in different clusters but differ by only {gap:e} (floor {floor:e})"
    )]
    NearSingularDenominator {
        i: usize,
        j: usize,
        gap: f64,
        floor: f64,
    },
    #[error("denominator 1 - r_ii - (Delta1)_ii = {denom} at i = {index} is not above 1/2")]
    BadState { index: usize, denom: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("map failed at probe {coord}{sign}: {source}", sign = if *.plus { "+" } else { "-" })]
    Probe {
        coord: usize,
        plus: bool,
        source: Box<FixedPointError>,
    },
    #[error("iteration failed at step {step} after {} residuals: {source}", .trace.len())]
    Picard {
        step: usize,
        trace: Vec<f64>,
        source: Box<FixedPointError>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// The pair `(F, D)` and its packed view: `F` row by row, then `d₁ … dₙ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    pub f: DenseMatrix,
    pub d: DiagMatrix,
}

impl StateVector {
    pub fn new(f: DenseMatrix, d: DiagMatrix) -> Result<Self, FixedPointError> {
        if !f.is_square() || f.rows() != d.n() {
            return Err(FixedPointError::InvalidInput(format!(
                "F is {:?} but D has {} entries",
                f.shape(),
                d.n()
            )));
        }
        Ok(Self { f, d })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            f: DenseMatrix::zeros(n, n),
            d: DiagMatrix::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.d.n()
    }

    /// `n² + n`.
    pub fn dim(&self) -> usize {
        let n = self.n();
        n * n + n
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        z.extend_from_slice(self.f.as_slice());
        z.extend_from_slice(self.d.values());
        z
    }

    pub fn unpack(n: usize, z: &[f64]) -> Result<Self, FixedPointError> {
        if z.len() != n * n + n {
            return Err(FixedPointError::InvalidInput(format!(
                "packed length {} does not match n = {n}",
                z.len()
            )));
        }
        let f = DenseMatrix::new(n, n, z[..n * n].to_vec())?;
        Ok(Self {
            f,
            d: DiagMatrix::from(z[n * n..].to_vec()),
        })
    }

    /// Euclidean norm of the packed view.
    pub fn norm(&self) -> f64 {
        self.f.frobenius_norm().hypot(self.d.frobenius_norm())
    }

    pub fn distance(&self, other: &StateVector) -> Result<f64, FixedPointError> {
        let df = self.f.sub(&other.f)?.frobenius_norm();
        if self.n() != other.n() {
            return Err(FixedPointError::InvalidInput(
                "state vectors of different order".into(),
            ));
        }
        let dd = self
            .d
            .values()
            .iter()
            .zip(other.d.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(df.hypot(dd))
    }
}

/// The constants of the fixed-point problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub r: SymMatrix,
    pub s: SymMatrix,
    pub clusters: ClusterMap,
    /// Smallest gap between distinct eigenvalues.
    pub eta: f64,
    /// `‖A‖₂`.
    pub norm_a: f64,
}

impl ProblemData {
    pub fn new(
        r: SymMatrix,
        s: SymMatrix,
        clusters: ClusterMap,
        eta: f64,
        norm_a: f64,
    ) -> Result<Self, FixedPointError> {
        let n = r.n();
        if s.n() != n || clusters.n() != n {
            return Err(FixedPointError::InvalidInput(format!(
                "R is {n}x{n}, S is {0}x{0}, cluster map has {1} entries",
                s.n(),
                clusters.n()
            )));
        }
        if clusters.cluster_count() >= 2 && (eta.is_nan() || eta <= 0.0) {
            return Err(FixedPointError::InvalidInput(format!(
                "eta must be positive with several clusters, got {eta}"
            )));
        }
        if norm_a.is_nan() || norm_a < 0.0 {
            return Err(FixedPointError::InvalidInput(format!(
                "norm_a must be >= 0, got {norm_a}"
            )));
        }
        Ok(Self {
            r,
            s,
            clusters,
            eta,
            norm_a,
        })
    }

    /// Problem data when only the residuals are known: clusters are detected
    /// from `d̃`, `η` is the smallest cross-cluster `d̃` gap and `‖A‖₂` is
    /// estimated by `max|d̃|`.
    pub fn from_residuals(rs: &ResidualPair, delta1: Option<f64>) -> Result<Self, FixedPointError> {
        let d = rs.approx_eigenvalues();
        let delta1 = delta1.unwrap_or_else(|| rs.default_delta1(&d));
        let clusters = detect_clusters(&d, delta1);
        let dv = d.values();
        let mut eta = f64::INFINITY;
        for i in 0..dv.len() {
            for j in 0..dv.len() {
                if !clusters.same(i, j) {
                    eta = eta.min((dv[i] - dv[j]).abs());
                }
            }
        }
        Self::new(rs.r.clone(), rs.s.clone(), clusters, eta, d.max_abs())
    }

    pub fn n(&self) -> usize {
        self.r.n()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::AccumMode;

    #[test]
    fn pack_roundtrip() {
        let f = DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let z = StateVector::new(f, DiagMatrix::from(vec![1.0, -2.0, 3.5])).unwrap();
        let p = z.pack();
        assert_eq!(p.len(), 12);
        assert_eq!(p[1], 0.1);
        assert_eq!(p[9], 1.0);
        let back = StateVector::unpack(3, &p).unwrap();
        assert_eq!(back, z);
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((z.norm() - norm).abs() < 1e-15 * norm);
    }

    #[test]
    fn unpack_rejects_bad_length() {
        assert!(StateVector::unpack(2, &[0.0; 5]).is_err());
        assert!(StateVector::new(DenseMatrix::zeros(2, 2), DiagMatrix::zeros(3)).is_err());
    }

    #[test]
    fn problem_data_from_residuals() {
        let a = SymMatrix::from_diagonal(&[1.0, 1.0, 4.0]);
        let rs =
            crate::refine::residuals(&a, &DenseMatrix::identity(3), AccumMode::Working).unwrap();
        let pd = ProblemData::from_residuals(&rs, None).unwrap();
        assert_eq!(pd.clusters.sizes(), &[2, 1]);
        assert_eq!(pd.eta, 3.0);
        assert_eq!(pd.norm_a, 4.0);
    }

    #[test]
    fn eta_required_for_several_clusters() {
        let r = SymMatrix::identity(2);
        let err = ProblemData::new(r.clone(), r, ClusterMap::singletons(2), 0.0, 1.0);
        assert!(err.is_err());
    }
}
