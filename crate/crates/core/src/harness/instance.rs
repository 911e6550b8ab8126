use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::fixedpoint::{ProblemData, StateVector};
use crate::matkit::AccumMode;
use crate::matkit::{
    jacobi_eigen, lu_solve, matmul, spectral_norm, DenseMatrix, DiagMatrix, SymMatrix,
};
use crate::refine::{residuals, ClusterMap};

use super::{HarnessError, SpectrumSpec};

/// Synthetic test problem with known eigendecomposition.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: SpectrumSpec,
    pub perturbation: f64,
    pub a: SymMatrix,
    pub x_true: DenseMatrix,
    pub x_tilde: DenseMatrix,
    /// Seeded perturbation with `X̃(I + P) = X_true`.
    pub p: DenseMatrix,
    /// Canonical correction: `X̃(I + F*)` is an eigenvector matrix and the
    /// principal cluster blocks of `F*` are symmetric.
    pub fstar: DenseMatrix,
    /// `X̃(I + F*)`.
    pub x_star: DenseMatrix,
    pub dstar: DiagMatrix,
    pub eta: f64,
    pub clusters_true: ClusterMap,
}

/// Measured values of the instance invariants.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceCheck {
    pub eig_residual: f64,
    pub eig_residual_limit: f64,
    pub star_orthogonality: f64,
    pub star_diagonalization: f64,
    pub star_diagonalization_limit: f64,
    pub block_asymmetry: f64,
    /// `‖F*‖₂ / ‖P‖₂`, reported only.
    pub fstar_to_p_ratio: Option<f64>,
}

impl InstanceCheck {
    pub fn passed(&self) -> bool {
        self.eig_residual <= self.eig_residual_limit
            && self.star_orthogonality <= 1e-12
            && self.star_diagonalization <= self.star_diagonalization_limit
            && self.block_asymmetry <= 1e-13
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Product of `n` Householder reflectors built from Gaussian vectors.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let mut q = DenseMatrix::identity(n);
    for _ in 0..n {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        // Q ← Q(I − 2vvᵀ/vᵀv)
        for i in 0..n {
            let qv: f64 = q.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            let f = 2.0 * qv / vv;
            for (j, vj) in v.iter().enumerate() {
                q[(i, j)] -= f * vj;
            }
        }
    }
    q
}

/// Builds `A = QΛQᵀ` with a seeded random orthogonal `Q`, and a perturbed
/// `X̃ = Q(I + P)⁻¹` with `‖P‖₂ = perturbation`.
pub fn gen_instance(spec: &SpectrumSpec, perturbation: f64) -> Result<Instance, HarnessError> {
    if !(0.0..1.0 / 3.0).contains(&perturbation) {
        return Err(HarnessError::PerturbationOutOfRange(perturbation));
    }
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lambda = spec.eigenvalues();
    let q = random_orthogonal(&mut rng, n);

    let ql = DenseMatrix::from_fn(n, n, |i, j| q.get(i, j) * lambda[j]);
    let a = SymMatrix::from_dense(matmul(&ql, &q.transpose())?)?;

    let raw = gaussian_matrix(&mut rng, n, n);
    let p = if perturbation == 0.0 {
        DenseMatrix::zeros(n, n)
    } else {
        let norm = spectral_norm(&raw)?;
        raw.scale(perturbation / norm)
    };
    // X̃ = Q(I+P)⁻¹, i.e. X̃ᵀ solves (I+P)ᵀ X̃ᵀ = Qᵀ
    let x_tilde = lu_solve(&p.plus_identity().transpose(), &q.transpose())?.transpose();

    let clusters_true = spec.clusters();
    let (fstar, x_star) = canonical_correction(&x_tilde, &q, &clusters_true)?;
    Ok(Instance {
        spec: spec.clone(),
        perturbation,
        a,
        x_true: q,
        x_tilde,
        p,
        fstar,
        x_star,
        dstar: DiagMatrix::from(lambda),
        eta: spec.eta(),
        clusters_true,
    })
}

/// Smallest singular value accepted for a cluster block during canonicalization.
pub const MIN_BLOCK_SINGULAR_VALUE: f64 = 1e-8;

/// The correction `F*` with `X̃(I + F*)` an eigenvector matrix whose
/// principal cluster blocks are symmetric.
///
/// Starts from `M = X̃⁻¹X_true` and, per cluster, right-multiplies the
/// cluster columns by the transposed polar factor of the diagonal block of
/// `M`, which turns that block into its symmetric positive definite factor.
pub fn make_fstar(
    x_tilde: &DenseMatrix,
    x_true: &DenseMatrix,
    clusters: &ClusterMap,
) -> Result<DenseMatrix, HarnessError> {
    Ok(canonical_correction(x_tilde, x_true, clusters)?.0)
}

fn canonical_correction(
    x_tilde: &DenseMatrix,
    x_true: &DenseMatrix,
    clusters: &ClusterMap,
) -> Result<(DenseMatrix, DenseMatrix), HarnessError> {
    let n = x_tilde.rows();
    if x_true.shape() != (n, n) || clusters.n() != n {
        return Err(HarnessError::Spec(
            "make_fstar: inconsistent dimensions".into(),
        ));
    }
    if x_tilde == x_true {
        return Ok((DenseMatrix::zeros(n, n), x_true.clone()));
    }
    let m = lu_solve(x_tilde, x_true)?;
    let mut f = m.clone();
    let mut x_star = x_true.clone();
    for k in 0..clusters.cluster_count() {
        let idx = clusters.members(k);
        let b = m.select(&idx, &idx);
        let w = polar_factor(&b, k)?.transpose();
        // cluster columns of M·W and X_true·W
        let mw = matmul(&m.select(&(0..n).collect::<Vec<_>>(), &idx), &w)?;
        let xw = matmul(&x_true.select(&(0..n).collect::<Vec<_>>(), &idx), &w)?;
        for (c, &j) in idx.iter().enumerate() {
            for i in 0..n {
                f.set(i, j, mw.get(i, c));
                x_star.set(i, j, xw.get(i, c));
            }
        }
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let avg = 0.5 * (f.get(i, j) + f.get(j, i));
                f.set(i, j, avg);
                f.set(j, i, avg);
            }
        }
    }
    for i in 0..n {
        f[(i, i)] -= 1.0;
    }
    Ok((f, x_star))
}

/// Orthogonal factor `U` of the polar decomposition `B = U·H`, via the
/// eigendecomposition of `BᵀB`.
fn polar_factor(b: &DenseMatrix, cluster: usize) -> Result<DenseMatrix, HarnessError> {
    let btb = SymMatrix::symmetrized(&matmul(&b.transpose(), b)?);
    let eig = jacobi_eigen(&btb)?;
    let k = b.rows();
    let sigma: Vec<f64> = eig
        .values
        .values()
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    let smin = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if smin < MIN_BLOCK_SINGULAR_VALUE {
        return Err(HarnessError::IllConditionedCluster {
            cluster,
            sigma_min: smin,
        });
    }
    let v = &eig.vectors;
    let h_inv = DenseMatrix::from_fn(k, k, |i, j| {
        (0..k).map(|l| v.get(i, l) * v.get(j, l) / sigma[l]).sum()
    });
    Ok(matmul(b, &h_inv)?)
}

impl Instance {
    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn norm_a(&self) -> f64 {
        self.spec.norm()
    }

    pub fn check(&self) -> Result<InstanceCheck, HarnessError> {
        let n = self.n();
        let a = self.a.as_dense();
        let a_f = a.frobenius_norm();
        let lam = self.dstar.to_dense();

        let eig_residual = matmul(a, &self.x_true)?
            .sub(&matmul(&self.x_true, &lam)?)?
            .frobenius_norm();
        let xs = &self.x_star;
        let star_orthogonality =
            matmul(&xs.transpose(), xs)?.max_abs_diff(&DenseMatrix::identity(n))?;
        let xtax = matmul(&xs.transpose(), &matmul(a, xs)?)?;
        let star_diagonalization = xtax.sub(&lam)?.frobenius_norm();

        let mut block_asymmetry: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if self.clusters_true.same(i, j) {
                    block_asymmetry =
                        block_asymmetry.max((self.fstar.get(i, j) - self.fstar.get(j, i)).abs());
                }
            }
        }
        let p_norm = spectral_norm(&self.p)?;
        let fstar_to_p_ratio = (p_norm > 0.0)
            .then(|| spectral_norm(&self.fstar).map(|f| f / p_norm))
            .transpose()?;
        Ok(InstanceCheck {
            eig_residual,
            eig_residual_limit: 1e-12 * a_f,
            star_orthogonality,
            star_diagonalization,
            star_diagonalization_limit: 1e-11 * a_f,
            block_asymmetry,
            fstar_to_p_ratio,
        })
    }

    /// `R`, `S` of `X̃` with the true clusters, `η` and `‖A‖₂`.
    pub fn problem_data(&self, mode: AccumMode) -> Result<ProblemData, HarnessError> {
        let rs = residuals(&self.a, &self.x_tilde, mode)?;
        Ok(ProblemData::new(
            rs.r,
            rs.s,
            self.clusters_true.clone(),
            self.eta,
            self.norm_a(),
        )?)
    }

    /// `z* = (F*, D*)`.
    pub fn zstar(&self) -> StateVector {
        StateVector {
            f: self.fstar.clone(),
            d: self.dstar.clone(),
        }
    }

    /// Consistency of `X_star` with `X̃(I + F*)` computed directly.
    pub fn star_consistency(&self) -> Result<f64, HarnessError> {
        let direct = matmul(&self.x_tilde, &self.fstar.plus_identity())?;
        Ok(direct.max_abs_diff(&self.x_star)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_instance() {
        let spec = SpectrumSpec::parse("1x2,3x2", 11).unwrap();
        let inst = gen_instance(&spec, 0.0).unwrap();
        assert_eq!(inst.x_tilde, inst.x_true);
        assert_eq!(inst.fstar, DenseMatrix::zeros(4, 4));
        assert!(inst.check().unwrap().passed());
    }

    #[test]
    fn invariants_hold() {
        let spec = SpectrumSpec::parse("1x3,2x3", 7).unwrap();
        let inst = gen_instance(&spec, 1e-3).unwrap();
        let chk = inst.check().unwrap();
        assert!(chk.passed(), "{chk:?}");
        assert!(inst.star_consistency().unwrap() < 1e-14);
        assert!((spectral_norm(&inst.p).unwrap() - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn scalar_case() {
        let spec = SpectrumSpec::parse("2.5", 3).unwrap();
        let inst = gen_instance(&spec, 0.0).unwrap();
        assert_eq!(inst.a.get(0, 0), 2.5);
        assert_eq!(inst.x_true.get(0, 0).abs(), 1.0);
    }

    #[test]
    fn perturbation_range() {
        let spec = SpectrumSpec::parse("1,2", 3).unwrap();
        assert!(matches!(
            gen_instance(&spec, 0.34),
            Err(HarnessError::PerturbationOutOfRange(_))
        ));
        assert!(gen_instance(&spec, -1e-3).is_err());
    }

    #[test]
    fn deterministic() {
        let spec = SpectrumSpec::parse("1x2,2,5", 99).unwrap();
        let a = gen_instance(&spec, 1e-2).unwrap();
        let b = gen_instance(&spec, 1e-2).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.x_tilde, b.x_tilde);
        assert_eq!(a.fstar, b.fstar);
    }

    #[test]
    fn single_cluster_rotation_gives_symmetric_fstar() {
        // A = I₂, X̃ orthogonal but not X_true
        let th: f64 = 0.2;
        let x_tilde =
            DenseMatrix::from_rows(&[&[th.cos(), -th.sin()], &[th.sin(), th.cos()]]).unwrap();
        let x_true = DenseMatrix::identity(2);
        let f = make_fstar(&x_tilde, &x_true, &ClusterMap::contiguous(&[2], 1.0)).unwrap();
        assert_eq!(f.get(0, 1), f.get(1, 0));
        let xs = matmul(&x_tilde, &f.plus_identity()).unwrap();
        let defect = matmul(&xs.transpose(), &xs)
            .unwrap()
            .max_abs_diff(&DenseMatrix::identity(2))
            .unwrap();
        assert!(defect < 1e-13);
        // within-cluster rotation freedom is absorbed entirely
        assert!(f.max_abs() < 1e-15);
    }

    #[test]
    fn singular_cluster_block_rejected() {
        let x_tilde = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let x_true = DenseMatrix::identity(2);
        let err = make_fstar(&x_tilde, &x_true, &ClusterMap::singletons(2)).unwrap_err();
        assert!(matches!(err, HarnessError::IllConditionedCluster { .. }));
    }
}
