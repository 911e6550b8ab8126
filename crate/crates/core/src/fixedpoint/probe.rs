use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{fd_jacobian, fmap, FixedPointError, ProblemData, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub delta: f64,
    pub samples: usize,
    /// Largest `‖∂ℱ/∂z‖_F` over the sampled points.
    pub jacobian_frobenius_max: f64,
    /// Largest `‖ℱ(z₁) − ℱ(z₂)‖ / ‖z₁ − z₂‖` over the sampled pairs.
    pub contraction_factor_estimate: f64,
    pub is_contraction: bool,
}

/// A point uniform in the closed ball `B_radius(center)`: a normalized
/// Gaussian direction scaled by `radius·U^(1/dim)`.
pub fn sample_ball(
    rng: &mut impl Rng,
    center: &StateVector,
    radius: f64,
) -> Result<StateVector, FixedPointError> {
    let mut z = center.pack();
    let dim = z.len();
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let rho = radius * u.powf(1.0 / dim as f64);
    if norm > 0.0 {
        for (zi, di) in z.iter_mut().zip(&dir) {
            *zi += rho * di / norm;
        }
    }
    StateVector::unpack(center.n(), &z)
}

/// Samples the ball `B_delta(z*)` and estimates how strongly `ℱ` contracts.
///
/// The first sample is `z*` itself. Lipschitz quotients are taken between
/// consecutive samples. The estimates are sampled maxima, not suprema.
pub fn contraction_probe(
    pd: &ProblemData,
    zstar: &StateVector,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<ContractionReport, FixedPointError> {
    if delta.is_nan() || delta < 0.0 || delta >= pd.eta / 3.0 {
        return Err(FixedPointError::Hypothesis(format!(
            "delta = {delta} is not below eta/3 = {}",
            pd.eta / 3.0
        )));
    }
    if samples == 0 {
        return Err(FixedPointError::InvalidInput(
            "at least one sample is needed".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jac_max = 0.0f64;
    let mut lip_max = 0.0f64;
    let mut prev: Option<(StateVector, StateVector)> = None;
    for k in 0..samples {
        let z = if k == 0 {
            zstar.clone()
        } else {
            sample_ball(&mut rng, zstar, delta)?
        };
        jac_max = jac_max.max(fd_jacobian(pd, &z, None)?.frobenius_norm());
        let fz = fmap(&z, pd)?;
        if let Some((pz, pfz)) = &prev {
            let dz = z.distance(pz)?;
            if dz > 0.0 {
                lip_max = lip_max.max(fz.distance(pfz)? / dz);
            }
        }
        prev = Some((z, fz));
    }
    Ok(ContractionReport {
        delta,
        samples,
        jacobian_frobenius_max: jac_max,
        contraction_factor_estimate: lip_max,
        is_contraction: jac_max < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::{DenseMatrix, DiagMatrix, SymMatrix};
    use crate::refine::ClusterMap;

    fn problem() -> (ProblemData, StateVector) {
        let pd = ProblemData::new(
            SymMatrix::symmetrized(&DenseMatrix::zeros(2, 2)),
            SymMatrix::from_diagonal(&[1.0, 3.0]),
            ClusterMap::singletons(2),
            2.0,
            3.0,
        )
        .unwrap();
        let zs =
            StateVector::new(DenseMatrix::zeros(2, 2), DiagMatrix::from(vec![1.0, 3.0])).unwrap();
        (pd, zs)
    }

    #[test]
    fn zero_radius_single_sample() {
        let (pd, zs) = problem();
        let rep = contraction_probe(&pd, &zs, 0.0, 1, 1).unwrap();
        assert_eq!(rep.samples, 1);
        assert_eq!(rep.contraction_factor_estimate, 0.0);
        assert!(rep.is_contraction);
    }

    #[test]
    fn radius_gate() {
        let (pd, zs) = problem();
        assert!(matches!(
            contraction_probe(&pd, &zs, 0.7, 3, 1),
            Err(FixedPointError::Hypothesis(_))
        ));
    }

    #[test]
    fn samples_stay_in_ball() {
        let (_, zs) = problem();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let z = sample_ball(&mut rng, &zs, 0.25).unwrap();
            assert!(z.distance(&zs).unwrap() <= 0.25 * (1.0 + 1e-14));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let (pd, zs) = problem();
        let a = contraction_probe(&pd, &zs, 0.1, 4, 5).unwrap();
        let b = contraction_probe(&pd, &zs, 0.1, 4, 5).unwrap();
        assert_eq!(a, b);
    }
}
