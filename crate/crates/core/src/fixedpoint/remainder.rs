use crate::matkit::{
    frobenius_norm, inverse, lu_solve, matmul, spectral_norm, DenseMatrix, DiagMatrix, SymMatrix,
};

use super::FixedPointError;

fn check_small(e: &DenseMatrix) -> Result<(), FixedPointError> {
    if !e.is_square() {
        return Err(FixedPointError::InvalidInput(format!(
            "remainder maps need a square matrix, got {:?}",
            e.shape()
        )));
    }
    if !e.is_finite() {
        return Err(FixedPointError::InvalidInput(
            "non-finite entry in E".into(),
        ));
    }
    // ‖E‖₂ ≤ ‖E‖_F, so the power iteration is only needed near the boundary
    if frobenius_norm(e) < 1.0 {
        return Ok(());
    }
    let norm = spectral_norm(e)?;
    if norm >= 1.0 {
        return Err(FixedPointError::NormTooLarge(norm));
    }
    Ok(())
}

/// `Δ(E) = (I + E)⁻¹ − I + E`.
///
/// Evaluated as the solution of `(I + E)·Δ = E²`, which is the same matrix
/// without the cancellation of `(I + E)⁻¹ − I + E` for small `E`.
pub fn delta_map(e: &DenseMatrix) -> Result<DenseMatrix, FixedPointError> {
    check_small(e)?;
    let e2 = matmul(e, e)?;
    Ok(lu_solve(&e.plus_identity(), &e2)?)
}

/// `E − Δ(E) = I − (I + E)⁻¹`.
fn first_order_part(e: &DenseMatrix, delta: &DenseMatrix) -> Result<DenseMatrix, FixedPointError> {
    Ok(e.sub(delta)?)
}

/// `Δ₁(E) = Δ + Δᵀ + (E − Δ)ᵀ(E − Δ)`.
pub fn delta1_map(e: &DenseMatrix) -> Result<SymMatrix, FixedPointError> {
    let delta = delta_map(e)?;
    let m = first_order_part(e, &delta)?;
    let out = delta
        .add(&delta.transpose())?
        .add(&matmul(&m.transpose(), &m)?)?;
    Ok(SymMatrix::symmetrized(&out))
}

/// `Δ₂(E, D) = −DΔ − (DΔ)ᵀ − (E − Δ)ᵀD(E − Δ)`.
pub fn delta2_map(e: &DenseMatrix, d: &DiagMatrix) -> Result<SymMatrix, FixedPointError> {
    let delta = delta_map(e)?;
    remainders_from(e, &delta, d).map(|(_, d2)| d2)
}

/// `(Δ₁(E), Δ₂(E, D))` sharing one evaluation of `Δ(E)`.
pub fn remainders(
    e: &DenseMatrix,
    d: &DiagMatrix,
) -> Result<(SymMatrix, SymMatrix), FixedPointError> {
    let delta = delta_map(e)?;
    remainders_from(e, &delta, d)
}

fn remainders_from(
    e: &DenseMatrix,
    delta: &DenseMatrix,
    d: &DiagMatrix,
) -> Result<(SymMatrix, SymMatrix), FixedPointError> {
    let n = e.rows();
    if d.n() != n {
        return Err(FixedPointError::InvalidInput(format!(
            "D has {} entries, E is {n}x{n}",
            d.n()
        )));
    }
    let dv = d.values();
    let m = first_order_part(e, delta)?;
    let mt = m.transpose();
    let d1 = delta.add(&delta.transpose())?.add(&matmul(&mt, &m)?)?;
    let dm = DenseMatrix::from_fn(n, n, |i, j| dv[i] * m.get(i, j));
    let mtdm = matmul(&mt, &dm)?;
    let d2 = DenseMatrix::from_fn(n, n, |i, j| {
        -dv[i] * delta.get(i, j) - dv[j] * delta.get(j, i) - mtdm.get(i, j)
    });
    Ok((SymMatrix::symmetrized(&d1), SymMatrix::symmetrized(&d2)))
}

/// Largest moduli of the partial derivatives of `Δ₁` and `Δ₂` over all
/// entries and all coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderDerivatives {
    /// `max |∂(Δ₁)_ij / ∂f_kl|`
    pub d1_df: f64,
    /// `max |∂(Δ₂)_ij / ∂f_kl|`
    pub d2_df: f64,
    /// `max |∂(Δ₂)_ij / ∂d_k|`
    pub d2_dd: f64,
}

/// Exact first derivatives of the remainder maps at `(F, D)`.
///
/// With `G = (I + F)⁻¹` and `M = F − Δ(F) = I − G`, a change `dF` moves
/// `M` by `G·dF·G` and `Δ` by `dF − G·dF·G`; `Δ₂` is linear in `D`.
/// For the unit direction `dF = e_k e_lᵀ` every term is an outer product,
/// so one coordinate costs `O(n²)`.
pub fn remainder_derivatives(
    f: &DenseMatrix,
    d: &DiagMatrix,
) -> Result<RemainderDerivatives, FixedPointError> {
    check_small(f)?;
    let n = f.rows();
    if d.n() != n {
        return Err(FixedPointError::InvalidInput(format!(
            "D has {} entries, F is {n}x{n}",
            d.n()
        )));
    }
    let dv = d.values();
    let g = inverse(&f.plus_identity())?;
    let m = DenseMatrix::identity(n).sub(&g)?;
    let delta = f.sub(&m)?;
    let dm_mat = DenseMatrix::from_fn(n, n, |i, j| dv[i] * m.get(i, j));
    let mt = m.transpose();

    let mut out = RemainderDerivatives {
        d1_df: 0.0,
        d2_df: 0.0,
        d2_dd: 0.0,
    };
    for k in 0..n {
        let gk = g.column(k);
        // Mᵀg_k and (DM)ᵀg_k
        let mtg: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|p| m.get(p, i) * gk[p]).sum())
            .collect();
        let dmtg: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|p| dm_mat.get(p, i) * gk[p]).sum())
            .collect();
        for l in 0..n {
            let hl = g.row(l);
            // dM = g_k h_lᵀ, dΔ = e_k e_lᵀ − dM
            let d_delta =
                |i: usize, j: usize| (if i == k && j == l { 1.0 } else { 0.0 }) - gk[i] * hl[j];
            for i in 0..n {
                for j in 0..n {
                    // (dMᵀM)_ij = h_l[i]·(Mᵀg_k)_j
                    let dmt_m = hl[i] * mtg[j];
                    let d1 = d_delta(i, j) + d_delta(j, i) + dmt_m + hl[j] * mtg[i];
                    let d2 = -dv[i] * d_delta(i, j)
                        - dv[j] * d_delta(j, i)
                        - hl[i] * dmtg[j]
                        - hl[j] * dmtg[i];
                    out.d1_df = out.d1_df.max(d1.abs());
                    out.d2_df = out.d2_df.max(d2.abs());
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut v = -mt.get(i, k) * m.get(k, j);
                if i == k {
                    v -= delta.get(k, j);
                }
                if j == k {
                    v -= delta.get(k, i);
                }
                out.d2_dd = out.d2_dd.max(v.abs());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, scale: f64) -> DenseMatrix {
        DenseMatrix::from_fn(n, n, |i, j| scale * ((3 * i + 7 * j + 1) as f64).sin())
    }

    #[test]
    fn zero_input() {
        let z = DenseMatrix::zeros(3, 3);
        assert_eq!(delta_map(&z).unwrap(), z);
        assert_eq!(delta1_map(&z).unwrap().as_dense(), &z);
        assert_eq!(
            delta2_map(&z, &DiagMatrix::from(vec![1.0, 2.0, 3.0]))
                .unwrap()
                .as_dense(),
            &z
        );
    }

    #[test]
    fn scalar_values() {
        let e = DenseMatrix::from_rows(&[&[0.1]]).unwrap();
        // 1/1.1 − 1 + 0.1 = 0.01/1.1
        let d = 0.01 / 1.1;
        assert!((delta_map(&e).unwrap().get(0, 0) - d).abs() < 1e-15 * d);
        assert!((d - 0.009090909090909091).abs() < 1e-18);
        let d1 = 2.0 * d + (0.1 - d) * (0.1 - d);
        assert!((delta1_map(&e).unwrap().get(0, 0) - d1).abs() < 1e-17);
        // 2/110 + (10/110)² = 320/12100
        assert!((d1 - 320.0 / 12100.0).abs() < 1e-17);
    }

    #[test]
    fn unipotent_gives_zero() {
        let e = DenseMatrix::from_rows(&[&[0.0, 0.7], &[0.0, 0.0]]).unwrap();
        assert_eq!(delta_map(&e).unwrap(), DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn zero_d_gives_zero_delta2() {
        let e = sample(4, 0.02);
        assert_eq!(
            delta2_map(&e, &DiagMatrix::zeros(4)).unwrap().as_dense(),
            &DenseMatrix::zeros(4, 4)
        );
    }

    #[test]
    fn large_input_rejected() {
        let e = DenseMatrix::identity(2).scale(-1.0);
        assert!(matches!(
            delta_map(&e),
            Err(FixedPointError::NormTooLarge(_))
        ));
    }

    #[test]
    fn remainders_close_the_exact_equations() {
        // (I+E)ᵀ(I+E) = I + E + Eᵀ − Δ₁ ... equivalently E + Eᵀ = R + Δ₁ with
        // R = I − X̃ᵀX̃ for X̃ = (I+E)⁻¹ and X = I
        let e = sample(4, 0.03);
        let xt = inverse(&e.plus_identity()).unwrap();
        let r = DenseMatrix::identity(4)
            .sub(&matmul(&xt.transpose(), &xt).unwrap())
            .unwrap();
        let d1 = delta1_map(&e).unwrap();
        let lhs = e.add(&e.transpose()).unwrap();
        assert!(lhs.max_abs_diff(&r.add(d1.as_dense()).unwrap()).unwrap() < 1e-15);

        let d = DiagMatrix::from(vec![1.0, -2.0, 0.5, 3.0]);
        let s = matmul(&xt.transpose(), &matmul(&d.to_dense(), &xt).unwrap()).unwrap();
        let de = matmul(&d.to_dense(), &e).unwrap();
        let lhs = d.to_dense().sub(&de).unwrap().sub(&de.transpose()).unwrap();
        let d2 = delta2_map(&e, &d).unwrap();
        assert!(lhs.max_abs_diff(&s.add(d2.as_dense()).unwrap()).unwrap() < 1e-14);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let n = 3;
        let f = sample(n, 0.04);
        let d = DiagMatrix::from(vec![1.0, 2.5, -0.5]);
        let a = remainder_derivatives(&f, &d).unwrap();
        let h = 1e-6;
        let (mut d1, mut d2, mut dd) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..n {
            for l in 0..n {
                let mut fp = f.clone();
                fp[(k, l)] += h;
                let mut fm = f.clone();
                fm[(k, l)] -= h;
                let (p1, p2) = remainders(&fp, &d).unwrap();
                let (m1, m2) = remainders(&fm, &d).unwrap();
                d1 = d1.max(p1.as_dense().sub(m1.as_dense()).unwrap().max_abs() / (2.0 * h));
                d2 = d2.max(p2.as_dense().sub(m2.as_dense()).unwrap().max_abs() / (2.0 * h));
            }
            let mut dp = d.clone();
            dp.values_mut()[k] += h;
            let mut dm = d.clone();
            dm.values_mut()[k] -= h;
            let p = delta2_map(&f, &dp).unwrap();
            let m = delta2_map(&f, &dm).unwrap();
            dd = dd.max(p.as_dense().sub(m.as_dense()).unwrap().max_abs() / (2.0 * h));
        }
        assert!((a.d1_df - d1).abs() < 1e-8, "{} vs {d1}", a.d1_df);
        assert!((a.d2_df - d2).abs() < 1e-8, "{} vs {d2}", a.d2_df);
        assert!((a.d2_dd - dd).abs() < 1e-8, "{} vs {dd}", a.d2_dd);
    }

    #[test]
    fn derivatives_vanish_at_zero() {
        let d = DiagMatrix::from(vec![1.0, 2.0]);
        let a = remainder_derivatives(&DenseMatrix::zeros(2, 2), &d).unwrap();
        assert_eq!(
            a,
            RemainderDerivatives {
                d1_df: 0.0,
                d2_df: 0.0,
                d2_dd: 0.0
            }
        );
    }
}
