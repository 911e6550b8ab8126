use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fixedpoint::{
    contraction_probe, fmap, lemma1_check, lemma2_check, picard_iterate, sample_ball, BoundReport,
    ContractionReport, FixedPointError,
};
use crate::matkit::{lu_solve, spectral_norm, AccumMode, DenseMatrix};
use crate::refine::{
    refine_loop, ConvergenceTrace, RefineConfig, RefineOutcome, StepKind, StopReason,
};

use super::{gen_instance, HarnessError, Instance, SpectrumSpec};

/// Corrections at or below this size are rounding noise for order estimates.
pub const ORDER_FLOOR: f64 = 1e-13;

/// Largest perturbation at which the refined limit is expected to land on
/// the canonical correction to 1e-8.
pub const LIMIT_CHECK_MAX_PERTURBATION: f64 = 1e-3;

/// Starts used by the uniqueness probe.
pub const PICARD_STARTS: usize = 20;
pub const PICARD_ITERS: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct InstanceDescriptor {
    pub spectrum: String,
    pub n: usize,
    pub seed: u64,
    pub perturbation: f64,
    pub eta: f64,
    pub norm_a: f64,
    pub fstar_norm: f64,
    /// `‖F*‖₂ / ‖P‖₂`, observational.
    pub fstar_to_p_ratio: Option<f64>,
}

impl InstanceDescriptor {
    pub fn of(inst: &Instance) -> Result<Self, HarnessError> {
        let chk = inst.check()?;
        Ok(Self {
            spectrum: inst.spec.to_string(),
            n: inst.n(),
            seed: inst.spec.seed,
            perturbation: inst.perturbation,
            eta: inst.eta,
            norm_a: inst.norm_a(),
            fstar_norm: spectral_norm(&inst.fstar)?,
            fstar_to_p_ratio: chk.fstar_to_p_ratio,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceSummary {
    pub stop: StopReason,
    pub corrections: usize,
    pub final_r_norm: f64,
    pub final_s_off_norm: f64,
    /// `ln e_{k+1} / ln e_k` over consecutive corrections above [`ORDER_FLOOR`].
    pub order_estimates: Vec<f64>,
    pub config: RefineConfig,
}

impl ConvergenceSummary {
    pub fn of(out: &RefineOutcome, cfg: &RefineConfig) -> Self {
        let last = out.trace.last();
        Self {
            stop: out.stop,
            corrections: out.corrections,
            final_r_norm: last.map_or(f64::NAN, |r| r.r_norm),
            final_s_off_norm: last.map_or(f64::NAN, |r| r.s_off_norm),
            order_estimates: order_estimates(&out.trace.correction_norms()),
            config: cfg.clone(),
        }
    }
}

/// `ln e_{k+1} / ln e_k` for consecutive pairs with both terms above the
/// floor and below one.
pub fn order_estimates(e: &[f64]) -> Vec<f64> {
    e.windows(2)
        .filter(|w| w[0] > ORDER_FLOOR && w[1] > ORDER_FLOOR && w[0] < 1.0 && w[1] < 1.0)
        .map(|w| w[1].ln() / w[0].ln())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl CrossCheck {
    pub fn new(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardSummary {
    pub starts: usize,
    pub iters: usize,
    pub max_pairwise_distance: f64,
    pub max_distance_to_zstar: f64,
    pub max_final_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub instance: InstanceDescriptor,
    pub convergence: Option<ConvergenceSummary>,
    pub trace: Option<ConvergenceTrace>,
    pub lemma1: Option<BoundReport>,
    pub lemma2: Option<BoundReport>,
    pub contraction: Option<ContractionReport>,
    pub picard: Option<PicardSummary>,
    pub cross_checks: Vec<CrossCheck>,
    /// Hypotheses that did not hold, so the matching check was skipped.
    pub notes: Vec<String>,
    /// Measured values without a pass/fail limit.
    pub observations: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentResult {
    fn new(instance: InstanceDescriptor) -> Self {
        Self {
            instance,
            convergence: None,
            trace: None,
            lemma1: None,
            lemma2: None,
            contraction: None,
            picard: None,
            cross_checks: Vec::new(),
            notes: Vec::new(),
            observations: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn cross_check(&self, name: &str) -> Option<&CrossCheck> {
        self.cross_checks.iter().find(|c| c.name == name)
    }

    pub fn all_cross_checks_passed(&self) -> bool {
        self.cross_checks.iter().all(|c| c.passed)
    }
}

/// `‖X̃⁻¹X − I − F*‖_F`: distance of a refined `X` from the canonical one,
/// measured in correction space.
pub fn distance_to_canonical(inst: &Instance, x: &DenseMatrix) -> Result<f64, HarnessError> {
    let g = lu_solve(&inst.x_tilde, x)?;
    Ok(g.sub(&inst.fstar.plus_identity())?.frobenius_norm())
}

/// Generates an instance and refines `X̃`, recording the distance to the
/// canonical eigenvector matrix at each iterate.
pub fn run_convergence(
    spec: &SpectrumSpec,
    perturbation: f64,
    cfg: &RefineConfig,
) -> Result<ExperimentResult, HarnessError> {
    let t = Instant::now();
    let inst = gen_instance(spec, perturbation)?;
    let mut res = ExperimentResult::new(InstanceDescriptor::of(&inst)?);
    res.timings
        .insert("generate".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let out = refine_loop(&inst.a, &inst.x_tilde, cfg, Some(&inst.x_star))?;
    res.timings
        .insert("refine".into(), t.elapsed().as_secs_f64());
    if out.stop != StopReason::Breakdown && cfg.step_kind == StepKind::Clustered {
        let dist = distance_to_canonical(&inst, &out.approx.x)?;
        if perturbation <= LIMIT_CHECK_MAX_PERTURBATION {
            res.cross_checks
                .push(CrossCheck::new("limit_vs_fstar", dist, 1e-8));
        } else {
            res.observations.insert("limit_vs_fstar".into(), dist);
        }
    }
    res.convergence = Some(ConvergenceSummary::of(&out, cfg));
    res.trace = Some(out.trace);
    Ok(res)
}

/// Runs the fixed-point checks around `z* = (F*, D*)` for one instance.
///
/// Lemma checks whose hypotheses fail are skipped and noted; `delta` must
/// be below `η/3` for the ball to be meaningful at all.
pub fn run_fixedpoint_suite(
    spec: &SpectrumSpec,
    perturbation: f64,
    delta: f64,
    samples: usize,
) -> Result<ExperimentResult, HarnessError> {
    let t = Instant::now();
    let inst = gen_instance(spec, perturbation)?;
    let desc = InstanceDescriptor::of(&inst)?;
    if delta.is_nan() || delta < 0.0 || delta >= inst.eta / 3.0 {
        return Err(HarnessError::Hypothesis(format!(
            "delta = {delta} is not below eta/3 = {}",
            inst.eta / 3.0
        )));
    }
    let fs = desc.fstar_norm;
    let mut res = ExperimentResult::new(desc);
    let pd = inst.problem_data(AccumMode::Working)?;
    let zs = inst.zstar();
    res.timings
        .insert("generate".into(), t.elapsed().as_secs_f64());

    let fz = fmap(&zs, &pd)?;
    res.cross_checks.push(CrossCheck::new(
        "fixed_point_residual",
        fz.distance(&zs)?,
        1e-10 * (1.0 + zs.norm()),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points: Vec<_> = (0..samples.max(1))
        .map(|k| {
            if k == 0 {
                Ok(zs.clone())
            } else {
                sample_ball(&mut rng, &zs, delta)
            }
        })
        .collect::<Result<_, _>>()?;

    let t = Instant::now();
    if fs < 0.1 && fs + delta < 0.1 {
        let mut worst = BoundReport::default();
        for z in &points {
            worst.merge_worst(&lemma1_check(&z.f, &z.d, Some((&pd, fs)))?);
        }
        res.lemma1 = Some(worst);
    } else {
        res.notes.push(format!(
            "lemma1 skipped: ||F*||_2 + delta = {} is not below 1/10",
            fs + delta
        ));
    }
    res.timings
        .insert("lemma1".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let mut worst = BoundReport::default();
    let mut lemma2_ok = true;
    for z in &points {
        match lemma2_check(&pd, z, &zs, delta, None) {
            Ok(rep) => worst.merge_worst(&rep),
            Err(FixedPointError::Hypothesis(msg)) => {
                res.notes.push(format!("lemma2 skipped: {msg}"));
                lemma2_ok = false;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    if lemma2_ok {
        res.lemma2 = Some(worst);
    }
    res.timings
        .insert("lemma2".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    res.contraction = Some(contraction_probe(
        &pd,
        &zs,
        delta,
        samples.max(1),
        spec.seed,
    )?);
    res.timings
        .insert("contraction".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let mut limits = Vec::with_capacity(PICARD_STARTS);
    let mut max_res = 0.0f64;
    for _ in 0..PICARD_STARTS {
        let z0 = sample_ball(&mut rng, &zs, delta)?;
        let run = picard_iterate(&pd, &z0, PICARD_ITERS)?;
        max_res = max_res.max(run.residuals.last().copied().unwrap_or(0.0));
        limits.push(run.z);
    }
    let mut pairwise = 0.0f64;
    let mut to_star = 0.0f64;
    for (k, a) in limits.iter().enumerate() {
        to_star = to_star.max(a.distance(&zs)?);
        for b in &limits[k + 1..] {
            pairwise = pairwise.max(a.distance(b)?);
        }
    }
    res.picard = Some(PicardSummary {
        starts: PICARD_STARTS,
        iters: PICARD_ITERS,
        max_pairwise_distance: pairwise,
        max_distance_to_zstar: to_star,
        max_final_residual: max_res,
    });
    res.cross_checks
        .push(CrossCheck::new("picard_pairwise", pairwise, 1e-9));
    res.cross_checks
        .push(CrossCheck::new("picard_vs_zstar", to_star, 1e-9));
    res.timings
        .insert("picard".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let out = refine_loop(&inst.a, &inst.x_tilde, &RefineConfig::clustered(), None)?;
    if out.stop == StopReason::Breakdown {
        res.notes
            .push("refine_loop broke down; limit comparison skipped".into());
    } else if let Some(z) = limits.first() {
        let g = lu_solve(&inst.x_tilde, &out.approx.x)?;
        let f_alg = g.sub(&DenseMatrix::identity(inst.n()))?;
        let dist = f_alg.sub(&z.f)?.frobenius_norm();
        if perturbation <= LIMIT_CHECK_MAX_PERTURBATION {
            res.cross_checks
                .push(CrossCheck::new("picard_vs_refine", dist, 1e-8));
        } else {
            res.observations.insert("picard_vs_refine".into(), dist);
        }
    }
    res.timings
        .insert("refine".into(), t.elapsed().as_secs_f64());
    Ok(res)
}

/// Writes the trace as CSV: `iter, r_norm, s_off_norm, e_norm, err_vs_ref, seconds`.
pub fn write_trace_csv<W: Write>(w: W, trace: &ConvergenceTrace) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for r in &trace.records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_estimates_skip_floor() {
        let e = [1e-3, 1e-6, 1e-12, 1e-16];
        let o = order_estimates(&e);
        assert_eq!(o.len(), 2);
        assert!((o[0] - 2.0).abs() < 1e-12 && (o[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_basic_is_quadratic() {
        let spec = SpectrumSpec::distinct_range(6, 3);
        let res = run_convergence(&spec, 1e-3, &RefineConfig::basic()).unwrap();
        let c = res.convergence.unwrap();
        assert_eq!(c.stop, StopReason::Converged);
        assert!(!c.order_estimates.is_empty());
        assert!(
            c.order_estimates.iter().all(|o| (1.7..=2.3).contains(o)),
            "{:?}",
            c.order_estimates
        );
    }

    #[test]
    fn multiple_basic_breaks_down() {
        let spec = SpectrumSpec::parse("1x2,2x2", 5).unwrap();
        let res = run_convergence(&spec, 1e-4, &RefineConfig::basic()).unwrap();
        assert_eq!(res.convergence.unwrap().stop, StopReason::Breakdown);
    }

    #[test]
    fn multiple_clustered_converges() {
        let spec = SpectrumSpec::parse("1x2,2x2", 5).unwrap();
        let res = run_convergence(&spec, 1e-4, &RefineConfig::clustered()).unwrap();
        let c = res.convergence.as_ref().unwrap();
        assert_eq!(c.stop, StopReason::Converged);
        assert!(
            c.order_estimates.iter().all(|o| (1.7..=2.3).contains(o)),
            "{:?}",
            c.order_estimates
        );
        assert!(res.all_cross_checks_passed());
    }

    #[test]
    fn suite_small_instance() {
        let spec = SpectrumSpec::parse("1x2,3x2", 11).unwrap();
        let inst = gen_instance(&spec, 1e-4).unwrap();
        let fs = spectral_norm(&inst.fstar).unwrap();
        let delta = (inst.eta / 3.0).min(fs) / 2.0;
        let res = run_fixedpoint_suite(&spec, 1e-4, delta, 5).unwrap();
        assert!(res.notes.is_empty(), "{:?}", res.notes);
        assert!(res.lemma1.as_ref().unwrap().all_satisfied());
        assert!(res.lemma2.as_ref().unwrap().all_satisfied());
        assert!(res.contraction.as_ref().unwrap().is_contraction);
        assert!(res.all_cross_checks_passed(), "{:?}", res.cross_checks);
        assert!(res.cross_check("picard_vs_refine").is_some());
    }

    #[test]
    fn large_perturbation_limit_is_observed() {
        let spec = SpectrumSpec::parse("1x2,3x2", 11).unwrap();
        let res = run_convergence(&spec, 1e-2, &RefineConfig::clustered()).unwrap();
        assert!(res.cross_check("limit_vs_fstar").is_none());
        assert!(res.observations.contains_key("limit_vs_fstar"));
    }

    #[test]
    fn suite_unperturbed() {
        let spec = SpectrumSpec::parse("1x2,3x2", 11).unwrap();
        let res = run_fixedpoint_suite(&spec, 0.0, 0.0, 2).unwrap();
        assert_eq!(res.instance.fstar_norm, 0.0);
        let l2 = res.lemma2.unwrap();
        assert!(l2.records.iter().all(|r| r.lhs <= 1e-8), "{l2:?}");
        assert!(l2
            .records
            .iter()
            .filter(|r| r.name != "within_dd")
            .all(|r| r.rhs == 0.0));
    }

    #[test]
    fn suite_rejects_large_delta() {
        let spec = SpectrumSpec::parse("1x2,3x2", 11).unwrap();
        assert!(matches!(
            run_fixedpoint_suite(&spec, 1e-4, 0.7, 2),
            Err(HarnessError::Hypothesis(_))
        ));
    }

    #[test]
    fn csv_columns() {
        let spec = SpectrumSpec::distinct_range(3, 1);
        let res = run_convergence(&spec, 1e-4, &RefineConfig::basic()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, res.trace.as_ref().unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("iter,r_norm,s_off_norm,e_norm,err_vs_ref,seconds\n"),
            "{text}"
        );
    }
}
