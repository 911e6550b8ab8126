use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use eigrefine::fixedpoint::FixedPointError;
use eigrefine::harness::io::{read_matrix, read_sym_matrix, write_matrix, write_sym_matrix};
use eigrefine::harness::{
    default_seed, gen_instance, run_fixedpoint_suite, write_trace_csv, ConvergenceSummary,
    HarnessError, SpectrumSpec,
};
use eigrefine::matkit::{spectral_norm, AccumMode};
use eigrefine::refine::{refine_loop, RefineConfig, StepKind, StopReason};

const EXIT_FAILURE: u8 = 1;
const EXIT_BREAKDOWN: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_HYPOTHESIS: u8 = 4;

const BENCH_MAX_N: usize = 512;

#[derive(Parser)]
#[command(
    name = "eigrefine",
    version,
    about = "Refine approximate symmetric eigendecompositions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Basic,
    Clustered,
}

#[derive(Clone, Copy, ValueEnum)]
enum Accum {
    Working,
    Compensated,
}

impl From<Accum> for AccumMode {
    fn from(a: Accum) -> Self {
        match a {
            Accum::Working => AccumMode::Working,
            Accum::Compensated => AccumMode::Compensated,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test problem with a prescribed spectrum.
    Gen {
        /// Eigenvalues with multiplicities, e.g. "1x3,2x3".
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 1e-3)]
        perturb: f64,
        /// Defaults to EIGREFINE_SEED, then 42.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine an approximate eigenvector matrix.
    Refine {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long, value_enum, default_value = "clustered")]
        mode: Mode,
        /// Cluster threshold; chosen from the residuals when omitted.
        #[arg(long)]
        delta1: Option<f64>,
        #[arg(long, value_enum, default_value = "working")]
        accum: Accum,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        max_iters: usize,
        /// CSV convergence trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Reference eigenvector matrix for the err_vs_ref column.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Refined eigenvector matrix.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON summary.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run the fixed-point checks on a generated instance.
    Analyze {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 1e-3)]
        perturb: f64,
        /// Ball radius; defaults to min(eta/3, ||F*||_2)/2.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Time refinement on a random problem.
    Bench {
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        iters: usize,
        #[arg(long, value_enum, default_value = "working")]
        accum: Accum,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Parse { .. } | HarnessError::Spec(_) => EXIT_PARSE,
            HarnessError::Hypothesis(_)
            | HarnessError::FixedPoint(FixedPointError::Hypothesis(_)) => EXIT_HYPOTHESIS,
            _ => EXIT_FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

fn fail<E: Into<HarnessError>>(e: E) -> Failure {
    Failure::from(e.into())
}

/// Reading errors are input errors, whatever layer reports them.
fn input<T>(r: Result<T, HarnessError>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        HarnessError::Io(_) | HarnessError::Mat(_) => Failure::new(EXIT_PARSE, e.to_string()),
        e => e.into(),
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(fail)?;
    std::fs::write(path, text + "\n").map_err(fail)
}

fn gen(spec: &str, perturb: f64, seed: Option<u64>, out: &Path) -> Result<u8, Failure> {
    let spec = SpectrumSpec::parse(spec, seed.unwrap_or_else(default_seed))?;
    let inst = gen_instance(&spec, perturb)?;
    std::fs::create_dir_all(out).map_err(fail)?;
    write_sym_matrix(&out.join("A.mtx"), &inst.a)?;
    write_matrix(&out.join("Xtilde.mtx"), &inst.x_tilde)?;
    write_matrix(&out.join("Xtrue.mtx"), &inst.x_true)?;
    let chk = inst.check()?;
    let meta = json!({
        "spectrum": spec.to_string(),
        "seed": spec.seed,
        "n": inst.n(),
        "perturbation": perturb,
        "eta": inst.eta,
        "norm_a": inst.norm_a(),
        "fstar_norm": spectral_norm(&inst.fstar).map_err(fail)?,
        "fstar_to_p_ratio": chk.fstar_to_p_ratio,
        "eigenvalues": inst.dstar.values(),
        "checks_passed": chk.passed(),
    });
    write_json(&out.join("meta.json"), &meta)?;
    println!("wrote {}", out.display());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    a: &Path,
    x: &Path,
    cfg: RefineConfig,
    trace: Option<&Path>,
    reference: Option<&Path>,
    out: Option<&Path>,
    summary: Option<&Path>,
) -> Result<u8, Failure> {
    let a = input(read_sym_matrix(a))?;
    let x = input(read_matrix(x))?;
    let reference = reference.map(|p| input(read_matrix(p))).transpose()?;
    let res = refine_loop(&a, &x, &cfg, reference.as_ref()).map_err(fail)?;
    if let Some(p) = trace {
        write_trace_csv(File::create(p).map_err(fail)?, &res.trace)?;
    }
    if let Some(p) = out {
        write_matrix(p, &res.approx.x)?;
    }
    let sum = ConvergenceSummary::of(&res, &cfg);
    if let Some(p) = summary {
        let mut v = serde_json::to_value(&sum).map_err(fail)?;
        v["eigenvalues"] = json!(res.approx.d.values());
        if let Some(e) = &res.breakdown {
            v["breakdown"] = json!(e.to_string());
        }
        write_json(p, &v)?;
    }
    println!(
        "{:?} after {} corrections: ||R||_F = {:e}, ||offdiag S||_F = {:e}",
        sum.stop, sum.corrections, sum.final_r_norm, sum.final_s_off_norm
    );
    if let Some(e) = &res.breakdown {
        eprintln!("breakdown: {e}");
    }
    Ok(match res.stop {
        StopReason::Converged | StopReason::Stagnated => 0,
        StopReason::MaxIters => EXIT_FAILURE,
        StopReason::Breakdown => EXIT_BREAKDOWN,
    })
}

fn analyze(
    spec: &str,
    perturb: f64,
    delta: Option<f64>,
    samples: usize,
    seed: Option<u64>,
    report: Option<&Path>,
) -> Result<u8, Failure> {
    let spec = SpectrumSpec::parse(spec, seed.unwrap_or_else(default_seed))?;
    let delta = match delta {
        Some(d) => d,
        None => {
            let inst = gen_instance(&spec, perturb)?;
            (inst.eta / 3.0).min(spectral_norm(&inst.fstar).map_err(fail)?) / 2.0
        }
    };
    let res = run_fixedpoint_suite(&spec, perturb, delta, samples)?;
    if let Some(p) = report {
        write_json(p, &res)?;
    }
    let show = |name: &str, rep: &Option<eigrefine::fixedpoint::BoundReport>| match rep {
        Some(r) => println!(
            "{name}: {} bounds, {} violated",
            r.records.len(),
            r.violations().count()
        ),
        None => println!("{name}: skipped"),
    };
    show("lemma1", &res.lemma1);
    show("lemma2", &res.lemma2);
    if let Some(c) = &res.contraction {
        println!(
            "contraction: max ||J||_F = {:e} ({})",
            c.jacobian_frobenius_max, c.is_contraction
        );
    }
    for c in &res.cross_checks {
        println!(
            "{}: {:e} <= {:e} {}",
            c.name,
            c.value,
            c.limit,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    for (k, v) in &res.observations {
        println!("{k}: {v:e} (observed)");
    }
    for n in &res.notes {
        println!("note: {n}");
    }
    let ok = res.lemma1.as_ref().is_none_or(|r| r.all_satisfied())
        && res.lemma2.as_ref().is_none_or(|r| r.all_satisfied())
        && res.contraction.as_ref().is_none_or(|c| c.is_contraction)
        && res.all_cross_checks_passed();
    Ok(if !res.notes.is_empty() {
        EXIT_HYPOTHESIS
    } else if ok {
        0
    } else {
        EXIT_FAILURE
    })
}

fn bench(n: usize, iters: usize, mode: AccumMode, seed: Option<u64>) -> Result<u8, Failure> {
    if n == 0 || n > BENCH_MAX_N {
        return Err(Failure::new(
            EXIT_PARSE,
            format!("--n must be in 1..={BENCH_MAX_N}"),
        ));
    }
    let spec = SpectrumSpec::distinct_range(n, seed.unwrap_or_else(default_seed));
    let t = Instant::now();
    let inst = gen_instance(&spec, 1e-6)?;
    println!("n = {n}: generated in {:.3} s", t.elapsed().as_secs_f64());
    {
        let cfg = RefineConfig {
            step_kind: StepKind::Basic,
            ..RefineConfig::default()
        }
        .with_mode(mode);
        let mut times = Vec::with_capacity(iters);
        let mut last = None;
        for _ in 0..iters.max(1) {
            let t = Instant::now();
            let res = refine_loop(&inst.a, &inst.x_tilde, &cfg, None).map_err(fail)?;
            times.push(t.elapsed().as_secs_f64());
            last = Some(res);
        }
        let res = last.expect("at least one run");
        let best = times.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        println!(
            "{mode:?}: {:?} after {} corrections, best {best:.3} s, mean {mean:.3} s over {} runs",
            res.stop,
            res.corrections,
            times.len()
        );
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.cmd {
        Command::Gen {
            spec,
            perturb,
            seed,
            out,
        } => gen(&spec, perturb, seed, &out),
        Command::Refine {
            a,
            x,
            mode,
            delta1,
            accum,
            tol,
            max_iters,
            trace,
            reference,
            out,
            summary,
        } => {
            let cfg = RefineConfig {
                delta1,
                max_iters,
                stop_tol: tol,
                mode: accum.into(),
                step_kind: match mode {
                    Mode::Basic => StepKind::Basic,
                    Mode::Clustered => StepKind::Clustered,
                },
            };
            cfg.validate()
                .map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
            refine(
                &a,
                &x,
                cfg,
                trace.as_deref(),
                reference.as_deref(),
                out.as_deref(),
                summary.as_deref(),
            )
        }
        Command::Analyze {
            spec,
            perturb,
            delta,
            samples,
            seed,
            report,
        } => analyze(&spec, perturb, delta, samples, seed, report.as_deref()),
        Command::Bench {
            n,
            iters,
            accum,
            seed,
        } => bench(n, iters, accum.into(), seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PARSE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
