//! `quasar`: generate, solve, certify and benchmark robust rotation search
//! instances.
//!
//! Exit codes: 0 success, 2 unreadable or invalid input, 3 solver failure or
//! a report that does not reproduce, 4 not tight under `--require-tight`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use quasar_core::baselines::{brute_force_tls, inverse_variance_weights, ransac_rotation, RansacParams, RansacStatus};
use quasar_core::certify::{certified_lower_bound, check_dual_certificate, construct_noiseless_certificate, relative_gap, GAP_TOL};
use quasar_core::io::{load_correspondences, load_instance, save_instance, InstanceFile, Truth};
use quasar_core::pipeline::solve_detailed;
use quasar_core::problem::{lift, qcqp_cost};
use quasar_core::relax::build_sdp;
use quasar_core::sdp::Algorithm;
use quasar_core::sweep::run_sweep;
use quasar_core::{
    generate_instance, tls_cost, wahba_closed_form, Method, Relaxation, RobustWahbaProblem, RobustWahbaSolution, Rotation3,
    SolveStatus, SolverSettings, SweepConfig, SyntheticConfig, UnitQuaternion,
};

#[derive(Parser)]
#[command(name = "quasar", version, about = "Certifiable outlier-robust rotation search")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic instance with its ground truth.
    Generate(GenerateArgs),
    /// Estimate the rotation of an instance and write a JSON report.
    Solve(SolveArgs),
    /// Independently re-check a solve report against its instance.
    Certify(CertifyArgs),
    /// Run a Monte Carlo grid and write a CSV report.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inlier probability defining the truncation threshold.
    #[arg(long)]
    p_quantile: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON.
    #[arg(long = "in", conflicts_with = "csv", required_unless_present = "csv")]
    input: Option<PathBuf>,
    /// Correspondence CSV `ax,ay,az,bx,by,bz[,sigma]`.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Noise scale for CSV rows without a sigma column.
    #[arg(long, requires = "csv")]
    sigma: Option<f64>,
    /// Truncation threshold for CSV input; defaults to the 1 − 1e-4 χ²₃ quantile.
    #[arg(long, requires = "csv")]
    cbar_sq: Option<f64>,
    #[arg(long, default_value = "quasar")]
    method: Method,
    /// Report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also export the relaxation in SDPA sparse format (quasar/naive only).
    #[arg(long)]
    sdpa_out: Option<PathBuf>,
    /// Exit with code 4 unless global optimality is certified.
    #[arg(long)]
    require_tight: bool,
    /// RANSAC seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<usize>,
    /// `ipm` or `admm`.
    #[arg(long, default_value = "ipm", value_parser = parse_algorithm)]
    algorithm: Algorithm,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Report written by `solve`.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    require_tight: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s {
        "ipm" => Ok(Algorithm::Ipm),
        "admm" => Ok(Algorithm::Admm),
        _ => Err(format!("unknown algorithm `{s}` (expected ipm or admm)")),
    }
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

trait Code<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, err: e.into() })
    }
}

const PARSE: u8 = 2;
const SOLVER: u8 = 3;
const NOT_TIGHT: u8 = 4;
const OTHER: u8 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct RansacSummary {
    status: RansacStatus,
    inliers: Vec<usize>,
    degenerate_samples: usize,
}

/// What `solve` writes. SDP methods carry the solver summary and the dual
/// vector, from which `certify` rebuilds the lower bound on its own.
#[derive(Debug, Serialize, Deserialize)]
struct SolveReport {
    method: Method,
    n: usize,
    #[serde(rename = "R")]
    rotation: Rotation3,
    q: UnitQuaternion,
    theta: Vec<i8>,
    /// TLS cost of the estimate.
    f_tls: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation_error_rad: Option<f64>,
    /// Whether global optimality is established: a tight relaxation, or the
    /// exhaustive search.
    certified: bool,
    wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sdp: Option<RobustWahbaSolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dual_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ransac: Option<RansacSummary>,
}

#[derive(Debug, Serialize)]
struct CertifyReport {
    method: Method,
    f_qcqp: f64,
    f_tls: f64,
    /// Dual lower bound rebuilt from the instance, when the report has one.
    lower_bound: Option<f64>,
    relative_gap: Option<f64>,
    /// Closed-form noiseless certificate, when the estimate fits exactly.
    analytic_certificate: Option<bool>,
    consistent: bool,
    certified: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    issues: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Solve(a) => solve(a),
        Cmd::Certify(a) => certify(a),
        Cmd::Sweep(a) => sweep(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut cfg = SyntheticConfig::new(a.n, a.sigma, a.outlier_ratio, a.seed);
    if let Some(p) = a.p_quantile {
        cfg.p_quantile = p;
    }
    let inst = generate_instance(&cfg).code(PARSE)?;
    save_instance(&a.out, &InstanceFile::from(&inst))
        .with_context(|| format!("writing {}", a.out.display()))
        .code(OTHER)?;
    eprintln!(
        "wrote {} (n = {}, {} outliers, c̄² = {:.4})",
        a.out.display(),
        a.n,
        inst.num_outliers(),
        inst.problem.cbar_sq()
    );
    Ok(())
}

fn read_input(a: &SolveArgs) -> anyhow::Result<(RobustWahbaProblem, Option<Truth>)> {
    if let Some(path) = &a.input {
        let f = load_instance(path).with_context(|| format!("reading {}", path.display()))?;
        Ok((f.to_problem()?, f.truth))
    } else {
        let path = a.csv.as_ref().ok_or_else(|| anyhow!("one of --in or --csv is required"))?;
        let corrs = load_correspondences(path, a.sigma).with_context(|| format!("reading {}", path.display()))?;
        let p = match a.cbar_sq {
            Some(c) => RobustWahbaProblem::new(corrs, c)?,
            None => RobustWahbaProblem::with_default_threshold(corrs)?,
        };
        Ok((p, None))
    }
}

fn relaxation_of(m: Method) -> Option<Relaxation> {
    match m {
        Method::Quasar => Some(Relaxation::Quasar),
        Method::Naive => Some(Relaxation::Naive),
        _ => None,
    }
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let (p, truth) = read_input(&a).code(PARSE)?;
    let relaxation = relaxation_of(a.method);
    if a.sdpa_out.is_some() && relaxation.is_none() {
        return Err(anyhow!("--sdpa-out needs --method quasar or naive")).code(PARSE);
    }
    let mut settings = SolverSettings {
        algorithm: a.algorithm,
        ..SolverSettings::default()
    };
    if let Some(k) = a.max_iters {
        settings.max_iters = k;
    }

    let t0 = Instant::now();
    let mut sdp_summary = None;
    let mut dual_y = None;
    let mut ransac = None;
    let (q, theta, certified) = match a.method {
        Method::Quasar | Method::Naive => {
            let relax = relaxation.expect("SDP method");
            let solved = solve_detailed(&p, relax, &settings).code(SOLVER)?;
            if let Some(path) = &a.sdpa_out {
                write_sdpa_file(path, &solved.sdp).code(OTHER)?;
            }
            let s = solved.summary;
            let tight = s.certificate.is_tight;
            if s.status == SolveStatus::Infeasible || (s.status != SolveStatus::Optimal && !tight) {
                eprintln!("warning: solver stopped with status {}", s.status);
            }
            let out = (s.estimate.q, s.estimate.theta.clone(), tight);
            dual_y = Some(solved.raw.y.iter().copied().collect());
            sdp_summary = Some(s);
            out
        }
        Method::Wahba => {
            let w = inverse_variance_weights(p.correspondences());
            let r = wahba_closed_form(p.correspondences(), &w).code(SOLVER)?;
            (r.to_quaternion(), p.classify(&r), false)
        }
        Method::Ransac => {
            let params = RansacParams {
                seed: a.seed,
                ..RansacParams::default()
            };
            let r = ransac_rotation(&p, &params).code(SOLVER)?;
            let q = r.rotation.to_quaternion();
            let theta = p.classify(&r.rotation);
            ransac = Some(RansacSummary {
                status: r.status,
                inliers: r.inliers,
                degenerate_samples: r.degenerate_samples,
            });
            (q, theta, false)
        }
        Method::Brute => {
            let b = brute_force_tls(&p).code(SOLVER)?;
            (b.q, b.theta, true)
        }
    };
    let rotation = q.to_rotation();
    let report = SolveReport {
        method: a.method,
        n: p.n(),
        rotation,
        q,
        theta,
        f_tls: tls_cost(&rotation, &p),
        rotation_error_rad: truth.map(|t| t.q.to_rotation().geodesic_distance(&rotation)),
        certified,
        wall_time_s: t0.elapsed().as_secs_f64(),
        sdp: sdp_summary,
        dual_y,
        ransac,
    };
    write_json(a.report.as_deref(), &report).code(OTHER)?;

    if let Some(s) = &report.sdp {
        let hopeless = s.status == SolveStatus::Infeasible || (s.status != SolveStatus::Optimal && !report.certified);
        if hopeless {
            return Err(anyhow!("solver status {} and the relaxation is not certified tight", s.status)).code(SOLVER);
        }
    }
    if matches!(&report.ransac, Some(r) if r.status == RansacStatus::Failed) {
        return Err(anyhow!("RANSAC found no consensus; rotation is a best effort")).code(SOLVER);
    }
    if a.require_tight && !report.certified {
        return Err(anyhow!("{} estimate is not certified globally optimal", a.method)).code(NOT_TIGHT);
    }
    Ok(())
}

fn write_sdpa_file(path: &Path, sdp: &quasar_core::SdpProblem) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    quasar_core::sdpa::write_sdpa(sdp, BufWriter::new(f))?;
    Ok(())
}

fn write_json<T: Serialize>(path: Option<&Path>, v: &T) -> anyhow::Result<()> {
    match path {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            serde_json::to_writer_pretty(&mut f, v)?;
            writeln!(f)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, v)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn certify(a: CertifyArgs) -> Result<(), Failure> {
    let inst = load_instance(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .code(PARSE)?;
    let p = inst.to_problem().code(PARSE)?;
    let text = std::fs::read_to_string(&a.solution)
        .with_context(|| format!("reading {}", a.solution.display()))
        .code(PARSE)?;
    let rep: SolveReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.solution.display()))
        .code(PARSE)?;
    if rep.n != p.n() || rep.theta.len() != p.n() || rep.theta.iter().any(|&t| t != 1 && t != -1) {
        return Err(anyhow!("report does not match the instance (n = {})", p.n())).code(PARSE);
    }

    let mut issues = Vec::new();
    let cm = p.cost_matrices();
    let f_qcqp = qcqp_cost(&cm.big_q, &lift(&rep.q, &rep.theta));
    let r = rep.q.to_rotation();
    let f_tls = tls_cost(&r, &p);
    let scale = 1.0 + f_tls.abs();
    if (f_qcqp - f_tls) > 1e-9 * scale {
        issues.push(format!("theta is not the best classification for R: {f_qcqp} > {f_tls}"));
    }
    if (rep.f_tls - f_tls).abs() > 1e-9 * scale {
        issues.push(format!("reported TLS cost {} does not reproduce ({f_tls})", rep.f_tls));
    }
    if (rep.rotation.m - r.m).amax() > 1e-9 {
        issues.push("R does not match q".into());
    }

    let mut lower_bound = None;
    let mut gap = None;
    if let (Some(relax), Some(y)) = (relaxation_of(rep.method), &rep.dual_y) {
        let sdp = build_sdp(relax, &cm.big_q, p.n()).code(SOLVER)?;
        if y.len() != sdp.num_constraints() {
            return Err(anyhow!("dual vector has {} entries, expected {}", y.len(), sdp.num_constraints())).code(PARSE);
        }
        let lb = certified_lower_bound(&sdp, &quasar_core::nalgebra::DVector::from_column_slice(y));
        lower_bound = Some(lb);
        gap = Some(relative_gap(f_qcqp, lb).0);
    }
    let bound_ok = lower_bound.is_some_and(|lb| f_qcqp - lb <= GAP_TOL * f_qcqp.abs().max(1.0));

    // Exact fits admit a closed-form dual certificate regardless of method.
    let analytic = construct_noiseless_certificate(&p, &rep.q).ok().map(|c| {
        check_dual_certificate(&cm.big_q, c.mu, &c.lambda, &c.x_star, 1e-9)
            .map(|d| d.verdict)
            .unwrap_or(false)
    });

    let exhaustive_ok = rep.method == Method::Brute && {
        let b = brute_force_tls(&p).code(SOLVER)?;
        (b.f_star - f_qcqp).abs() <= 1e-9 * scale
    };
    let consistent = issues.is_empty();
    let certified = consistent && (bound_ok || analytic == Some(true) || exhaustive_ok);
    if rep.certified && !certified {
        issues.push("report claims a certificate that does not verify".into());
    }
    let out = CertifyReport {
        method: rep.method,
        f_qcqp,
        f_tls,
        lower_bound,
        relative_gap: gap,
        analytic_certificate: analytic,
        consistent,
        certified,
        issues,
    };
    write_json(None, &out).code(OTHER)?;
    if !out.issues.is_empty() {
        return Err(anyhow!("{}", out.issues.join("; "))).code(SOLVER);
    }
    if a.require_tight && !certified {
        return Err(anyhow!("global optimality could not be certified")).code(NOT_TIGHT);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))
        .code(PARSE)?;
    let cfg: SweepConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.config.display()))
        .code(PARSE)?;
    cfg.validate().code(PARSE)?;
    let report = run_sweep(&cfg).code(SOLVER)?;
    let f = File::create(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .code(OTHER)?;
    report.write_csv(BufWriter::new(f)).code(OTHER)?;
    let failed = report.runs.iter().filter(|r| r.status.starts_with("error")).count();
    eprintln!(
        "wrote {}: {} runs, {} cells{}",
        a.out.display(),
        report.runs.len(),
        report.aggregates.len(),
        if failed > 0 { format!(", {failed} runs failed") } else { String::new() }
    );
    Ok(())
}
