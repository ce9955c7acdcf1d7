//! The `gapcurve` command line: argument parsing, file IO and report emission.
//!
//! Every command reads and validates its inputs, computes everything in
//! memory, and only then writes its outputs (each via temp file + rename).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{check_closing, ingest, reconstruct_full, sobolev_distance, ClosingReport, CurveSamples, Space, CLOSING_TOL};
use crate::inverse::{approximate, SolverConfig};
use crate::io::{fmt_f64, read_text, to_json_string, write_atomic};
use crate::potential::Potential;
use crate::spectral::{
    asymptotic_diagnostics, invariant_lambdas, is_finite_gap, perturbed_fourier, structural_invariants,
    AsymptoticReport, FiniteGapVerdict, InvariantReport,
};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "GAPCURVE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "gapcurve", version, about = "Finite-gap approximation of closed curves in R3 and S3")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Complex curvature of a sampled closed curve (CSV) as a potential (JSON).
    Ingest(IoArgs),
    /// Perturbed Fourier coefficients z_k, |k| <= K, and the finite-gap verdict.
    Spectrum(SpectrumArgs),
    /// Finite-gap approximant by tail truncation of the z_k.
    Approximate(ApproximateArgs),
    /// Curve of a potential (CSV).
    Reconstruct(ReconstructArgs),
    /// Sobolev distances between two curves on the same grid.
    Compare(CompareArgs),
    /// Asymptotic diagnostics, structural invariants and closing checks.
    Diagnose(SpectrumArgs),
}

#[derive(Args, Debug)]
pub struct IoArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Resample the result onto N points.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Number of modes K (indices -K..K).
    #[arg(long, default_value_t = 16)]
    pub modes: usize,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Finite-gap threshold on |z_k| (default 1e-6 max|z| + 1e-10).
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ApproximateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Preserve closing in this space (when the input is closed there).
    #[arg(long)]
    pub space: Option<Space>,
    /// Keep z_k for |k| <= n.
    #[arg(long)]
    pub trunc: Option<usize>,
    /// Highest mode solved for (default grid/4).
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Solver config JSON ({"N","n_trunc","tol","max_iter","exact_jacobian_every","damping_max"}).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub space: Space,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// The two curves (give --input twice).
    #[arg(long, num_args = 1, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

/// `out.json` → `out.<suffix>`
pub fn side_path(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    output.with_file_name(format!("{stem}.{suffix}"))
}

fn load_potential(path: &Path, grid: Option<usize>) -> Result<Potential> {
    let q = Potential::from_json(&read_text(path)?)?;
    match grid {
        Some(m) => q.resample(m),
        None => Ok(q),
    }
}

fn check_grid(grid: Option<usize>) -> Result<()> {
    match grid {
        Some(m) if m < 8 || m % 2 != 0 => Err(Error::Domain(format!("--grid must be even and >= 8, got {m}"))),
        _ => Ok(()),
    }
}

fn write_all(files: &[(PathBuf, String)]) -> Result<()> {
    for (p, s) in files {
        write_atomic(p, s.as_bytes())?;
    }
    Ok(())
}

fn cmd_ingest(a: &IoArgs) -> Result<()> {
    check_grid(a.grid)?;
    let curve = CurveSamples::from_csv(&read_text(&a.input)?)?;
    let mut q = ingest(&curve)?;
    if let Some(m) = a.grid {
        q = q.resample(m)?;
    }
    eprintln!("ingested {} samples: T = {}, theta = {}, |q|_L2 = {:.6}", curve.n(), q.period, q.theta, q.l2_norm());
    write_all(&[(a.output.clone(), q.to_json())])
}

#[derive(Serialize)]
struct SpectrumReport {
    k_max: usize,
    k_central: usize,
    central_count: usize,
    max_abs_z: f64,
    /// ℓ² share of d_k over K/2 < |k| ≤ K.
    tail_fraction: f64,
    verdict: FiniteGapVerdict,
}

fn spectrum_csv(data: &crate::spectral::SpectralData, asym: &AsymptoticReport) -> String {
    let mut s = String::from("k,lambda_re,lambda_im,mult,z_re,z_im,abs_z,d_k,partial_l2\n");
    for e in &data.entries {
        let d = asym.d.iter().find(|(k, _)| *k == e.k).map_or(f64::NAN, |x| x.1);
        let p = asym.partial_sum(e.k.unsigned_abs() as usize);
        let cols = [e.lambda.re, e.lambda.im, e.mult as f64, e.z.re, e.z.im, e.z.norm(), d, p];
        let _ = write!(s, "{}", e.k);
        for (i, v) in cols.iter().enumerate() {
            s.push(',');
            if i == 2 {
                s.push_str(&e.mult.to_string());
            } else {
                s.push_str(&fmt_f64(*v));
            }
        }
        s.push('\n');
    }
    s
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<()> {
    check_grid(a.grid)?;
    if a.modes == 0 {
        return Err(Error::Domain("--modes must be positive".into()));
    }
    let q = load_potential(&a.input, a.grid)?;
    let data = perturbed_fourier(&q, a.modes)?;
    let asym = asymptotic_diagnostics(&q, data.k_max, Some(&[]))?;
    let verdict = is_finite_gap(&data, a.tol);
    eprintln!(
        "K = {} (central {}), max|z| = {:.3e}, finite gap: {} (K0 = {})",
        data.k_max,
        data.k_central,
        data.max_abs_z(),
        verdict.finite_gap,
        verdict.k0
    );
    let report = SpectrumReport {
        k_max: data.k_max,
        k_central: data.k_central,
        central_count: data.central_count(),
        max_abs_z: data.max_abs_z(),
        tail_fraction: asym.tail_fraction(data.k_max / 2),
        verdict,
    };
    write_all(&[
        (side_path(&a.output, "diagnostics.csv"), spectrum_csv(&data, &asym)),
        (side_path(&a.output, "report.json"), to_json_string(&report)),
        (a.output.clone(), data.to_json()),
    ])
}

fn cmd_approximate(a: &ApproximateArgs) -> Result<()> {
    check_grid(a.grid)?;
    let mut cfg = match &a.config {
        Some(p) => SolverConfig::from_json(&read_text(p)?)?,
        None => SolverConfig::default(),
    };
    if let Some(n) = a.trunc {
        cfg.n_trunc = n;
    }
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    cfg.k_sol = a.modes;
    cfg.validate()?;
    let q = load_potential(&a.input, a.grid)?;
    let k_sol = cfg.k_sol_for(&q);
    if k_sol <= cfg.n_trunc || k_sol + 1 > q.n / 2 {
        return Err(Error::Domain(format!(
            "--modes {k_sol} must exceed --trunc {} and be at most n/2 - 1 = {}",
            cfg.n_trunc,
            q.n / 2 - 1
        )));
    }
    let approx = approximate(&q, a.space, &cfg, a.seed)?;
    if let Some(msg) = &approx.closing_skipped {
        eprintln!("note: {msg}");
    }
    eprintln!(
        "converged in {} iterations, residual {:.3e}, |q - q_fg|_L2 = {:.6e}",
        approx.report.iterations, approx.report.final_residual, approx.l2_distance
    );
    write_all(&[
        (side_path(&a.output, "report.json"), to_json_string(&approx)),
        (a.output.clone(), approx.potential.to_json()),
    ])
}

#[derive(Serialize)]
struct ReconstructReport {
    space: Space,
    endpoint_gap: f64,
    max_speed_defect: Option<f64>,
    closing: ClosingReport,
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    check_grid(a.grid)?;
    let q = load_potential(&a.input, a.grid)?;
    let (curve, endpoint_gap) = reconstruct_full(&q, a.space)?;
    let closing = check_closing(&q, a.space, CLOSING_TOL)?;
    let max_speed_defect = curve.tangents.as_ref().map(|t| {
        t.iter().map(|v| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()).fold(0.0, f64::max)
    });
    eprintln!("reconstructed {} points in {}; endpoint gap {:.3e}", curve.n(), a.space.name(), endpoint_gap);
    let report = ReconstructReport { space: a.space, endpoint_gap, max_speed_defect, closing };
    write_all(&[
        (side_path(&a.output, "report.json"), to_json_string(&report)),
        (a.output.clone(), curve.to_csv()),
    ])
}

#[derive(Serialize)]
struct Distances {
    n: usize,
    space: Space,
    /// W^{k,2}, k = 0, 1, 2, as given.
    raw: [f64; 3],
    /// The same after the best rigid alignment of the second curve.
    aligned: [f64; 3],
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    if a.input.len() != 2 {
        return Err(Error::parse(None, format!("compare needs exactly two --input files, got {}", a.input.len())));
    }
    let c1 = CurveSamples::from_csv(&read_text(&a.input[0])?)?;
    let c2 = CurveSamples::from_csv(&read_text(&a.input[1])?)?;
    let d = |o: usize, al: bool| sobolev_distance(&c1, &c2, o, al);
    let out = Distances {
        n: c1.n(),
        space: c1.space,
        raw: [d(0, false)?, d(1, false)?, d(2, false)?],
        aligned: [d(0, true)?, d(1, true)?, d(2, true)?],
    };
    eprintln!("W^(2,2) distance {:.6e} (aligned {:.6e})", out.raw[2], out.aligned[2]);
    write_all(&[(a.output.clone(), to_json_string(&out))])
}

#[derive(Serialize)]
struct Diagnosis {
    asymptotic: AsymptoticReport,
    tail_fraction: f64,
    invariants: InvariantReport,
    closing_r3: ClosingReport,
    closing_s3: ClosingReport,
}

fn cmd_diagnose(a: &SpectrumArgs) -> Result<()> {
    check_grid(a.grid)?;
    let q = load_potential(&a.input, a.grid)?;
    let asym = asymptotic_diagnostics(&q, a.modes, None)?;
    let invariants = structural_invariants(&q, &invariant_lambdas(&q), a.tol.unwrap_or(1e-10))?;
    let out = Diagnosis {
        tail_fraction: asym.tail_fraction(a.modes / 2),
        asymptotic: asym,
        invariants,
        closing_r3: check_closing(&q, Space::R3, CLOSING_TOL)?,
        closing_s3: check_closing(&q, Space::S3, CLOSING_TOL)?,
    };
    eprintln!("invariants {}", if out.invariants.passed { "ok" } else { "VIOLATED" });
    let mut csv = String::from("lambda_re,lambda_im,ratio\n");
    for (l, r) in &out.asymptotic.ratios {
        let _ = writeln!(csv, "{},{},{}", fmt_f64(l[0]), fmt_f64(l[1]), fmt_f64(*r));
    }
    write_all(&[(side_path(&a.output, "diagnostics.csv"), csv), (a.output.clone(), to_json_string(&out))])
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::parse(None, format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // a pool may already exist when called twice in one process (tests)
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Approximate(a) => cmd_approximate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

/// Parse, run, and map the outcome to a process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
