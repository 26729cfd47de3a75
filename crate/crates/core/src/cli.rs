//! Command-line front end. Exit codes: 0 pass, 1 check failure, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::catalog::{get_system, structure_at, verify_system, CatalogError, SystemSpec, VerifyOptions};
use crate::expr::Params;
use crate::geometry::{geometry_at, GeometryError};
use crate::report::{psi_from_str, report_to_string, solutions_to_string, VarietyRun};
use crate::si::{codazzi_from_scalars, sic_k_residuals, structure_connection};
use crate::tensor::DenseTensor;
use crate::variety::{is_diagonal_orbit, psi_residual, solve_variety_multistart, SolveOptions};

#[derive(Debug, Parser)]
#[command(name = "superint", version, about = "Pointwise checks of second-order superintegrable systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every residual check of a built-in system at seeded sample points.
    Verify(VerifyArgs),
    /// Multi-start solve for cubic forms on the variety.
    SolveVariety(SolveArgs),
    /// Residual of a cubic form read from a file.
    CheckPsi(CheckPsiArgs),
    /// Print the structure tensor and derived quantities at one point.
    Structure(StructureArgs),
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[arg(long)]
    pub system: String,
    #[arg(long)]
    pub dim: usize,
    /// Parameter overrides `k=v[,k=v...]`.
    #[arg(long, allow_hyphen_values = true)]
    pub params: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub scalar_curvature: f64,
    #[arg(long, default_value_t = 100)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convergence tolerance on the residual.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckPsiArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub scalar_curvature: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct StructureArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub point: String,
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<CatalogError> for Failure {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::UnknownSystem(_)
            | CatalogError::UnknownParameter { .. }
            | CatalogError::SpecialIndex { .. }
            | CatalogError::Geometry(GeometryError::Dimension(_)) => Failure::Usage(e.to_string()),
            other => Failure::Check(other.to_string()),
        }
    }
}

type Outcome = Result<(String, bool), Failure>;

pub fn parse_params(src: Option<&str>) -> Result<Params, String> {
    let mut p = Params::new();
    for item in src.unwrap_or("").split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| format!("parameter '{item}' is not of the form k=v"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("parameter '{item}' has a non-numeric value"))?;
        p.insert(k.trim().to_string(), v);
    }
    Ok(p)
}

fn load_system(a: &SystemArgs) -> Result<SystemSpec, Failure> {
    let params = parse_params(a.params.as_deref()).map_err(Failure::Usage)?;
    Ok(get_system(&a.system, a.dim, &params)?)
}

fn write_or_return(out: &Option<PathBuf>, body: String, summary: String) -> Result<String, Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, body).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
            Ok(summary)
        }
        None => Ok(body),
    }
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    if a.points == 0 {
        return Err(Failure::Usage("--points must be positive".into()));
    }
    let spec = load_system(&a.system)?;
    let report = verify_system(&spec, VerifyOptions { points: a.points, seed: a.seed, tol: a.tol })?;
    let mut summary = String::new();
    for c in &report.checks {
        let mark = if c.pass { "pass" } else { "FAIL" };
        writeln!(summary, "{mark}  {:<24} {:.3e}  (tol {:.1e})", c.name, c.max_residual, c.tolerance).unwrap();
    }
    if report.check("structure_unique").is_some_and(|c| !c.pass) {
        writeln!(summary, "Wilczynski: non-unique").unwrap();
    }
    let pass = report.pass();
    Ok((write_or_return(&a.out, report_to_string(&report), summary)?, pass))
}

fn cmd_solve(a: &SolveArgs) -> Outcome {
    if a.starts == 0 {
        return Err(Failure::Usage("--starts must be positive".into()));
    }
    if a.dim < 2 {
        return Err(Failure::Usage(format!("dimension {} unsupported", a.dim)));
    }
    let opts = SolveOptions { tol: a.tol, ..SolveOptions::default() };
    let pts = solve_variety_multistart(a.dim, a.scalar_curvature, a.starts, a.seed, opts)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let run = VarietyRun {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: a.seed,
        dim: a.dim,
        scalar_curvature: a.scalar_curvature,
        starts: a.starts,
    };
    let mut summary = format!("{} distinct solutions\n", pts.len());
    for p in &pts {
        let zero = p.form.packed().iter().all(|&v| v == 0.0);
        let kind = if zero {
            "zero form"
        } else if is_diagonal_orbit(&p.form, 1e-8) {
            "diagonal orbit"
        } else {
            "general"
        };
        writeln!(summary, "  |Ψ|² = {:.6e}  residual {:.2e}  {kind}", p.fingerprint[0], p.residual_norm).unwrap();
    }
    let ok = !pts.is_empty();
    Ok((write_or_return(&a.out, solutions_to_string(&run, &pts), summary)?, ok))
}

fn cmd_check_psi(a: &CheckPsiArgs) -> Outcome {
    let src = std::fs::read_to_string(&a.input)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.input.display())))?;
    let f = psi_from_str(&src).map_err(|e| Failure::Usage(e.to_string()))?;
    let (_, res) = psi_residual(&f, a.scalar_curvature);
    let pass = res <= a.tol;
    Ok((format!("residual {res:.6e} ({})\n", if pass { "on variety" } else { "off variety" }), pass))
}

fn fmt_tensor(t: &DenseTensor) -> String {
    fn rec(t: &DenseTensor, idx: &mut Vec<usize>, out: &mut String) {
        if idx.len() == t.rank() {
            let v = t.get(idx);
            write!(out, "{:.10}", if v.abs() < 5e-11 { 0.0 } else { v }).unwrap();
            return;
        }
        out.push('[');
        for i in 0..t.dim() {
            if i > 0 {
                out.push_str(", ");
            }
            idx.push(i);
            rec(t, idx, out);
            idx.pop();
        }
        out.push(']');
    }
    let mut s = String::new();
    rec(t, &mut Vec::new(), &mut s);
    s
}

fn cmd_structure(a: &StructureArgs) -> Outcome {
    let spec = load_system(&a.system)?;
    let point: Vec<f64> = a
        .point
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("cannot parse point '{}'", a.point)))?;
    if point.len() != spec.dim {
        return Err(Failure::Usage(format!("point has {} coordinates, system has dimension {}", point.len(), spec.dim)));
    }
    if !spec.admissible(&point) {
        return Err(Failure::Usage(format!("domain error: point {:?} is outside the domain of {}", point, spec.name)));
    }
    let gd = geometry_at(&spec.metric, &point).map_err(|e| Failure::Usage(e.to_string()))?;
    let sd = structure_at(&spec, &point)?;
    let mut s = String::new();
    writeln!(s, "system {}  n = {}  point {:?}", spec.name, spec.dim, point).unwrap();
    writeln!(s, "T    = {}", fmt_tensor(&sd.t)).unwrap();
    writeln!(s, "T°   = {}", fmt_tensor(&sd.t0)).unwrap();
    writeln!(s, "t̄    = {}", fmt_tensor(&sd.tbar)).unwrap();
    writeln!(s, "Z    = {}", fmt_tensor(&sd.z)).unwrap();
    writeln!(s, "T°·T° = {:.10}  |t̄|² = {:.10}", sd.t0_norm2(&gd), sd.tbar_norm2(&gd)).unwrap();
    if !sd.unique {
        writeln!(s, "structure tensor not unique (kernel dimension {})", sd.kernel_dim).unwrap();
    }
    for (k, v) in sic_k_residuals(&sd, &gd).iter().filter(|(k, _)| k.starts_with("cc_")) {
        writeln!(s, "{k:<10} {v:.3e}").unwrap();
    }
    if let (Some(sf), true) = (&spec.structure, gd.is_constant_curvature()) {
        let (b, c) = sf.jets(&point, 4, 3).map_err(|e| Failure::Check(e.to_string()))?;
        let cd = codazzi_from_scalars(&b, &c, &gd).map_err(|e| Failure::Check(e.to_string()))?;
        let conn = structure_connection(&cd, &gd).map_err(|e| Failure::Check(e.to_string()))?;
        writeln!(s, "|R̂|max   {:.3e}", conn.lowered(&gd).max_abs()).unwrap();
    }
    Ok((s, true))
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::SolveVariety(a) => cmd_solve(a),
        Command::CheckPsi(a) => cmd_check_psi(a),
        Command::Structure(a) => cmd_structure(a),
    };
    match outcome {
        Ok((text, pass)) => {
            print!("{text}");
            if pass {
                0
            } else {
                1
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}
