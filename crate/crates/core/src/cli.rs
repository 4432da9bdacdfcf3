//! The `cpflow` command line.
//!
//! Exit codes: 0 success, 1 validation failure or verification violation,
//! 2 weight-condition violation, 3 I/O error, 4 flow step failure, 5 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::flow::{run_flow, FlowConfig, FlowError, Termination};
use crate::json;
use crate::laplacian::{assemble, calabi_energy, spd_check, LaplacianAssembly, PackingMetric, SpdReport};
use crate::mesh::{builtin_mesh, check_star_condition, vertex_adjacency, MeshError, StarReport, WeightedTriangulation, BUILTIN_NAMES};
use crate::verify::{
    self, identities_suite, jacobians_suite, lemma52_scan, prop31_bruteforce, spd_suite,
    theorem1_constants, verify_prop24, verify_theorem1, verify_theorem2, JacobianSpec,
    SweepReport, Theorem2Spec, VerifyError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_STAR: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_STEP_FAILURE: i32 = 4;
pub const EXIT_USAGE: i32 = 5;

/// Radii bounds used by `verify --suite theorem1` when `--R` is absent.
pub const THEOREM1_RADII: [f64; 3] = [0.25, 0.5, 1.0];
/// Shifts used by `verify --suite prop31`.
pub const PROP31_SHIFTS: [f64; 4] = [0.0, -0.3, -0.7, -0.99];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
    #[error("weight condition fails at {count} corner(s); first: face {face}, corner {corner}, gamma {gamma}")]
    Star { count: usize, face: usize, corner: usize, gamma: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Invalid(_) => EXIT_VIOLATION,
            CliError::Star { .. } => EXIT_STAR,
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cpflow", version, about = "Hyperbolic circle packings, discrete Laplacians and Calabi flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a mesh and report the per-corner weight condition.
    Check(CheckArgs),
    /// Assemble curvature, B, A and L at a metric.
    Laplacian(LaplacianArgs),
    /// Run the (p-th) Calabi flow.
    Flow(FlowArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Print the explicit bound constants for a radius lower bound.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Built-in mesh name (tetra, genus2_min) or path to a mesh JSON file.
    #[arg(long)]
    pub mesh: String,
    /// Uniform edge weight for a built-in mesh, in radians.
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LaplacianArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Uniform radius, or a path to a JSON array of per-vertex radii.
    #[arg(long, default_value = "1")]
    pub r0: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long, default_value_t = 1e-2, allow_negative_numbers = true)]
    pub dt: f64,
    #[arg(long = "t-max", default_value_t = 1e3, allow_negative_numbers = true)]
    pub t_max: f64,
    #[arg(long = "k-tol", default_value_t = 1e-8, allow_negative_numbers = true)]
    pub k_tol: f64,
    /// Uniform radius, or a path to a JSON array of per-vertex radii.
    #[arg(long, default_value = "1")]
    pub r0: String,
    #[arg(long = "max-halvings", default_value_t = 40)]
    pub max_halvings: u32,
    #[arg(long = "trace-stride", default_value_t = 1)]
    pub trace_stride: usize,
    /// Prefix for `<out>.csv` (trace) and `<out>.json` (full trace with r and K).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Jacobians,
    Spd,
    Theorem1,
    Theorem2,
    Prop24,
    Prop31,
    Lemma52,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Sample count; its meaning and default depend on the suite.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Mesh for the mesh-based suites; defaults to the built-in meshes.
    #[arg(long)]
    pub mesh: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    /// Grid size (prop31) or per-axis grid points (theorem2).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Radius lower bound for theorem1; defaults to each of 0.25, 0.5, 1.0.
    #[arg(long = "R", allow_negative_numbers = true)]
    pub r_min: Option<f64>,
    /// Angle threshold for lemma52.
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// Finite-difference step for jacobians.
    #[arg(long, default_value_t = 1e-5, allow_negative_numbers = true)]
    pub h: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Lower bound on all radii.
    #[arg(long = "R", allow_negative_numbers = true)]
    pub r_min: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, &format!("{text}\n")),
        None => {
            print_stdout(text);
            Ok(())
        }
    }
}

/// Prints a line, ignoring a closed pipe on the reading side.
fn print_stdout(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

pub fn load_mesh(name: &str, phi: Option<f64>) -> Result<WeightedTriangulation, CliError> {
    if BUILTIN_NAMES.contains(&name) {
        return builtin_mesh(name, phi.unwrap_or(0.0)).map_err(|e| CliError::Usage(e.to_string()));
    }
    if phi.is_some() {
        return Err(CliError::Usage("--phi applies to built-in meshes only".into()));
    }
    Ok(WeightedTriangulation::from_json(&read_file(Path::new(name))?)?)
}

fn require_star(report: &StarReport) -> Result<(), CliError> {
    match report.violations.first() {
        None => Ok(()),
        Some(v) => Err(CliError::Star {
            count: report.violations.len(),
            face: v.face,
            corner: v.corner,
            gamma: v.gamma,
        }),
    }
}

/// A number gives a uniform metric; anything else is read as a JSON array of radii.
pub fn parse_r0(spec: &str, n: usize) -> Result<PackingMetric, CliError> {
    if let Ok(r) = spec.parse::<f64>() {
        return PackingMetric::uniform(n, r).map_err(|e| CliError::Usage(format!("--r0: {e}")));
    }
    let text = read_file(Path::new(spec))?;
    let radii: Vec<f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{spec}: expected a JSON array of radii: {e}")))?;
    if radii.len() != n {
        return Err(CliError::Invalid(format!(
            "{spec}: {} radii for a mesh with {n} vertices",
            radii.len()
        )));
    }
    PackingMetric::new(radii).map_err(|e| CliError::Invalid(format!("{spec}: {e}")))
}

#[derive(Serialize)]
struct CheckReport<'a> {
    vertices: usize,
    edges: usize,
    faces: usize,
    euler_characteristic: i64,
    degrees: Vec<usize>,
    max_degree: usize,
    star: &'a StarReport,
}

fn cmd_check(args: &CheckArgs) -> Result<i32, CliError> {
    let mesh = load_mesh(&args.mesh.mesh, args.mesh.phi)?;
    let star = check_star_condition(&mesh);
    let adj = vertex_adjacency(&mesh);
    let report = CheckReport {
        vertices: mesh.vertex_count(),
        edges: mesh.edges().len(),
        faces: mesh.faces().len(),
        euler_characteristic: mesh.euler_characteristic(),
        degrees: adj.degrees,
        max_degree: adj.max_degree,
        star: &star,
    };
    emit(&args.out, &json::to_string_pretty(&report))?;
    require_star(&star)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct LaplacianReport<'a> {
    radii: &'a [f64],
    energy: f64,
    #[serde(flatten)]
    assembly: &'a LaplacianAssembly,
    l: Vec<Vec<f64>>,
    spd: SpdReport,
}

fn cmd_laplacian(args: &LaplacianArgs) -> Result<i32, CliError> {
    let mesh = load_mesh(&args.mesh.mesh, args.mesh.phi)?;
    require_star(&check_star_condition(&mesh))?;
    let r = parse_r0(&args.r0, mesh.vertex_count())?;
    let asm = assemble(&mesh, &r).map_err(|e| CliError::Invalid(e.to_string()))?;
    let n = asm.vertex_count();
    let report = LaplacianReport {
        radii: r.radii(),
        energy: calabi_energy(&asm.k),
        assembly: &asm,
        l: (0..n).map(|i| (0..n).map(|j| asm.l[(i, j)]).collect()).collect(),
        spd: spd_check(&asm),
    };
    emit(&args.out, &json::to_string_pretty(&report))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FlowSummary {
    termination: Termination,
    #[serde(rename = "final_max_abs_K")]
    final_max_abs_k: f64,
    steps: u64,
    wall_time: f64,
    t: f64,
    energy: f64,
    radii: Vec<f64>,
    rejected_steps: u64,
    max_abs_u_velocity: f64,
    velocity_bound: f64,
    velocity_within_bound: bool,
    k_range_violations: u64,
    lower_bound_violations: u64,
    energy_increases: u64,
    failure: Option<String>,
}

fn cmd_flow(args: &FlowArgs) -> Result<i32, CliError> {
    let cfg = FlowConfig {
        p: args.p,
        dt: args.dt,
        t_max: args.t_max,
        k_tol: args.k_tol,
        max_halvings: args.max_halvings,
        trace_stride: args.trace_stride,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mesh = load_mesh(&args.mesh.mesh, args.mesh.phi)?;
    require_star(&check_star_condition(&mesh))?;
    let r0 = parse_r0(&args.r0, mesh.vertex_count())?;
    let trace = run_flow(&mesh, &r0, &cfg).map_err(|e| match e {
        FlowError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::Invalid(other.to_string()),
    })?;
    if let Some(prefix) = &args.out {
        let with_ext = |ext: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        write_file(&with_ext(".csv"), &trace.to_csv())?;
        write_file(&with_ext(".json"), &format!("{}\n", json::to_string(&trace)))?;
    }
    let last = trace.last();
    let summary = FlowSummary {
        termination: trace.termination,
        final_max_abs_k: last.max_abs_k(),
        steps: trace.steps,
        wall_time: trace.wall_time,
        t: last.t,
        energy: last.energy,
        radii: last.r.clone(),
        rejected_steps: trace.rejected_steps,
        max_abs_u_velocity: trace.max_abs_u_velocity,
        velocity_bound: trace.velocity_bound,
        velocity_within_bound: trace.velocity_within_bound,
        k_range_violations: trace.k_range_violations,
        lower_bound_violations: trace.lower_bound_violations,
        energy_increases: trace.energy_increases,
        failure: trace.failure.as_ref().map(|f| f.reason.clone()),
    };
    print_stdout(&json::to_string_pretty(&summary));
    Ok(match trace.termination {
        Termination::StepFailure => EXIT_STEP_FAILURE,
        _ => EXIT_OK,
    })
}

fn verify_error(e: VerifyError) -> CliError {
    match e {
        VerifyError::Precondition(m) => CliError::Usage(m),
        other => CliError::Invalid(other.to_string()),
    }
}

/// The mesh given by `--mesh`, or every built-in mesh.
fn suite_meshes(args: &VerifyArgs) -> Result<Vec<(String, WeightedTriangulation)>, CliError> {
    let list = match &args.mesh {
        Some(name) => vec![(name.clone(), load_mesh(name, args.phi)?)],
        None => BUILTIN_NAMES
            .iter()
            .map(|n| Ok((n.to_string(), load_mesh(n, args.phi)?)))
            .collect::<Result<_, CliError>>()?,
    };
    for (_, m) in &list {
        require_star(&check_star_condition(m))?;
    }
    Ok(list)
}

fn sweep_exit(rep: &SweepReport) -> i32 {
    if rep.passed() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    let seed = args.seed;
    let report = match args.suite {
        Suite::Identities => identities_suite(args.samples.unwrap_or(10_000), seed),
        Suite::Jacobians => {
            let spec = JacobianSpec {
                triangles: args.samples.unwrap_or(1000),
                h: args.h,
                ..JacobianSpec::default()
            };
            if !(verify::fd::MIN_STEP..=verify::fd::MAX_STEP).contains(&spec.h) {
                return Err(CliError::Usage(format!("--h {} outside [1e-7, 1e-3]", spec.h)));
            }
            jacobians_suite(&spec, seed)
        }
        Suite::Spd => spd_suite(args.samples.unwrap_or(100), seed),
        Suite::Theorem1 => {
            let meshes = match &args.mesh {
                Some(_) => suite_meshes(args)?,
                None => vec![("tetra".to_string(), load_mesh("tetra", args.phi)?)],
            };
            let radii = match args.r_min {
                Some(r) if r > 0.0 && r.is_finite() => vec![r],
                Some(r) => return Err(CliError::Usage(format!("--R {r} must be positive"))),
                None => THEOREM1_RADII.to_vec(),
            };
            let mut parts = Vec::new();
            for (name, mesh) in &meshes {
                for &r in &radii {
                    let rep = verify_theorem1(mesh, r, args.samples.unwrap_or(1000), seed)
                        .map_err(verify_error)?;
                    parts.push((format!("{name}.R{r}"), rep));
                }
            }
            SweepReport::combine("theorem1", seed, parts)
        }
        Suite::Theorem2 => {
            let mut spec = Theorem2Spec::default();
            if let Some(g) = args.grid {
                spec.grid_n = g;
            }
            if let Some(name) = &args.mesh {
                spec.degree = vertex_adjacency(&load_mesh(name, args.phi)?).max_degree;
            }
            let count = args.samples.unwrap_or(20) as usize;
            let triples = verify::bounds::sample_weight_triples(count, seed);
            verify_theorem2(&triples, &spec, seed).map_err(verify_error)?
        }
        Suite::Prop24 => {
            let mut parts = Vec::new();
            for (name, mesh) in suite_meshes(args)? {
                let rep = verify_prop24(&mesh, args.samples.unwrap_or(1000), seed).map_err(verify_error)?;
                parts.push((name, rep));
            }
            SweepReport::combine("prop24", seed, parts)
        }
        Suite::Prop31 => {
            let grid = args.grid.unwrap_or(50);
            let results = PROP31_SHIFTS
                .iter()
                .map(|&c| prop31_bruteforce(c, grid))
                .collect::<Result<Vec<_>, _>>()
                .map_err(verify_error)?;
            emit(&args.out, &json::to_string_pretty(&results))?;
            return Ok(if results.iter().all(|r| r.holds) {
                EXIT_OK
            } else {
                EXIT_VIOLATION
            });
        }
        Suite::Lemma52 => {
            let eps = args.epsilon;
            let count = args.samples.unwrap_or(5) as usize;
            let results = verify::bounds::sample_weight_triples(count, seed)
                .into_iter()
                .map(|w| lemma52_scan(w, eps, (0.1, 10.0)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(verify_error)?;
            emit(&args.out, &json::to_string_pretty(&results))?;
            return Ok(if results.iter().all(|r| r.threshold.is_some()) {
                EXIT_OK
            } else {
                EXIT_VIOLATION
            });
        }
    };
    emit(&args.out, &json::to_string_pretty(&report))?;
    Ok(sweep_exit(&report))
}

fn cmd_bounds(args: &BoundsArgs) -> Result<i32, CliError> {
    if !(args.r_min > 0.0 && args.r_min.is_finite()) {
        return Err(CliError::Usage(format!("--R {} must be positive", args.r_min)));
    }
    let mesh = load_mesh(&args.mesh.mesh, args.mesh.phi)?;
    let k = theorem1_constants(&mesh, args.r_min).map_err(verify_error)?;
    emit(&args.out, &json::to_string_pretty(&k))?;
    Ok(EXIT_OK)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CPFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CPFLOW_THREADS={value} is not a positive integer")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Laplacian(a) => cmd_laplacian(a),
        Command::Flow(a) => cmd_flow(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bounds(a) => cmd_bounds(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
