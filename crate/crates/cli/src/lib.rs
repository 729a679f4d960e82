//! The `gmmcc` command line.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 usage, 3 invalid
//! input, 4 certification or audit failure, 5 infeasible at the requested
//! grid resolution.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmmcc_core::exec::Exec;
use gmmcc_core::factory::{generate_instance_with, GenConfig, WeightMode};
use gmmcc_core::gmm::GmmInstance;
use gmmcc_core::json::{instance_from_json, instance_to_json, parse_solution};
use gmmcc_core::model::{
    build_pwl_model, build_saa, default_sample_count, default_tau, lp, BuildOptions, MiqpModel, ModelBounds,
    DEFAULT_BIG_M, DEFAULT_Z_BOUND,
};
use gmmcc_core::pwl::{breakpoints, build_pwl, certify_error_with, count_scaling_probe, ApproxKind, DEFAULT_ENDPOINT};
use gmmcc_core::verify::{
    convexity_witness, desk_solve_with, probability_grid, sandwich_audit_with, verify, BoxGrid, DeskOutcome,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

mod output;

pub use output::{sha256_hex, write_atomic, RunManifest};
use output::Run;

pub const SEED_ENV: &str = "GMMCC_SEED";

#[derive(Debug, Parser)]
#[command(name = "gmmcc", version, about = "Piecewise-linear MIQP models for Gaussian-mixture chance constraints")]
pub struct Cli {
    /// Run every batch kernel on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Where to write the run manifest (default: next to the first output file,
    /// or standard error when everything goes to standard output).
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic instance.
    Generate(GenerateArgs),
    /// Compute and certify breakpoint arrays.
    Breakpoints(BreakpointArgs),
    /// Build a PWL-O, PWL-I or SAA model and export it as LP and IR JSON.
    Build(BuildArgs),
    /// Check a candidate solution against the exact chance constraint.
    Verify(VerifyArgs),
    /// Grid-search ground truth for instances with n <= 3.
    DeskSolve(DeskArgs),
    /// Sandwich audit of the inner/exact/outer mixture probabilities.
    Audit(AuditArgs),
    /// Breakpoint-count scaling sweep as CSV.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightArg {
    Equal,
    Unequal,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub theta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub varrho: f64,
    #[arg(long, default_value_t = 2.0)]
    pub varsigma: f64,
    #[arg(long, value_enum, default_value_t = WeightArg::Equal)]
    pub weights: WeightArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20.0)]
    pub box_half_width: f64,
    /// Default: n/10 for n <= 500, n/20 above.
    #[arg(long)]
    pub ineq_rows: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub b_samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub b_multiplier: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Outer,
    Inner,
    Both,
}

impl KindArg {
    fn kinds(self) -> Vec<ApproxKind> {
        match self {
            KindArg::Outer => vec![ApproxKind::Outer],
            KindArg::Inner => vec![ApproxKind::Inner],
            KindArg::Both => vec![ApproxKind::Outer, ApproxKind::Inner],
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BreakpointArgs {
    /// τ defaults to (1 - θ)/10.
    #[arg(long, required_unless_present = "tau")]
    pub theta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = KindArg::Both)]
    pub kind: KindArg,
    #[arg(long, default_value_t = DEFAULT_ENDPOINT)]
    pub endpoint: f64,
    /// Grid step of the certification scan.
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ModelKindArg {
    #[value(name = "pwl-o")]
    #[serde(rename = "pwl-o")]
    PwlO,
    #[value(name = "pwl-i")]
    #[serde(rename = "pwl-i")]
    PwlI,
    #[value(name = "saa")]
    #[serde(rename = "saa")]
    Saa,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum)]
    pub kind: ModelKindArg,
    /// Overrides the instance's θ.
    #[arg(long)]
    pub theta: Option<f64>,
    /// PWL accuracy; default (1 - θ)/10.
    #[arg(long)]
    pub tau: Option<f64>,
    /// SAA scenario count; default 100/(1 - θ), or 20/(1 - θ) from θ = 0.999.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BIG_M)]
    pub big_m: f64,
    /// Seed for SAA scenario sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sos2_as_binary: bool,
    #[arg(long)]
    pub split_quadratic: bool,
    /// Bounds ±z on the margin variables.
    #[arg(long, default_value_t = DEFAULT_Z_BOUND)]
    pub z_bound: f64,
    #[arg(long, default_value_t = DEFAULT_ENDPOINT)]
    pub endpoint: f64,
    /// Receives model.lp, model.ir.json and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Solution JSON or `name value` lines.
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub tau_hat: f64,
    /// Exit with status 4 when the solution is not tau-hat-feasible.
    #[arg(long)]
    pub require_feasible: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DeskArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Grid cells per axis.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    #[arg(long, default_value_t = 4)]
    pub refine: usize,
    /// Also scan the grid for a convexity-violation triple.
    #[arg(long)]
    pub witness: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Default (1 - θ)/10.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Outer)]
    pub kind: KindArg,
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4,1e-5,1e-6")]
    pub taus: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed run: exit status plus the error to report.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_CERTIFICATION: u8 = 4;
pub const EXIT_INFEASIBLE: u8 = 5;

fn exit_code(e: &gmmcc_core::Error) -> u8 {
    use gmmcc_core::Error as E;
    match e {
        E::Domain(_) | E::Precondition(_) | E::Usage(_) | E::UndefinedMetric(_) | E::UndefinedGradient(_) => EXIT_USAGE,
        E::Validation(_) | E::Dimension { .. } | E::Config(_) | E::Parse { .. } | E::Json(_) | E::Ir(_) => {
            EXIT_VALIDATION
        }
        E::Certification { .. } | E::Audit { .. } => EXIT_CERTIFICATION,
        E::Invariant(_) | E::Io(_) => 1,
    }
}

impl From<gmmcc_core::Error> for Failure {
    fn from(e: gmmcc_core::Error) -> Self {
        Self::new(exit_code(&e), e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<gmmcc_core::Error>() {
            Some(inner) => Self { code: exit_code(inner), error: e },
            None => Self::new(1, e),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::new(1, e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Resolves the seed: the environment variable wins over the flag.
pub fn resolve_seed(flag: Option<u64>) -> CliResult<(u64, &'static str)> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, "env"))
            .map_err(|_| Failure::new(EXIT_USAGE, anyhow::anyhow!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag.map_or((0, "default"), |s| (s, "flag"))),
    }
}

fn config<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    Ok(gmmcc_core::json::to_string_pretty(v)?.into_bytes())
}

fn load_instance(run: &mut Run, path: &Path) -> CliResult<GmmInstance> {
    let text = run.read_input(path)?;
    Ok(instance_from_json(&text)?.validated()?)
}

pub fn run(cli: Cli) -> CliResult {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let exec_name = if exec.is_parallel() { "parallel" } else { "sequential" };
    let manifest = cli.manifest.clone();
    let (run, status) = match cli.command {
        Command::Generate(a) => generate(a, exec)?,
        Command::Breakpoints(a) => cmd_breakpoints(a, exec)?,
        Command::Build(a) => build(a, exec)?,
        Command::Verify(a) => cmd_verify(a)?,
        Command::DeskSolve(a) => desk(a, exec)?,
        Command::Audit(a) => audit(a, exec)?,
        Command::Probe(a) => probe(a)?,
    };
    run.finish(manifest.as_deref(), exec_name)?;
    status
}

/// What a command produced, plus the status to report once it is written.
type Outcome = (Run, CliResult);

fn generate(a: GenerateArgs, exec: Exec) -> CliResult<Outcome> {
    let mut run = Run::new("generate", config(&a));
    let seed = resolve_seed(a.seed)?;
    run.seed = Some(seed);
    let cfg = GenConfig {
        n: a.n,
        k: a.k,
        varrho: a.varrho,
        varsigma: a.varsigma,
        theta: a.theta,
        weight_mode: match a.weights {
            WeightArg::Equal => WeightMode::Equal,
            WeightArg::Unequal => WeightMode::Unequal,
        },
        seed: seed.0,
        box_half_width: a.box_half_width,
        ineq_rows: a.ineq_rows,
        b_samples: a.b_samples,
        b_stddev_multiplier: a.b_multiplier,
    };
    let inst = generate_instance_with(&cfg, exec)?;
    run.emit(a.out, instance_to_json(&inst)?);
    Ok((run, Ok(())))
}

#[derive(Serialize)]
struct CertifiedArray {
    #[serde(flatten)]
    breakpoints: gmmcc_core::pwl::BreakpointArray,
    count: usize,
    max_error: f64,
}

#[derive(Serialize)]
struct BreakpointReport {
    tau: f64,
    endpoints: [f64; 2],
    arrays: Vec<CertifiedArray>,
}

fn tau_from(theta: Option<f64>, tau: Option<f64>) -> CliResult<f64> {
    match (tau, theta) {
        (Some(t), _) => Ok(t),
        (None, Some(th)) if th > 0.0 && th < 1.0 => Ok(default_tau(th)),
        (None, Some(th)) => Err(Failure::new(EXIT_USAGE, anyhow::anyhow!("theta must lie in (0, 1), got {th}"))),
        (None, None) => Err(Failure::new(EXIT_USAGE, anyhow::anyhow!("need --theta or --tau"))),
    }
}

fn cmd_breakpoints(a: BreakpointArgs, exec: Exec) -> CliResult<Outcome> {
    let run = Run::new("breakpoints", config(&a));
    let tau = tau_from(a.theta, a.tau)?;
    let mut arrays = Vec::new();
    for kind in a.kind.kinds() {
        let bp = breakpoints(kind, tau, -a.endpoint, a.endpoint)?;
        let pwl = build_pwl(bp.clone());
        let max_error = certify_error_with(&pwl, a.grid_step, exec)?;
        eprintln!(
            "{kind}: tau = {tau}, endpoints = ±{}, {} points (L = {}, R = {}), max error {max_error:e}",
            a.endpoint,
            bp.len(),
            bp.left_count(),
            bp.right_count()
        );
        arrays.push(CertifiedArray { count: bp.len(), breakpoints: bp, max_error });
    }
    let report = BreakpointReport { tau, endpoints: [-a.endpoint, a.endpoint], arrays };
    let mut run = run;
    run.emit(a.out, json_bytes(&report)?);
    Ok((run, Ok(())))
}

fn summarize(m: &MiqpModel) -> String {
    format!(
        "{} variables ({} binary), {} linear rows, {} quadratic rows, {} SOS2 sets",
        m.num_vars(),
        m.num_binaries(),
        m.num_linear(),
        m.num_quadratic(),
        m.num_sos2()
    )
}

fn build(a: BuildArgs, exec: Exec) -> CliResult<Outcome> {
    let mut run = Run::new("build", config(&a));
    let mut inst = load_instance(&mut run, &a.instance)?;
    if let Some(theta) = a.theta {
        inst.theta = theta;
        inst = inst.validated()?;
    }
    let model = match a.kind {
        ModelKindArg::Saa => {
            let seed = resolve_seed(a.seed)?;
            run.seed = Some(seed);
            let s = a.samples.unwrap_or_else(|| default_sample_count(inst.theta));
            build_saa(&inst, s, a.big_m, &mut ChaCha8Rng::seed_from_u64(seed.0))?
        }
        ModelKindArg::PwlO | ModelKindArg::PwlI => {
            let kind = if matches!(a.kind, ModelKindArg::PwlO) { ApproxKind::Outer } else { ApproxKind::Inner };
            let opts = BuildOptions {
                bounds: ModelBounds { z_lo: -a.z_bound, z_hi: a.z_bound },
                endpoint: a.endpoint,
                sos2_as_binary: a.sos2_as_binary,
                split_quadratic_equality: a.split_quadratic,
            };
            build_pwl_model(&inst, kind, a.tau.unwrap_or_else(|| default_tau(inst.theta)), &opts)?
        }
    };
    eprintln!("{}", summarize(&model));
    run.emit(Some(a.out_dir.join("model.lp")), lp::export_with(&model, exec)?);
    run.emit(Some(a.out_dir.join("model.ir.json")), model.to_json()?);
    Ok((run, Ok(())))
}

fn cmd_verify(a: VerifyArgs) -> CliResult<Outcome> {
    let mut run = Run::new("verify", config(&a));
    let inst = load_instance(&mut run, &a.instance)?;
    let text = run.read_input(&a.solution)?;
    let x = parse_solution(&text, inst.n)?;
    let report = verify(&inst, x.view(), a.tau_hat)?;
    let status = if a.require_feasible && !report.tau_feasible {
        Err(Failure::new(EXIT_CERTIFICATION, anyhow::anyhow!("solution is not tau-hat-feasible: {:?}", report.notes)))
    } else {
        Ok(())
    };
    run.emit(a.out, json_bytes(&report)?);
    Ok((run, status))
}

#[derive(Serialize)]
struct DeskReport {
    #[serde(flatten)]
    outcome: DeskOutcome,
    resolution: usize,
    refine_rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    convexity_witness: Option<Option<gmmcc_core::verify::ConvexityWitness>>,
}

fn desk(a: DeskArgs, exec: Exec) -> CliResult<Outcome> {
    let mut run = Run::new("desk-solve", config(&a));
    let inst = load_instance(&mut run, &a.instance)?;
    let outcome = desk_solve_with(&inst, a.resolution, a.refine, exec)?;
    let convexity_witness = if a.witness {
        let grid = BoxGrid::new(&inst, a.resolution);
        Some(convexity_witness(&grid, &probability_grid(&inst, &grid, exec)?))
    } else {
        None
    };
    let status = match outcome {
        DeskOutcome::InfeasibleAtResolution { resolution } => Err(Failure::new(
            EXIT_INFEASIBLE,
            anyhow::anyhow!("no feasible grid point at resolution {resolution}"),
        )),
        DeskOutcome::Solved(_) => Ok(()),
    };
    let report = DeskReport { outcome, resolution: a.resolution, refine_rounds: a.refine, convexity_witness };
    run.emit(a.out, json_bytes(&report)?);
    Ok((run, status))
}

fn audit(a: AuditArgs, exec: Exec) -> CliResult<Outcome> {
    let mut run = Run::new("audit", config(&a));
    let inst = load_instance(&mut run, &a.instance)?;
    let seed = resolve_seed(a.seed)?;
    run.seed = Some(seed);
    let tau = a.tau.unwrap_or_else(|| default_tau(inst.theta));
    let report = sandwich_audit_with(&inst, tau, a.samples, &mut ChaCha8Rng::seed_from_u64(seed.0), exec)?;
    run.emit(a.out, json_bytes(&report)?);
    Ok((run, Ok(())))
}

fn probe(a: ProbeArgs) -> CliResult<Outcome> {
    let mut run = Run::new("probe", config(&a));
    let kinds = a.kind.kinds();
    let mut csv = String::from(if kinds.len() > 1 { "kind,tau,count,bound_ratio\n" } else { "tau,count,bound_ratio\n" });
    for kind in kinds {
        for p in count_scaling_probe(&a.taus, kind)? {
            if a.kind == KindArg::Both {
                csv.push_str(&format!("{kind},"));
            }
            csv.push_str(&format!("{},{},{}\n", p.tau, p.count, gmmcc_core::numfmt::g17(p.bound_ratio)));
        }
    }
    run.emit(a.out, csv);
    Ok((run, Ok(())))
}
