//! The `idflow` command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::admissibility::{
    check_necessary, constant_curvature_condition, ConstantCurvatureVerdict, HalfSpaceReport, NecessaryCheck,
    SubsetMode, Verdict, DEFAULT_SUBSET_BUDGET,
};
use crate::curvature::{smallest_nonzero_eigenvalue, PackingMetric};
use crate::error::Error;
use crate::flow::{estimate_rate, newton_refine, run_flow, FlowStatus, FlowTrajectory, Method, RateEstimate};
use crate::geometry::{angle_upper_bounds, in_angle_range, invert_angle_map, TriangleConfig};
use crate::problem::{one_based, LoadError, Problem};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "idflow", version, about = "Extended Ricci flow for inversive distance circle packings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a problem file and check the triangulation and weights.
    Validate {
        problem: PathBuf,
        /// Print a JSON report instead of a summary line.
        #[arg(long)]
        json: bool,
    },
    /// Run the flow towards the file's target (constant curvature by default).
    Flow(FlowArgs),
    /// Like `flow`, but the file must give an explicit target.
    Prescribe(FlowArgs),
    /// Check a target against the subset inequalities.
    Admissible(AdmissibleArgs),
    /// Single-triangle angle range and inversion.
    Triangle(TriangleArgs),
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Residual tolerance (sup-norm of K̃ − K̄).
    #[arg(long)]
    pub tol: Option<f64>,
    /// explicit-euler, rk4 or newton-hybrid.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub normalize: bool,
    /// Largest N for exhaustive subset checks of the result.
    #[arg(long)]
    pub max_subsets: Option<usize>,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Directory for report.json and trajectory.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write residual.svg.
    #[arg(long)]
    pub svg: bool,
    /// Seed for sampled subset checks when N exceeds --max-subsets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start from the final radii of an earlier report.json.
    #[arg(long)]
    pub radii_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdmissibleArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub max_subsets: Option<usize>,
    /// Check random subsets instead of refusing when N is above the budget.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check K̃ at the file's radii instead of the target.
    #[arg(long)]
    pub from_radii: bool,
    /// Number of lowest-margin subsets to print.
    #[arg(long, default_value_t = 5)]
    pub show: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TriangleArgs {
    /// Inversive distances opposite each vertex: I_jk,I_ik,I_ij.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub inversive: Vec<f64>,
    /// Angles to realize, summing to π.
    #[arg(long, value_delimiter = ',')]
    pub target: Option<Vec<f64>>,
    /// Limits of the angles as each circle shrinks to a point.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long)]
    pub json: bool,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli.command))
}

pub fn run(command: Command) -> u8 {
    let outcome = match command {
        Command::Validate { problem, json } => validate(&problem, json),
        Command::Flow(args) => flow(&args, false),
        Command::Prescribe(args) => flow(&args, true),
        Command::Admissible(args) => admissible(&args),
        Command::Triangle(args) => triangle(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

/// An input problem; always exit code 2.
#[derive(Debug)]
struct CliError(String);

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError(one_based(&e).to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(e.to_string())
    }
}

type CliResult = Result<u8, CliError>;

#[derive(Debug, Serialize)]
struct ValidationReport {
    valid: bool,
    error: Option<String>,
    vertex_count: Option<usize>,
    edge_count: Option<usize>,
    face_count: Option<usize>,
    euler_characteristic: Option<i64>,
    initial_in_omega: Option<bool>,
    explicit_target: Option<bool>,
}

fn validate(path: &Path, json: bool) -> CliResult {
    let report = match Problem::load(path) {
        Ok(p) => {
            let s = p.packing.surface();
            ValidationReport {
                valid: true,
                error: None,
                vertex_count: Some(s.vertex_count()),
                edge_count: Some(s.edges().len()),
                face_count: Some(s.faces().len()),
                euler_characteristic: Some(s.euler_characteristic()),
                initial_in_omega: Some(p.packing.in_omega(&p.initial)),
                explicit_target: Some(p.explicit_target),
            }
        }
        // unreadable or unparsable input is not a verdict on the problem
        Err(e @ (LoadError::Io(_) | LoadError::Syntax(_))) => return Err(e.into()),
        Err(e) => ValidationReport {
            valid: false,
            error: Some(e.to_string()),
            vertex_count: None,
            edge_count: None,
            face_count: None,
            euler_characteristic: None,
            initial_in_omega: None,
            explicit_target: None,
        },
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else if report.valid {
        println!(
            "ok: {} vertices, {} edges, {} faces, chi = {}",
            report.vertex_count.unwrap_or(0),
            report.edge_count.unwrap_or(0),
            report.face_count.unwrap_or(0),
            report.euler_characteristic.unwrap_or(0)
        );
    } else {
        println!("invalid: {}", report.error.as_deref().unwrap_or(""));
    }
    Ok(if report.valid { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub status: FlowStatus,
    pub method: String,
    pub t_final: f64,
    pub steps: usize,
    pub step_halvings: usize,
    pub newton_iterations: usize,
    /// Normalized so the product is 1.
    pub radii: Vec<f64>,
    pub curvature: Vec<f64>,
    pub target: Vec<f64>,
    pub residual: f64,
    pub gauss_bonnet_defect: f64,
    pub in_omega: bool,
    pub rate: Option<RateEstimate>,
    pub rate_error: Option<String>,
    /// Smallest nonzero eigenvalue of `∂K/∂u` at the final metric.
    pub spectral_gap: Option<f64>,
    pub admissibility: Option<AdmissibilitySummary>,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilitySummary {
    pub verdict: String,
    pub exhaustive: bool,
    pub subsets_checked: usize,
    pub min_margin: f64,
    /// One-based.
    pub worst_subset: Vec<usize>,
}

impl AdmissibilitySummary {
    fn from_check(check: &NecessaryCheck) -> Self {
        Self {
            verdict: verdict_name(check.verdict).into(),
            exhaustive: check.exhaustive,
            subsets_checked: check.subsets_checked,
            min_margin: check.min_margin,
            worst_subset: check.worst.first().map(|r| one_based_subset(r)).unwrap_or_default(),
        }
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Interior => "interior",
        Verdict::ClosureOnly => "closure-only",
        Verdict::Violated => "violated",
    }
}

fn one_based_subset(r: &HalfSpaceReport) -> Vec<usize> {
    r.subset.iter().map(|v| v + 1).collect()
}

fn flow(args: &FlowArgs, prescribe: bool) -> CliResult {
    let problem = Problem::load(&args.problem)?;
    if prescribe && !problem.explicit_target {
        return Err(CliError("prescribe needs an explicit target list in the problem file".into()));
    }
    let mut config = problem.flow_config()?;
    if let Some(v) = args.dt {
        config.dt = v;
    }
    if let Some(v) = args.t_max {
        config.t_max = v;
    }
    if let Some(v) = args.tol {
        config.residual_tol = v;
    }
    if let Some(m) = &args.method {
        config.method = m.parse()?;
    }
    if args.normalize {
        config.normalize = true;
    }
    if let Some(v) = args.record_every {
        config.record_every = v;
    }
    config.validate()?;
    let initial = match &args.radii_from {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let earlier: RunReport = serde_json::from_str(&text)
                .map_err(|e| CliError(format!("cannot read radii from {}: {e}", path.display())))?;
            PackingMetric::from_radii(earlier.radii)?
        }
        None => problem.initial.clone(),
    };
    let budget = args
        .max_subsets
        .or(problem.solver.max_subsets)
        .unwrap_or(DEFAULT_SUBSET_BUDGET);

    let start = Instant::now();
    let packing = &problem.packing;
    let mut traj = run_flow(packing, &initial, &config)?;
    if config.method == Method::NewtonHybrid && traj.status != FlowStatus::Converged {
        polish(&problem, &mut traj, config.residual_tol, config.dt);
    }
    let rate = estimate_rate(&traj);
    let last = traj.last().clone();
    let metric = traj.final_metric().normalized();
    let spectral_gap = packing
        .curvature_jacobian(&metric)
        .ok()
        .and_then(|l| smallest_nonzero_eigenvalue(&l));
    let admissibility = {
        let mode = if packing.vertex_count() <= budget {
            SubsetMode::Exhaustive { budget }
        } else {
            SubsetMode::Sampled {
                count: 4096,
                seed: args.seed,
            }
        };
        check_necessary(packing, &last.curvature, mode)
            .ok()
            .map(|c| AdmissibilitySummary::from_check(&c))
    };
    let report = RunReport {
        status: traj.status,
        method: config.method.to_string(),
        t_final: last.t,
        steps: traj.steps,
        step_halvings: traj.halvings,
        newton_iterations: traj.newton_iterations,
        radii: metric.radii().to_vec(),
        curvature: last.curvature.clone(),
        target: config.target.values().to_vec(),
        residual: last.residual,
        gauss_bonnet_defect: packing.gauss_bonnet_defect(&last.curvature),
        in_omega: last.in_omega,
        rate: rate.as_ref().ok().copied(),
        rate_error: rate.as_ref().err().map(|e| e.to_string()),
        spectral_gap,
        admissibility,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    write_csv(&args.out.join("trajectory.csv"), &traj)?;
    if args.svg {
        std::fs::write(args.out.join("residual.svg"), residual_svg(&traj))?;
    }
    println!(
        "{:?}: t = {:.6}, residual = {:.3e}, steps = {}, newton = {}",
        report.status, report.t_final, report.residual, report.steps, report.newton_iterations
    );
    if let Some(r) = &report.rate {
        println!("rate: lambda = {:.6}, R^2 = {:.6}", r.lambda, r.r_squared);
    }
    Ok(if report.status == FlowStatus::Converged {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

/// Last-chance Newton from the end of an unconverged hybrid run.
fn polish(problem: &Problem, traj: &mut FlowTrajectory, tol: f64, dt: f64) {
    let last = traj.last().clone();
    if !last.in_omega {
        return;
    }
    if let Ok(out) = newton_refine(&problem.packing, &last.u, &problem.target, 50) {
        if out.residual < last.residual {
            let curvature = problem.packing.curvature_at(&out.u);
            let potential = last.potential
                + crate::potential::RicciPotential::new(&problem.packing, problem.target.clone())
                    .segment(&last.u, &out.u)
                    .unwrap_or(0.0);
            traj.newton_iterations += out.iterations;
            traj.samples.push(crate::flow::FlowSample {
                t: last.t + dt,
                in_omega: problem.packing.in_omega_at(&out.u),
                u: out.u,
                curvature,
                residual: out.residual,
                potential,
            });
            if out.residual <= tol {
                traj.status = FlowStatus::Converged;
            }
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, traj: &FlowTrajectory) -> std::io::Result<()> {
    let n = traj.samples.first().map_or(0, |s| s.u.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "residual".into(), "in_omega".into(), "potential".into()];
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.extend((1..=n).map(|i| format!("K_{i}")));
    w.write_record(&header)?;
    for s in &traj.samples {
        let mut row = vec![num(s.t), num(s.residual), u8::from(s.in_omega).to_string(), num(s.potential)];
        row.extend(s.u.iter().map(|&x| num(x)));
        row.extend(s.curvature.iter().map(|&x| num(x)));
        w.write_record(&row)?;
    }
    w.flush()
}

/// `log10(residual)` against `t` as a bare SVG polyline.
pub fn residual_svg(traj: &FlowTrajectory) -> String {
    let (width, height, pad) = (640.0, 400.0, 40.0);
    let points: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.residual > 0.0)
        .map(|s| (s.t, s.residual.log10()))
        .collect();
    let t_max = points.iter().map(|p| p.0).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (lo, hi) = if lo < hi { (lo.floor(), hi.ceil()) } else { (lo - 1.0, lo + 1.0) };
    let x = |t: f64| pad + (width - 2.0 * pad) * t / t_max;
    let y = |v: f64| pad + (height - 2.0 * pad) * (hi - v) / (hi - lo);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        height - pad,
        width - pad
    );
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="{}" font-size="12">log10 residual [{lo}, {hi}] vs t [0, {t_max:.3}]</text>"#,
        pad - 10.0
    );
    let line: Vec<String> = points.iter().map(|&(t, v)| format!("{:.3},{:.3}", x(t), y(v))).collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        line.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Serialize)]
struct AdmissibleReport {
    checked: &'static str,
    x: Vec<f64>,
    verdict: String,
    necessary_only: bool,
    exhaustive: bool,
    subsets_checked: usize,
    min_margin: f64,
    worst: Vec<SubsetLine>,
    violations: Vec<SubsetLine>,
}

#[derive(Debug, Serialize)]
struct SubsetLine {
    subset: Vec<usize>,
    lhs: f64,
    rhs: f64,
    margin: f64,
}

impl From<&HalfSpaceReport> for SubsetLine {
    fn from(r: &HalfSpaceReport) -> Self {
        Self {
            subset: one_based_subset(r),
            lhs: r.lhs,
            rhs: r.rhs,
            margin: r.margin,
        }
    }
}

fn admissible(args: &AdmissibleArgs) -> CliResult {
    let problem = Problem::load(&args.problem)?;
    let packing = &problem.packing;
    let n = packing.vertex_count();
    let budget = args
        .max_subsets
        .or(problem.solver.max_subsets)
        .unwrap_or(DEFAULT_SUBSET_BUDGET);
    let mode = match args.samples {
        Some(count) if n > budget => SubsetMode::Sampled { count, seed: args.seed },
        _ => SubsetMode::Exhaustive { budget },
    };

    let report = if !args.from_radii && !problem.explicit_target {
        let SubsetMode::Exhaustive { budget } = mode else {
            return Err(CliError("the constant-curvature condition needs exhaustive enumeration".into()));
        };
        let check = constant_curvature_condition(packing, budget)?;
        let violations: Vec<SubsetLine> = match &check.verdict {
            ConstantCurvatureVerdict::NecessaryConditionsHold => Vec::new(),
            ConstantCurvatureVerdict::ViolatedBy(v) => v.iter().map(SubsetLine::from).collect(),
        };
        AdmissibleReport {
            checked: "constant",
            x: vec![packing.average_curvature(); n],
            verdict: if violations.is_empty() { "holds" } else { "violated" }.into(),
            necessary_only: true,
            exhaustive: true,
            subsets_checked: check.subsets_checked,
            min_margin: check.min_margin,
            worst: check.worst.iter().take(args.show).map(SubsetLine::from).collect(),
            violations,
        }
    } else {
        let (checked, x) = if args.from_radii {
            ("radii", packing.curvature_extended(&problem.initial)?)
        } else {
            ("target", problem.target.values().to_vec())
        };
        let check = check_necessary(packing, &x, mode)?;
        AdmissibleReport {
            checked,
            x,
            verdict: verdict_name(check.verdict).into(),
            necessary_only: true,
            exhaustive: check.exhaustive,
            subsets_checked: check.subsets_checked,
            min_margin: check.min_margin,
            worst: check.worst.iter().take(args.show).map(SubsetLine::from).collect(),
            violations: check.violations.iter().map(SubsetLine::from).collect(),
        }
    };

    println!(
        "{} ({} subsets{}, necessary conditions only): min margin {:.6e}",
        report.verdict,
        report.subsets_checked,
        if report.exhaustive { "" } else { ", sampled" },
        report.min_margin
    );
    for line in &report.worst {
        println!("  A = {:?}  margin {:.6e}", line.subset, line.margin);
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("admissibility.json"),
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    Ok(if report.verdict == "violated" { EXIT_FAILED } else { EXIT_OK })
}

#[derive(Debug, Serialize)]
struct TriangleReport {
    inversive: [f64; 3],
    upper_bounds: [f64; 3],
    target: Option<[f64; 3]>,
    target_in_range: Option<bool>,
    radii: Option<[f64; 3]>,
    angles: Option<[f64; 3]>,
    round_trip_error: Option<f64>,
    shrink_limits: Option<Vec<ShrinkLimit>>,
}

#[derive(Debug, Serialize)]
struct ShrinkLimit {
    vertex: usize,
    factor: f64,
    angles: [f64; 3],
}

fn triangle(args: &TriangleArgs) -> CliResult {
    let inv: [f64; 3] = args
        .inversive
        .as_slice()
        .try_into()
        .map_err(|_| CliError("--inversive takes three values".into()))?;
    if let Some(&bad) = inv.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(CliError(format!("inversive distances must be finite and >= 0, got {bad}")));
    }
    let bounds = angle_upper_bounds(inv);
    let mut report = TriangleReport {
        inversive: inv,
        upper_bounds: bounds,
        target: None,
        target_in_range: None,
        radii: None,
        angles: None,
        round_trip_error: None,
        shrink_limits: None,
    };
    let mut code = EXIT_OK;
    if let Some(t) = &args.target {
        let t: [f64; 3] = t
            .as_slice()
            .try_into()
            .map_err(|_| CliError("--target takes three values".into()))?;
        report.target = Some(t);
        report.target_in_range = Some(in_angle_range(t, inv));
        match invert_angle_map(t, inv) {
            Ok(cfg) => {
                let angles = cfg.angles();
                report.round_trip_error = Some((0..3).map(|i| (angles[i] - t[i]).abs()).fold(0.0, f64::max));
                report.radii = Some(cfg.radii);
                report.angles = Some(angles);
            }
            Err(Error::TargetOutsideZ) => code = EXIT_FAILED,
            Err(e) => return Err(e.into()),
        }
    }
    if args.sweep {
        let mut limits = Vec::new();
        for v in 0..3 {
            for k in [2, 4, 8] {
                let factor = 10f64.powi(-k);
                let mut radii = [1.0; 3];
                radii[v] = factor;
                let angles = TriangleConfig::new(radii, inv)?.angles();
                limits.push(ShrinkLimit {
                    vertex: v + 1,
                    factor,
                    angles,
                });
            }
        }
        report.shrink_limits = Some(limits);
    }

    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!(
            "angle bounds (pi - Lambda(I)): {:.12} {:.12} {:.12}",
            bounds[0], bounds[1], bounds[2]
        );
        if let Some(in_range) = report.target_in_range {
            println!("target in range: {in_range}");
        }
        if let (Some(r), Some(err)) = (report.radii, report.round_trip_error) {
            println!("radii: {:.12} {:.12} {:.12}  (round trip {err:.2e})", r[0], r[1], r[2]);
        }
        if let Some(limits) = &report.shrink_limits {
            for l in limits {
                println!(
                    "r_{} = {:.0e}: angles {:.10} {:.10} {:.10}",
                    l.vertex, l.factor, l.angles[0], l.angles[1], l.angles[2]
                );
            }
        }
    }
    Ok(code)
}
