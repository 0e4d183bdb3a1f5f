//! `statgeo`: normal geodesics between submanifolds of standard stationary
//! spacetimes, from the command line.
//!
//! Exit codes: 0 success (solve converged and certified), 1 solver failure
//! (best attempt still written), 2 usage/parse/validation errors.

mod curve_io;
mod report;
mod scenario_file;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use statgeo_core::error::Error;
use statgeo_core::fermat::{self, FermatSide, FermatStructure};
use statgeo_core::reduction::{self, SpatialCurve};
use statgeo_core::scenarios::{self, Scenario};
use statgeo_core::solver::{self, SolveResult};
use statgeo_core::submersion::{self, BaseMetric};

use scenario_file::ScenarioFile;

#[derive(Parser)]
#[command(
    name = "statgeo",
    about = "Normal geodesics connecting two submanifolds in a standard stationary spacetime",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a certified normal geodesic and write curve + diagnostics.
    Solve {
        /// Builtin scenario name or path to a scenario file.
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        output: Output,
    },
    /// Fermat-metric (Randers) computations on the spatial base.
    Fermat {
        #[command(subcommand)]
        command: FermatCommand,
    },
    /// Horizontal lift of a base curve through the Lorentzian submersion.
    Lift {
        scenario: String,
        #[command(flatten)]
        segment: SegmentArgs,
        /// Fiber starting point t(0).
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Recompute full diagnostics for a stored curve file.
    Diagnose {
        /// Curve file produced by `solve`, `lift` or `fermat lift`.
        curve: PathBuf,
        /// Builtin scenario name or path to a scenario file.
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the builtin scenario catalog.
    List,
}

#[derive(Subcommand)]
enum FermatCommand {
    /// Fermat length of a spatial curve (future or past metric).
    Length {
        scenario: String,
        #[command(flatten)]
        segment: SegmentArgs,
        #[arg(long, value_parser = parse_side, default_value = "future")]
        side: FermatSide,
    },
    /// Finsler distance estimate between two points (forward and backward).
    Distance {
        scenario: String,
        /// Start point, comma-separated coordinates.
        #[arg(long, value_parser = parse_point)]
        from: DVector<f64>,
        /// End point, comma-separated coordinates.
        #[arg(long, value_parser = parse_point)]
        to: DVector<f64>,
        #[arg(long, value_parser = parse_side, default_value = "future")]
        side: FermatSide,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        output: Output,
    },
    /// Lightlike lift of a spatial curve; emits a per-row null-check column.
    Lift {
        scenario: String,
        #[command(flatten)]
        segment: SegmentArgs,
        #[arg(long, value_parser = parse_side, default_value = "future")]
        side: FermatSide,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[command(flatten)]
        output: Output,
    },
}

/// A spatial curve given either by a file or by two endpoints (straight
/// chord with `--segments` pieces).
#[derive(Args)]
struct SegmentArgs {
    /// Curve file; its spatial columns are used.
    #[arg(long, conflicts_with_all = ["from", "to"])]
    curve: Option<PathBuf>,
    #[arg(long, value_parser = parse_point, requires = "to")]
    from: Option<DVector<f64>>,
    #[arg(long, value_parser = parse_point, requires = "from")]
    to: Option<DVector<f64>>,
    #[arg(long, default_value_t = 64)]
    segments: usize,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    tol_on: Option<f64>,
    #[arg(long)]
    tol_geo: Option<f64>,
    #[arg(long)]
    tol_cons: Option<f64>,
    #[arg(long)]
    tol_orth: Option<f64>,
    #[arg(long)]
    tol_causal: Option<f64>,
}

#[derive(Args)]
struct Output {
    /// Output directory (default: $STATGEO_OUT_DIR, then the working dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, scenario: &mut Scenario) {
        let p = &mut scenario.params;
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.restarts {
            p.restarts = v;
        }
        if let Some(v) = self.segments {
            p.segments = v;
        }
        if let Some(v) = self.grad_tol {
            p.grad_tol = v;
        }
        let t = &mut p.tolerances;
        if let Some(v) = self.tol_on {
            t.tol_on = v;
        }
        if let Some(v) = self.tol_geo {
            t.tol_geo = v;
        }
        if let Some(v) = self.tol_cons {
            t.tol_cons = v;
        }
        if let Some(v) = self.tol_orth {
            t.tol_orth = v;
        }
        if let Some(v) = self.tol_causal {
            t.tol_causal = v;
        }
    }
}

impl Output {
    fn dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os("STATGEO_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn parse_point(s: &str) -> Result<DVector<f64>, String> {
    let coords: Result<Vec<f64>, _> = s.split(',').map(|c| c.trim().parse::<f64>()).collect();
    let coords = coords.map_err(|e| format!("bad coordinate in `{s}`: {e}"))?;
    if coords.is_empty() {
        return Err("empty point".into());
    }
    Ok(DVector::from_vec(coords))
}

fn parse_side(s: &str) -> Result<FermatSide, String> {
    match s {
        "future" => Ok(FermatSide::Future),
        "past" => Ok(FermatSide::Past),
        other => Err(format!("side must be `future` or `past`, got `{other}`")),
    }
}

/// Exit code 2 for anything the user declared wrong.
struct UsageError(String);

fn load_scenario(spec: &str) -> Result<Scenario, UsageError> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        ScenarioFile::parse(&text)
            .and_then(ScenarioFile::build)
            .map_err(UsageError)
    } else {
        scenarios::builtin(spec).map_err(|e| {
            UsageError(format!(
                "`{spec}` is neither a file nor a builtin scenario ({e}); try `statgeo list`"
            ))
        })
    }
}

fn load_spatial_curve(
    args: &SegmentArgs,
    dim: usize,
) -> Result<SpatialCurve, UsageError> {
    match (&args.curve, &args.from, &args.to) {
        (Some(path), _, _) => {
            let curve = curve_io::read_curve(path).map_err(UsageError)?;
            if curve.dim() != dim {
                return Err(UsageError(format!(
                    "curve has dimension {}, scenario needs {dim}",
                    curve.dim()
                )));
            }
            Ok(curve.spatial())
        }
        (None, Some(from), Some(to)) => {
            if from.len() != dim || to.len() != dim {
                return Err(UsageError(format!("endpoints must have {dim} coordinates")));
            }
            SpatialCurve::straight(from, to, args.segments.max(2))
                .map_err(|e| UsageError(e.to_string()))
        }
        _ => Err(UsageError(
            "give either --curve FILE or both --from and --to".into(),
        )),
    }
}

fn write_solve_artifacts(
    dir: &Path,
    scenario: &Scenario,
    result: &SolveResult,
) -> Result<(String, PathBuf), UsageError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| UsageError(format!("cannot create {}: {e}", dir.display())))?;
    let curve_path = dir.join(format!("{}_curve.csv", scenario.name));
    curve_io::write_curve(&curve_path, &result.curve).map_err(UsageError)?;
    let report = report::solve_report(&scenario.name, result, &scenario.params.tolerances);
    let report_path = dir.join(format!("{}_diagnostics.txt", scenario.name));
    std::fs::write(&report_path, &report)
        .map_err(|e| UsageError(format!("cannot write {}: {e}", report_path.display())))?;
    Ok((report, curve_path))
}

fn cmd_solve(spec: &str, overrides: &Overrides, output: &Output) -> Result<u8, UsageError> {
    let mut scenario = load_scenario(spec)?;
    overrides.apply(&mut scenario);
    let dir = output.dir();

    match solver::solve_normal_geodesic(&scenario.metric, &scenario.boundary, &scenario.params) {
        Ok(result) => {
            let (report, curve_path) = write_solve_artifacts(&dir, &scenario, &result)?;
            print!("{report}");
            println!("curve_file: {}", curve_path.display());
            Ok(0)
        }
        Err(Error::NoGeodesicFound { best, .. }) => {
            let (report, curve_path) = write_solve_artifacts(&dir, &scenario, &best)?;
            print!("{report}");
            println!("curve_file: {}", curve_path.display());
            eprintln!("statgeo: no certified geodesic; best attempt written");
            Ok(1)
        }
        Err(
            e @ (Error::NotDisjoint
            | Error::InvalidBoundary { .. }
            | Error::InvalidParams(_)
            | Error::DimensionMismatch { .. }),
        ) => Err(UsageError(e.to_string())),
        Err(e) => {
            eprintln!("statgeo: {e}");
            Ok(1)
        }
    }
}

fn cmd_fermat_length(
    spec: &str,
    segment: &SegmentArgs,
    side: FermatSide,
) -> Result<u8, UsageError> {
    let scenario = load_scenario(spec)?;
    let x = load_spatial_curve(segment, scenario.metric.dim())?;
    let fs = FermatStructure::new(scenario.metric.clone(), side);
    println!("scenario: {}", scenario.name);
    println!("side: {}", side_name(side));
    println!("fermat_length: {}", curve_io::fmt(fermat::fermat_length(&fs, &x)));
    println!(
        "arrival_time: {}",
        curve_io::fmt(fermat::arrival_time(&scenario.metric, side, &x))
    );
    Ok(0)
}

fn cmd_fermat_distance(
    spec: &str,
    from: &DVector<f64>,
    to: &DVector<f64>,
    side: FermatSide,
    overrides: &Overrides,
    output: &Output,
) -> Result<u8, UsageError> {
    let mut scenario = load_scenario(spec)?;
    overrides.apply(&mut scenario);
    let dim = scenario.metric.dim();
    if from.len() != dim || to.len() != dim {
        return Err(UsageError(format!("endpoints must have {dim} coordinates")));
    }
    // the distance solver needs no endpoint certification thresholds
    let mut params = scenario.params.clone();
    params.grad_tol = params.grad_tol.max(1e-9);
    let fs = FermatStructure::new(scenario.metric.clone(), side);

    let forward = fermat::fermat_distance(&fs, from, to, &params);
    let backward = fermat::fermat_distance(&fs, to, from, &params);
    let (forward, fwd_curve) = forward.map_err(|e| UsageError(e.to_string()))?;
    let (backward, bwd_curve) = backward.map_err(|e| UsageError(e.to_string()))?;

    println!("scenario: {}", scenario.name);
    println!("side: {}", side_name(side));
    println!("forward_distance: {}", curve_io::fmt(forward));
    println!("backward_distance: {}", curve_io::fmt(backward));

    let dir = output.dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| UsageError(format!("cannot create {}: {e}", dir.display())))?;
    for (tag, curve) in [("forward", fwd_curve), ("backward", bwd_curve)] {
        let lift = fermat::lightlike_lift(&fs, &curve, 0.0)
            .map_err(|e| UsageError(e.to_string()))?;
        let path = dir.join(format!("{}_distance_{tag}_curve.csv", scenario.name));
        curve_io::write_curve(&path, &lift).map_err(UsageError)?;
        println!("{tag}_curve_file: {}", path.display());
    }
    Ok(0)
}

fn cmd_fermat_lift(
    spec: &str,
    segment: &SegmentArgs,
    side: FermatSide,
    t0: f64,
    output: &Output,
) -> Result<u8, UsageError> {
    let scenario = load_scenario(spec)?;
    let x = load_spatial_curve(segment, scenario.metric.dim())?;
    let fs = FermatStructure::new(scenario.metric.clone(), side);
    let lift = fermat::lightlike_lift(&fs, &x, t0).map_err(|e| UsageError(e.to_string()))?;

    // per-row null check: g(zdot, zdot) of the segment starting at the row
    let energies = scenario
        .metric
        .segment_energies(&lift)
        .map_err(|e| UsageError(e.to_string()))?;
    let mut null_col = energies.clone();
    null_col.push(*energies.last().unwrap());

    let dir = output.dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| UsageError(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{}_lightlike_curve.csv", scenario.name));
    curve_io::write_curve_with_extra(&path, &lift, Some(("null_residual", &null_col)))
        .map_err(UsageError)?;

    println!("scenario: {}", scenario.name);
    println!("side: {}", side_name(side));
    println!("delta: {}", curve_io::fmt(lift.delta_z()));
    let worst = energies.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()));
    println!("max_null_residual: {}", curve_io::fmt(worst));
    println!("curve_file: {}", path.display());
    Ok(0)
}

fn cmd_lift(
    spec: &str,
    segment: &SegmentArgs,
    t0: f64,
    output: &Output,
) -> Result<u8, UsageError> {
    let scenario = load_scenario(spec)?;
    let x = load_spatial_curve(segment, scenario.metric.dim())?;
    let bm = BaseMetric::new(scenario.metric.clone());
    let lift = submersion::horizontal_lift(&bm, &x, t0);

    let killing = scenario
        .metric
        .segment_killing_products(&lift)
        .map_err(|e| UsageError(e.to_string()))?;
    let worst_horizontal = killing.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let residual = submersion::lift_is_geodesic_check(&scenario.metric, &lift)
        .map_err(|e| UsageError(e.to_string()))?;

    let dir = output.dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| UsageError(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{}_lift_curve.csv", scenario.name));
    curve_io::write_curve(&path, &lift).map_err(UsageError)?;

    println!("scenario: {}", scenario.name);
    println!("delta: {}", curve_io::fmt(lift.delta_z()));
    println!("max_killing_product: {}", curve_io::fmt(worst_horizontal));
    println!("geodesic_residual: {}", curve_io::fmt(residual));
    println!("curve_file: {}", path.display());
    Ok(0)
}

fn cmd_diagnose(curve_path: &Path, spec: &str, overrides: &Overrides) -> Result<u8, UsageError> {
    let mut scenario = load_scenario(spec)?;
    overrides.apply(&mut scenario);
    let curve = curve_io::read_curve(curve_path).map_err(UsageError)?;
    if curve.dim() != scenario.metric.dim() {
        return Err(UsageError(format!(
            "curve has dimension {}, scenario needs {}",
            curve.dim(),
            scenario.metric.dim()
        )));
    }
    let diag = solver::diagnose(
        &scenario.metric,
        &curve,
        Some(&scenario.boundary),
        &scenario.params.tolerances,
    )
    .map_err(|e| UsageError(e.to_string()))?;
    let f_value = reduction::eval_f(&scenario.metric, &curve);
    print!(
        "{}",
        report::diagnose_report(
            &scenario.name,
            &curve_path.display().to_string(),
            f_value,
            &diag,
            &curve,
            &scenario.params.tolerances,
        )
    );
    Ok(0)
}

fn cmd_list() -> u8 {
    println!("{:<28} {:<4} description", "name", "hyp");
    for name in scenarios::catalog() {
        let s = scenarios::builtin(name).expect("catalog names resolve");
        println!("{:<28} {:<4} {}", s.name, s.boundary.hypothesis.to_string(), s.description);
    }
    0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve {
            scenario,
            overrides,
            output,
        } => cmd_solve(scenario, overrides, output),
        Command::Fermat { command } => match command {
            FermatCommand::Length {
                scenario,
                segment,
                side,
            } => cmd_fermat_length(scenario, segment, *side),
            FermatCommand::Distance {
                scenario,
                from,
                to,
                side,
                overrides,
                output,
            } => cmd_fermat_distance(scenario, from, to, *side, overrides, output),
            FermatCommand::Lift {
                scenario,
                segment,
                side,
                t0,
                output,
            } => cmd_fermat_lift(scenario, segment, *side, *t0, output),
        },
        Command::Lift {
            scenario,
            segment,
            t0,
            output,
        } => cmd_lift(scenario, segment, *t0, output),
        Command::Diagnose {
            curve,
            scenario,
            overrides,
        } => cmd_diagnose(curve, scenario, overrides),
        Command::List => Ok(cmd_list()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(UsageError(msg)) => {
            eprintln!("statgeo: {msg}");
            ExitCode::from(2)
        }
    }
}

fn side_name(side: FermatSide) -> &'static str {
    match side {
        FermatSide::Future => "future",
        FermatSide::Past => "past",
    }
}
