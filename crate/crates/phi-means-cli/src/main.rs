//! Batch front end for the phi-means library.
//!
//! Every run ends with artifacts in the output directory: results.json
//! (versioned summary), results.csv (long form), trace.csv for single
//! solves, and an optional plot.svg. Exit codes: 0 success, 2 bad
//! configuration, 3 failure while solving.

mod config;
mod output;

use clap::{Parser, Subcommand};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use phi_means::experiments::{
    cells_to_csv, consistency_curve, uniform_consistency_curve, uniqueness_check, CellRecord,
    ConsistencyResult,
};
use phi_means::loss::Measure;
use phi_means::phi::Phi;
use phi_means::sampling::{derive_seed, isotropic_sample, RadialProfile};
use phi_means::solvers::{solve, SolverMethod, SolverReport, Termination};
use phi_means::spaces::{Point, Space};

use config::{FileConfig, SolverFlags};
use output::{line_plot, trace_csv, Series, PALETTE};

#[derive(Parser)]
#[command(
    name = "phimeans",
    version,
    about = "Generalized Frechet means: solvers, experiments, and plots"
)]
struct Cli {
    /// TOML manifest; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Space descriptor, e.g. euclidean:2, circle, torus:2, sphere:2, projective:2.
    #[arg(long, global = true)]
    space: Option<String>,
    /// Loss descriptor, e.g. power:2, exp:1.5, linear:1.
    #[arg(long, global = true)]
    phi: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write plot.svg.
    #[arg(long, global = true)]
    plot: bool,
    /// Solver: auto, nested-grid, gradient-descent, or tangent-flip.
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    grid_levels: Option<usize>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    #[arg(long, global = true)]
    step_size: Option<f64>,
    /// fixed or barzilai-borwein.
    #[arg(long, global = true)]
    step_rule: Option<String>,
    /// closed-form-mean, grid-on-tangent, or gradient-on-tangent.
    #[arg(long, global = true)]
    inner_solver: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one phi-mean and write the full solver report.
    Solve {
        /// CSV of points, one per row (a non-numeric first row is a header).
        #[arg(long)]
        measure: Option<PathBuf>,
        /// JSON measure with atoms and weights.
        #[arg(long)]
        measure_json: Option<PathBuf>,
        /// Draw this many points from an isotropic law instead of reading a file.
        #[arg(long)]
        sample: Option<usize>,
        /// Radial profile for --sample: exp:RATE, linear:CUTOFF, step:RADIUS.
        #[arg(long)]
        profile: Option<String>,
        /// Center for --sample, comma-separated coordinates.
        #[arg(long)]
        center: Option<String>,
    },
    /// Fitted-mean error against the sampling center as n grows.
    Consistency {
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        center: Option<String>,
    },
    /// Worst-member error over the power family t^p, p in a grid.
    UniformConsistency {
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        center: Option<String>,
        #[arg(long, value_delimiter = ',')]
        p_grid: Option<Vec<f64>>,
    },
    /// Fit several losses on one sample; all means should coincide.
    Uniqueness {
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        center: Option<String>,
        /// Comma-separated loss descriptors.
        #[arg(long)]
        phi_list: Option<String>,
        #[arg(long)]
        sample_size: Option<usize>,
    },
    /// Print the growth constant and membership diagnostics of a loss.
    CheckPhi,
}

struct Failure {
    code: u8,
    msg: String,
}

fn config_err(msg: impl Display) -> Failure {
    Failure { code: 2, msg: msg.to_string() }
}

fn run_err(msg: impl Display) -> Failure {
    Failure { code: 3, msg: msg.to_string() }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("PHIMEANS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

/// Shared settings after the flag/file merge.
struct Context {
    file: FileConfig,
    space: Option<String>,
    phi: Option<String>,
    out: PathBuf,
    seed: u64,
    plot: bool,
    method: SolverMethod,
    solver: phi_means::solvers::SolverConfig,
}

impl Context {
    fn space(&self) -> Result<Space, Failure> {
        let desc = self.space.as_deref().ok_or_else(|| config_err("--space is required"))?;
        Space::parse(desc).map_err(config_err)
    }

    fn phi(&self) -> Result<Phi, Failure> {
        let desc = self.phi.as_deref().ok_or_else(|| config_err("--phi is required"))?;
        Phi::parse(desc).map_err(config_err)
    }
}

fn build_context(cli: &Cli) -> Result<Context, Failure> {
    let file = match &cli.config {
        Some(path) => config::load_file(path).map_err(config_err)?,
        None => FileConfig::default(),
    };
    let flags = SolverFlags {
        max_iters: cli.max_iters,
        tol: cli.tol,
        grid_levels: cli.grid_levels,
        grid_points_per_level: cli.grid_points,
        step_size: cli.step_size,
        step_rule: cli.step_rule.clone(),
        inner_solver: cli.inner_solver.clone(),
    };
    let solver = config::merge_solver(file.solver.as_ref(), &flags).map_err(config_err)?;
    let method_text = cli.method.clone().or_else(|| file.method.clone());
    let method = match method_text.as_deref() {
        None | Some("auto") => SolverMethod::Auto,
        Some(text) => SolverMethod::parse(text).map_err(config_err)?,
    };
    Ok(Context {
        space: cli.space.clone().or_else(|| file.space.clone()),
        phi: cli.phi.clone().or_else(|| file.phi.clone()),
        out: cli
            .out
            .clone()
            .or_else(|| file.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("phimeans-out")),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        plot: cli.plot || file.plot.unwrap_or(false),
        method,
        solver,
        file,
    })
}

fn default_center(space: &Space) -> Point {
    let mut coords = vec![0.0; space.coord_len()];
    if matches!(space, Space::Sphere { .. } | Space::Projective { .. }) {
        let last = coords.len() - 1;
        coords[last] = 1.0;
    }
    space.point(coords).expect("canonical center is valid")
}

fn resolve_center(
    space: &Space,
    flag: Option<&str>,
    file: Option<&Vec<f64>>,
) -> Result<Point, Failure> {
    let coords = match (flag, file) {
        (Some(text), _) => Some(
            text.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| config_err(format!("cannot parse center `{text}`")))?,
        ),
        (None, Some(v)) => Some(v.clone()),
        (None, None) => None,
    };
    match coords {
        Some(c) => space.point(c).map_err(config_err),
        None => Ok(default_center(space)),
    }
}

fn resolve_profile(flag: Option<&str>, file: Option<&String>) -> Result<RadialProfile, Failure> {
    let text = flag.or(file.map(String::as_str)).unwrap_or("exp:1");
    RadialProfile::parse(text).map_err(config_err)
}

fn measure_from_csv(space: &Space, path: &Path) -> Result<Measure, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut atoms = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(coords) => atoms.push(space.point(coords).map_err(|e| {
                config_err(format!("{}:{}: {e}", path.display(), idx + 1))
            })?),
            Err(_) if idx == 0 => continue, // header row
            Err(_) => {
                return Err(config_err(format!(
                    "{}:{}: not a numeric row",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Measure::equal_weights(*space, atoms).map_err(config_err)
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), Failure> {
    std::fs::write(dir.join(name), content)
        .map_err(|e| run_err(format!("cannot write {name}: {e}")))
}

fn json_artifact(dir: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(run_err)?;
    write_artifact(dir, "results.json", &(text + "\n"))
}

fn term_text(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxIters => "max-iters",
        Termination::CutLocusAbort => "cut-locus-abort",
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = build_context(&cli)?;
    std::fs::create_dir_all(&ctx.out)
        .map_err(|e| config_err(format!("cannot create output dir {}: {e}", ctx.out.display())))?;
    match &cli.command {
        Command::Solve { measure, measure_json, sample, profile, center } => {
            run_solve(&ctx, measure.as_deref(), measure_json.as_deref(), *sample, profile.as_deref(), center.as_deref())
        }
        Command::Consistency { profile, sizes, replicates, center } => {
            let curve = CurveArgs::resolve(&ctx, profile.as_deref(), sizes.clone(), *replicates, center.as_deref())?;
            let phi = ctx.phi()?;
            let result = consistency_curve(
                &phi,
                &curve.space,
                &curve.center,
                &curve.profile,
                &curve.sizes,
                curve.replicates,
                &ctx.solver,
                ctx.seed,
            )
            .map_err(run_err)?;
            finish_curve(&ctx, "consistency", &phi.label(), &curve, result)
        }
        Command::UniformConsistency { profile, sizes, replicates, center, p_grid } => {
            let curve = CurveArgs::resolve(&ctx, profile.as_deref(), sizes.clone(), *replicates, center.as_deref())?;
            let p_grid = p_grid
                .clone()
                .or_else(|| ctx.file.p_grid.clone())
                .unwrap_or_else(|| vec![1.25, 1.5, 2.0, 3.0]);
            let result = uniform_consistency_curve(
                &p_grid,
                &curve.space,
                &curve.center,
                &curve.profile,
                &curve.sizes,
                curve.replicates,
                &ctx.solver,
                ctx.seed,
            )
            .map_err(run_err)?;
            let label = format!(
                "power:[{}]",
                p_grid.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
            );
            finish_curve(&ctx, "uniform-consistency", &label, &curve, result)
        }
        Command::Uniqueness { profile, center, phi_list, sample_size } => {
            run_uniqueness(&ctx, profile.as_deref(), center.as_deref(), phi_list.as_deref(), *sample_size)
        }
        Command::CheckPhi => run_check_phi(&ctx),
    }
}

fn run_solve(
    ctx: &Context,
    measure: Option<&Path>,
    measure_json: Option<&Path>,
    sample: Option<usize>,
    profile: Option<&str>,
    center: Option<&str>,
) -> Result<(), Failure> {
    let measure = measure.map(Path::to_path_buf).or_else(|| ctx.file.measure.as_ref().map(PathBuf::from));
    let measure_json =
        measure_json.map(Path::to_path_buf).or_else(|| ctx.file.measure_json.as_ref().map(PathBuf::from));
    let sample = sample.or(ctx.file.sample);
    let sources = measure.is_some() as u8 + measure_json.is_some() as u8 + sample.is_some() as u8;
    if sources != 1 {
        return Err(config_err(
            "exactly one measure source is required: --measure, --measure-json, or --sample",
        ));
    }

    let mu = if let Some(path) = measure {
        let space = ctx.space()?;
        measure_from_csv(&space, &path)?
    } else if let Some(path) = measure_json {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mu: Measure = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("bad measure {}: {e}", path.display())))?;
        if let Some(desc) = ctx.space.as_deref() {
            let flag_space = Space::parse(desc).map_err(config_err)?;
            if &flag_space != mu.space() {
                return Err(config_err(format!(
                    "--space {} conflicts with the measure's space {}",
                    flag_space.descriptor(),
                    mu.space().descriptor()
                )));
            }
        }
        mu
    } else {
        let space = ctx.space()?;
        let profile = resolve_profile(profile, ctx.file.profile.as_ref())?;
        let center = resolve_center(&space, center, ctx.file.center.as_ref())?;
        let n = sample.expect("counted above");
        let points =
            isotropic_sample(&space, &center, &profile, n, derive_seed(ctx.seed, 0)).map_err(config_err)?;
        Measure::equal_weights(space, points).map_err(config_err)?
    };

    let phi = ctx.phi()?;
    let report = solve(&phi, &mu, ctx.method, &ctx.solver).map_err(run_err)?;
    print_report(&mu, &report);

    let envelope = serde_json::json!({
        "schema": "phi-means/1",
        "command": "solve",
        "space": mu.space().descriptor(),
        "phi": phi.label(),
        "method": report.method,
        "seed": ctx.seed,
        "report": report,
    });
    json_artifact(&ctx.out, &envelope)?;
    write_artifact(&ctx.out, "trace.csv", &trace_csv(&report.trace))?;
    let cells = vec![CellRecord {
        replicate: 0,
        n: mu.len(),
        label: phi.label(),
        rho: f64::NAN,
        loss: report.final_loss,
        wall_ms: report.wall_ms,
        termination: Some(report.termination),
        estimate: Some(report.estimate.clone()),
        error: None,
    }];
    write_artifact(&ctx.out, "results.csv", &cells_to_csv("solve", &cells))?;
    if ctx.plot {
        let series = [Series {
            name: "loss",
            color: PALETTE[0],
            points: report.trace.iter().map(|t| (t.iteration as f64, t.loss)).collect(),
        }];
        let svg = line_plot("loss along the solve", "iteration", "loss", false, false, &series);
        write_artifact(&ctx.out, "plot.svg", &svg)?;
    }
    Ok(())
}

fn print_report(mu: &Measure, report: &SolverReport) {
    println!("method      {}", report.method);
    println!("termination {}", term_text(report.termination));
    println!("loss        {}", report.final_loss);
    let coords: Vec<String> = report.estimate.0.iter().map(|c| format!("{c:.8}")).collect();
    println!("estimate    [{}] on {}", coords.join(", "), mu.space().descriptor());
    if let Some(ms) = &report.mean_set {
        println!(
            "mean set    {} points within {:.3e} of the best loss",
            ms.points.len(),
            ms.delta
        );
    }
}

/// Arguments shared by both curve commands, after merging.
struct CurveArgs {
    space: Space,
    center: Point,
    profile: RadialProfile,
    sizes: Vec<usize>,
    replicates: usize,
}

impl CurveArgs {
    fn resolve(
        ctx: &Context,
        profile: Option<&str>,
        sizes: Option<Vec<usize>>,
        replicates: Option<usize>,
        center: Option<&str>,
    ) -> Result<CurveArgs, Failure> {
        let space = ctx.space()?;
        Ok(CurveArgs {
            center: resolve_center(&space, center, ctx.file.center.as_ref())?,
            profile: resolve_profile(profile, ctx.file.profile.as_ref())?,
            sizes: sizes.or_else(|| ctx.file.sizes.clone()).unwrap_or_else(|| vec![10, 100, 1000]),
            replicates: replicates.or(ctx.file.replicates).unwrap_or(50),
            space,
        })
    }
}

fn finish_curve(
    ctx: &Context,
    id: &str,
    phi_label: &str,
    curve: &CurveArgs,
    result: ConsistencyResult,
) -> Result<(), Failure> {
    for s in &result.summary {
        println!("n {:>6}  median rho {:.6}  p90 {:.6}", s.n, s.median_rho, s.p90_rho);
    }
    let envelope = serde_json::json!({
        "schema": "phi-means/1",
        "command": id,
        "space": curve.space.descriptor(),
        "phi": phi_label,
        "profile": curve.profile.label(),
        "replicates": curve.replicates,
        "seed": ctx.seed,
        "result": result,
    });
    json_artifact(&ctx.out, &envelope)?;
    write_artifact(&ctx.out, "results.csv", &cells_to_csv(id, &result.cells))?;
    if ctx.plot {
        let series = [
            Series {
                name: "median",
                color: PALETTE[0],
                points: result.summary.iter().map(|s| (s.n as f64, s.median_rho)).collect(),
            },
            Series {
                name: "p90",
                color: PALETTE[1],
                points: result.summary.iter().map(|s| (s.n as f64, s.p90_rho)).collect(),
            },
        ];
        let svg = line_plot("set distance to the center", "n", "rho", true, true, &series);
        write_artifact(&ctx.out, "plot.svg", &svg)?;
    }
    Ok(())
}

fn run_uniqueness(
    ctx: &Context,
    profile: Option<&str>,
    center: Option<&str>,
    phi_list: Option<&str>,
    sample_size: Option<usize>,
) -> Result<(), Failure> {
    let space = ctx.space()?;
    let center = resolve_center(&space, center, ctx.file.center.as_ref())?;
    let profile = resolve_profile(profile, ctx.file.profile.as_ref())?;
    let n = sample_size.or(ctx.file.sample_size).unwrap_or(5000);
    let labels: Vec<String> = match (phi_list, &ctx.file.phi_list) {
        (Some(text), _) => text.split(',').map(|s| s.trim().to_string()).collect(),
        (None, Some(list)) => list.clone(),
        (None, None) => ["power:1.5", "power:2", "power:4", "exp:2"].map(String::from).to_vec(),
    };
    let phis: Result<Vec<Phi>, Failure> =
        labels.iter().map(|l| Phi::parse(l).map_err(config_err)).collect();
    let report =
        uniqueness_check(&space, &center, &profile, &phis?, n, &ctx.solver, ctx.seed).map_err(run_err)?;

    for e in &report.entries {
        println!("{:<12} distance {:.6}  loss {:.6}  {}", e.label, e.distance, e.loss, term_text(e.termination));
    }
    println!("max distance {:.6}", report.max_distance);

    let cells: Vec<CellRecord> = report
        .entries
        .iter()
        .map(|e| CellRecord {
            replicate: 0,
            n,
            label: e.label.clone(),
            rho: e.distance,
            loss: e.loss,
            wall_ms: e.wall_ms,
            termination: Some(e.termination),
            estimate: Some(e.estimate.clone()),
            error: None,
        })
        .collect();
    let envelope = serde_json::json!({
        "schema": "phi-means/1",
        "command": "uniqueness",
        "space": space.descriptor(),
        "profile": profile.label(),
        "seed": ctx.seed,
        "result": report,
    });
    json_artifact(&ctx.out, &envelope)?;
    write_artifact(&ctx.out, "results.csv", &cells_to_csv("uniqueness", &cells))?;
    if ctx.plot {
        let series = [Series {
            name: "distance",
            color: PALETTE[2],
            points: report
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| (i as f64 + 1.0, e.distance))
                .collect(),
        }];
        let svg = line_plot("distance to the center per loss", "loss index", "distance", false, false, &series);
        write_artifact(&ctx.out, "plot.svg", &svg)?;
    }
    Ok(())
}

fn run_check_phi(ctx: &Context) -> Result<(), Failure> {
    let phi = ctx.phi()?;
    let gamma = phi.gamma().map_err(run_err)?;
    let t_max = phi.domain_max().unwrap_or(4.0).min(4.0);
    let grid: Vec<f64> = (0..=256).map(|i| t_max * i as f64 / 256.0).collect();
    let membership = phi.check_membership(&grid);
    let flag = |b: bool| if b { "yes" } else { "no" };

    println!("loss          {}", phi.label());
    println!("gamma         {gamma}");
    println!("zero at zero  {}", flag(membership.zero_at_zero));
    println!("increasing    {}", flag(membership.increasing));
    println!("convex        {}", flag(membership.convex));
    println!("gamma bounded {}", flag(membership.gamma_bounded));
    println!("member        {}", flag(membership.is_member()));

    let envelope = serde_json::json!({
        "schema": "phi-means/1",
        "command": "check-phi",
        "phi": phi.label(),
        "gamma": gamma,
        "membership": membership,
        "member": membership.is_member(),
    });
    json_artifact(&ctx.out, &envelope)
}
