use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inicon::assembly::ConstraintWeight;
use inicon::config::{Preset, RunConfig};
use inicon::pipeline::{run_carleman_check, run_scenario, CarlemanCheckConfig, Family};
use inicon::scenario::Scenario;
use inicon::Error;

#[derive(Parser)]
#[command(name = "inicon", version, about = "Reconstruct the initial condition of a quasilinear parabolic equation from lateral Cauchy data")]
struct Cli {
    /// Worker threads (capped by CR_THREADS).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize data for a scenario and reconstruct its initial condition.
    Run(RunArgs),
    /// Evaluate the weighted coercivity estimate on analytic test functions.
    CarlemanCheck(CheckArgs),
    /// List builtin scenarios.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Builtin scenario name or path to a JSON config.
    target: String,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    /// Forward grid nodes per axis.
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// External point as `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    x0: Option<[f64; 2]>,
    /// Constraint weight relative to the largest PDE row norm.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    warm_start: bool,
    /// Also write the boundary record and the assembled matrix.
    #[arg(long)]
    dump: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 40.0)]
    lambda_min: f64,
    #[arg(long, default_value_t = 400.0)]
    lambda_max: f64,
    /// Number of sweep points.
    #[arg(long, default_value_t = 16)]
    count: usize,
    /// polynomial, cosine or all.
    #[arg(long, default_value = "polynomial")]
    family: String,
    /// Cosine modulation frequency.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 401)]
    points: usize,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    x0: Option<[f64; 2]>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let x = parts[0].parse::<f64>().map_err(|e| e.to_string())?;
    let y = parts[1].parse::<f64>().map_err(|e| e.to_string())?;
    Ok([x, y])
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::BlowUp { .. } | Error::NonFinite { .. } => 4,
        Error::SolverNan(_) | Error::Orthogonality { .. } | Error::DimensionMismatch { .. } | Error::IndexOutOfRange(_) => 3,
        _ => 2,
    }
}

fn load_config(args: &RunArgs) -> inicon::Result<RunConfig> {
    let mut cfg = if Scenario::builtin(&args.target).is_some() {
        RunConfig::for_scenario(&args.target)
    } else if Path::new(&args.target).is_file() {
        RunConfig::from_json(&std::fs::read_to_string(&args.target)?)?
    } else {
        return Err(Error::Config {
            field: "target".into(),
            msg: format!("`{}` is neither a builtin scenario ({}) nor a config file", args.target, Scenario::BUILTINS.join(", ")),
        });
    };
    if let Some(p) = &args.preset {
        cfg.apply_preset(Preset::parse(p)?);
    }
    if let Some(v) = args.nx {
        cfg.grid.nx = v;
        if args.preset.is_none() {
            cfg.grid.forward_nodes = None;
        }
    }
    if let Some(v) = args.n1 {
        cfg.grid.forward_nodes = Some(v);
    }
    if let Some(v) = args.modes {
        cfg.basis.modes = v;
    }
    if let Some(v) = args.lambda {
        cfg.carleman.lambda = v;
    }
    if let Some(v) = args.beta {
        cfg.carleman.beta = v;
    }
    if let Some(v) = args.b {
        cfg.carleman.b = v;
    }
    if let Some(v) = args.x0 {
        cfg.carleman.x0 = v;
    }
    if let Some(v) = args.omega {
        cfg.omega = ConstraintWeight::Relative { factor: v };
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.iters {
        cfg.iterations = v;
    }
    if let Some(v) = args.tol {
        cfg.solver.tol = v;
    }
    if let Some(v) = args.max_iter {
        cfg.solver.max_iter = v;
    }
    cfg.solver.warm_start |= args.warm_start;
    cfg.dump |= args.dump;
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> inicon::Result<()> {
    let cfg = load_config(args)?;
    let out = run_scenario(&cfg, &args.out)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for (stage, secs) in &out.timings {
        eprintln!("{stage:>10}: {secs:8.2} s");
    }
    let m = &out.metrics;
    println!("scenario {} ({} iterations)", out.scenario.name, out.states.len() - 1);
    for inc in &m.inclusions {
        println!(
            "  {:<12} true max {:>8.4}  reconstructed {:>8.4}  relative error {:>6.2}%",
            inc.label,
            inc.true_max,
            inc.reconstructed_max,
            100.0 * inc.relative_error
        );
    }
    println!("  argmax ({:.3}, {:.3}) = {:.4}, inside support: {}", m.argmax[0], m.argmax[1], m.argmax[2], m.argmax_in_support);
    if let Some(l2) = m.relative_l2_error.last() {
        println!("  relative L2 error {:.4}", l2);
    }
    let rec: Vec<String> = m.recursive_errors.iter().map(|e| format!("{e:.3e}")).collect();
    println!("  recursive errors [{}]", rec.join(", "));
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn carleman(args: &CheckArgs) -> inicon::Result<()> {
    let mut cfg = CarlemanCheckConfig {
        lambda_min: args.lambda_min,
        lambda_max: args.lambda_max,
        count: args.count,
        family: Family::parse(&args.family)?,
        k: args.k,
        points: args.points,
        ..Default::default()
    };
    if let Some(v) = args.beta {
        cfg.params.beta = v;
    }
    if let Some(v) = args.b {
        cfg.params.b = v;
    }
    if let Some(v) = args.x0 {
        cfg.params.x0 = v;
    }
    let mut ok = true;
    for (path, report) in run_carleman_check(&cfg, &args.out)? {
        println!("{}: min C_hat = {:.6e} over {} lambda values -> {}", report.function.label(), report.min_c_hat(), report.rows.len(), path.display());
        if report.degenerate {
            println!("  degenerate: every integral vanished");
        }
        for v in report.violations() {
            ok = false;
            println!("  counterexample at lambda = {}: C_hat = {}", v.lambda, v.c_hat);
        }
    }
    if !ok {
        return Err(Error::InvalidArgument("the estimate failed for at least one lambda".into()));
    }
    Ok(())
}

fn configure_threads(jobs: Option<usize>) {
    let cap = std::env::var("CR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    let n = match (jobs, cap) {
        (Some(j), Some(c)) => Some(j.min(c)),
        (j, c) => j.or(c),
    };
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.jobs);
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::CarlemanCheck(a) => carleman(a),
        Command::Scenarios => {
            for name in Scenario::BUILTINS {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
