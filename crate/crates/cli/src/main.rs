use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use two_hessian::harness::{export_level_sets, run_cell, run_study, RunConfig};
use two_hessian::problems::{catalog, validate_problem, Problem};
use two_hessian::solvers::{Init, Method};
use two_hessian::generate_directions;

#[derive(Parser)]
#[command(name = "two-hessian", version, about = "Solvers for the 2-Hessian equation on the unit cube")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem on one grid.
    Solve(SolveArgs),
    /// Run a convergence study over grid sizes and schemes.
    Study(StudyArgs),
    /// Print or dump lattice direction sets.
    Dirs(DirsArgs),
    /// Check exact solutions against their right-hand sides.
    Validate(ValidateArgs),
}

/// Options shared by `solve` and `study`; each overrides the config file.
#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// exact_plus_noise[:amp], jacobi_warmstart[:tol], poisson_sqrt2f, zero or exact
    #[arg(long, value_parser = parse_init)]
    init: Option<Init>,
    /// `c` in the explicit step `c h^4`.
    #[arg(long)]
    alpha_coeff: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dirichlet band in nodes; narrower than the stencil shrinks it near the boundary.
    #[arg(long)]
    band_width: Option<usize>,
    /// Radial centre as `x,y,z`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    center: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Levels for the level-set CSV.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    levels: Option<Vec<f64>>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// naive, monotone or monotone<w>
    #[arg(long)]
    scheme: Option<String>,
    /// Nodes per axis.
    #[arg(short, long)]
    n: Option<usize>,
    /// Also write the solution as `i,j,k,value` CSV.
    #[arg(long)]
    field_csv: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    n_theta: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    /// Write one JSON report per cell.
    #[arg(long)]
    reports: bool,
}

#[derive(Args)]
struct DirsArgs {
    #[arg(long, default_value_t = 1)]
    n_theta: usize,
    /// Write directions, lines and triplets to this CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random frames for the resolution estimate; 0 skips it.
    #[arg(long, default_value_t = 0)]
    resolution_samples: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Problem name; all problems with exact solutions when omitted.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_init(s: &str) -> Result<Init, String> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a.parse::<f64>().map_err(|e| e.to_string())?)),
        None => (s, None),
    };
    Ok(match kind {
        "exact_plus_noise" => Init::ExactPlusNoise {
            amplitude: arg.unwrap_or(0.01),
        },
        "jacobi_warmstart" => Init::JacobiWarmstart { tol: arg.unwrap_or(0.1) },
        "poisson_sqrt2f" => Init::PoissonSqrt2f,
        "zero" => Init::Zero,
        "exact" => Init::Exact,
        _ => return Err(format!("unknown init `{s}`")),
    })
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(p) = &common.problem {
        cfg.problem = p.clone();
    }
    if let Some(m) = common.method {
        cfg.solver.method = m;
    }
    if let Some(t) = common.tol {
        cfg.solver.tol = t;
    }
    if let Some(m) = common.max_iters {
        cfg.solver.max_iters = m;
    }
    if let Some(i) = common.init {
        cfg.solver.init = i;
    }
    if let Some(a) = common.alpha_coeff {
        cfg.solver.parabolic_alpha_coeff = a;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(b) = common.band_width {
        cfg.solver.band_width = Some(b);
    }
    if let Some(c) = &common.center {
        cfg.center = Some([c[0], c[1], c[2]]);
    }
    if let Some(o) = &common.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(l) = &common.levels {
        cfg.export.level_sets = l.clone();
    }
    Ok(cfg)
}

fn cmd_solve(args: SolveArgs) -> Result<bool> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = &args.scheme {
        cfg.schemes = vec![s.clone()];
    }
    if let Some(n) = args.n {
        cfg.n_values = vec![n];
    }
    cfg.validate()?;
    let problem = cfg.problem()?;
    let scheme = cfg.resolved_schemes()?[0];
    let n = cfg.n_values[0];
    let solver = two_hessian::SolverConfig {
        scheme,
        seed: cfg.seed,
        ..cfg.solver.clone()
    };
    let cell = run_cell(&problem, n, &solver)?;
    let rep = &cell.report;
    println!(
        "{} {} {} N={n}: {:?} after {} iterations, residual {:.3e}",
        problem.name,
        scheme.label(),
        solver.method.name(),
        rep.outcome,
        rep.iterations,
        rep.final_residual()
    );
    if let Some(e) = cell.error_inf {
        println!("max error {e:.3e}");
    }
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        let stem = format!("{}_{}_N{n}", problem.name, scheme.label());
        fs::write(dir.join(format!("{stem}.json")), rep.to_json()?)?;
        if args.field_csv {
            rep.final_field.write_csv(dir.join(format!("{stem}_field.csv")))?;
        }
        if !cfg.export.level_sets.is_empty() {
            export_level_sets(&rep.final_field, &cfg.export.level_sets, dir.join(format!("{stem}_levels.csv")))?;
        }
    }
    Ok(rep.converged)
}

fn cmd_study(args: StudyArgs) -> Result<bool> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.schemes {
        cfg.schemes = s;
    }
    if let Some(t) = args.n_theta {
        cfg.n_theta = t;
    }
    if let Some(n) = args.n_values {
        cfg.n_values = n;
    }
    if args.reports {
        cfg.export.residual_history = true;
    }
    let table = run_study(&cfg)?;
    print!("{}", table.to_csv_string()?);
    Ok(!table.any_failed())
}

fn cmd_dirs(args: DirsArgs) -> Result<bool> {
    let set = generate_directions(args.n_theta)?;
    println!(
        "n_theta={} directions={} lines={} triplets={}",
        set.n_theta(),
        set.num_directions(),
        set.lines().len(),
        set.triplets().len()
    );
    if args.resolution_samples > 0 {
        let d = set.estimate_resolution(args.resolution_samples, 0);
        println!("resolution estimate {d:.4} rad");
    }
    if let Some(path) = args.out {
        set.write_csv(&path)?;
    }
    Ok(true)
}

fn cmd_validate(args: ValidateArgs) -> Result<bool> {
    let problems: Vec<Problem> = match &args.problem {
        Some(name) => vec![Problem::by_name(name)?],
        None => catalog().into_iter().filter(Problem::has_exact).collect(),
    };
    let mut ok = true;
    for p in &problems {
        match validate_problem(p, args.samples, args.seed) {
            Ok(r) => println!("{}: ok, max residual {:.3e} over {} samples", r.name, r.max_residual, r.samples),
            Err(e) => {
                println!("{}: {e}", p.name);
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Study(a) => cmd_study(a),
        Command::Dirs(a) => cmd_dirs(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

