use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nodal_core::config::SolverConfig;
use nodal_core::nodal::minimize_nodes;
use nodal_core::problem::{check_assumptions, critical_exponent, NonlinearitySpec, ScanGrid, Term};
use nodal_core::report::{write_outputs, OracleReport, RunReport, SolutionReport};
use nodal_core::shooting::{find_k_node_profile, sweep, sweep_csv, ShootConfig};
use nodal_core::{ProblemSpec, Sign, SolverError};

const OUT_ENV: &str = "NODAL_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "nodal", version, about = "Radial nodal solutions of -Δ_p u + |u|^{p-2}u = f(|x|, u)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimize the energy over profiles with k sign changes.
    Solve(SolveArgs),
    /// Amplitude sweep and shooting bisection for a k-node profile.
    Oracle(OracleArgs),
    /// Print the sampled structural conditions on f.
    Check(SpecArgs),
}

#[derive(Args, Debug)]
struct SpecArgs {
    /// Problem as JSON; the flags below are ignored when given.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Exponent of one term `λ|u|^{q-2}u`; repeat for several terms.
    #[arg(long = "q", value_name = "Q")]
    q: Vec<f64>,
    /// Coefficient paired with each `--q` (default 1).
    #[arg(long = "lambda", value_name = "LAMBDA")]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 40.0)]
    rmax: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Leading {
    Plus,
    Minus,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Solver settings as JSON; explicit flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    /// Residual tolerance per annulus.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Leading::Plus)]
    leading: Leading,
    #[arg(long, env = OUT_ENV, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long)]
    amin: f64,
    #[arg(long)]
    amax: f64,
    /// Relative bracket width at which bisection stops.
    #[arg(long)]
    tol: Option<f64>,
    /// Stop a shot once `|u|` and `|w|` fall below this; zero integrates to r_max.
    #[arg(long, default_value_t = 1e-8)]
    decay_tol: f64,
    /// Amplitudes in the diagnostic sweep.
    #[arg(long, default_value_t = 41)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Extended)]
    precision: PrecisionArg,
    #[arg(long, env = OUT_ENV, default_value = "out")]
    out: PathBuf,
}

/// Failures before any numerics ran exit with 1, numerical ones with 2.
enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn build_spec(args: &SpecArgs) -> anyhow::Result<ProblemSpec> {
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    if args.q.is_empty() {
        bail!("at least one --q is required");
    }
    let lambdas = match args.lambda.len() {
        0 => vec![1.0; args.q.len()],
        n if n == args.q.len() => args.lambda.clone(),
        n => bail!("{n} --lambda values for {} --q values", args.q.len()),
    };
    let terms = args.q.iter().zip(lambdas).map(|(&q, l)| Term::new(l, q)).collect();
    ProblemSpec::new(args.p, args.dim, args.rmax, NonlinearitySpec { terms }).map_err(|e| {
        let window = critical_exponent(args.p, args.dim);
        anyhow::Error::new(e).context(format!("admissible exponents lie in ({}, {window})", args.p))
    })
}

fn build_config(args: &SolveArgs) -> anyhow::Result<SolverConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SolverConfig::default(),
    };
    if let Some(grid) = args.grid {
        config.grid = grid;
    }
    if let Some(tol) = args.tol {
        config.grad_tol = tol;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.out_dir = args.out.clone();
    config.validate()?;
    Ok(config)
}

fn run_solve(args: &SolveArgs) -> Result<(), Failure> {
    let spec = build_spec(&args.spec)?;
    let config = build_config(args)?;
    let leading = match args.leading {
        Leading::Plus => Sign::Plus,
        Leading::Minus => Sign::Minus,
    };
    let mut report = RunReport::new(&spec, &config);
    let start = Instant::now();
    let result = minimize_nodes(&spec, args.k, leading, &config);
    report.timing.solve_seconds = start.elapsed().as_secs_f64();
    let (profile, failure) = match result {
        Ok(solution) => {
            let summary = SolutionReport::new(&spec, &solution, &config).map_err(numerical)?;
            report.converged = summary.converged;
            println!(
                "k = {}  c_k = {:.12}  nodes = {:?}  residual = {:.3e}  converged = {}",
                summary.k, summary.c_k, summary.nodes, summary.glued_residual, summary.converged
            );
            report.solution = Some(summary);
            let failure = (!report.converged).then(|| anyhow::anyhow!("solution did not meet the tolerances"));
            (Some(solution.glued), failure)
        }
        Err(e) => {
            report.error = Some(e.to_string());
            (None, Some(anyhow::Error::new(e)))
        }
    };
    let paths = write_outputs(&config.out_dir, &report, profile.as_ref(), None).map_err(usage)?;
    println!("wrote {}", paths.report.display());
    match failure {
        Some(e) => Err(Failure::Numerical(e)),
        None => Ok(()),
    }
}

fn run_oracle(args: &OracleArgs) -> Result<(), Failure> {
    let spec = build_spec(&args.spec)?;
    let mut shoot = match args.precision {
        PrecisionArg::Extended => ShootConfig::extended(),
        PrecisionArg::Double => ShootConfig::default(),
    };
    if let Some(tol) = args.tol {
        shoot.bisect_rel_width = tol;
    }
    shoot.decay_tol = args.decay_tol;
    shoot.validate().map_err(usage)?;
    if args.samples < 2 {
        return Err(Failure::Usage(anyhow::anyhow!("--samples must be at least 2")));
    }
    let mut report = RunReport::new(&spec, &SolverConfig::default());
    report.shoot_config = Some(shoot.clone());
    let start = Instant::now();
    let mut csv = None;
    if args.amin < args.amax {
        let rows = sweep(&spec, args.amin, args.amax, args.samples, &shoot).map_err(numerical)?;
        csv = Some(sweep_csv(&rows));
        report.sweep = rows;
    }
    let result = find_k_node_profile(&spec, args.k, (args.amin, args.amax), &shoot);
    report.timing.oracle_seconds = start.elapsed().as_secs_f64();
    let failure = match result {
        Ok(oracle) => {
            println!(
                "k = {}  a* = {:.16}  energy = {:.12}  nodes = {:?}  {}",
                oracle.k,
                oracle.amplitude,
                oracle.energy,
                oracle.nodes(),
                oracle.trajectory.terminal_behavior
            );
            report.oracle = Some(OracleReport::new(&oracle, None));
            report.converged = true;
            None
        }
        Err(e) => {
            report.error = Some(e.to_string());
            Some(anyhow::Error::new(e))
        }
    };
    let paths = write_outputs(&args.out, &report, None, csv.as_deref()).map_err(usage)?;
    println!("wrote {}", paths.report.display());
    if let Some(path) = paths.sweep_csv {
        println!("wrote {}", path.display());
    }
    match failure {
        Some(e) => Err(Failure::Numerical(e)),
        None => Ok(()),
    }
}

fn run_check(args: &SpecArgs) -> Result<(), Failure> {
    let spec = build_spec(args)?;
    let report = check_assumptions(&spec, &ScanGrid::default()).map_err(usage)?;
    print!("{report}");
    match report.ar_mu {
        Some(mu) => println!("AR exponent mu = {mu}"),
        None => println!("AR exponent: none above p"),
    }
    println!("critical exponent p* = {}", spec.critical_exponent());
    Ok(())
}

fn usage(e: SolverError) -> Failure {
    Failure::Usage(e.into())
}

fn numerical(e: SolverError) -> Failure {
    Failure::Numerical(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Check(args) => run_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
