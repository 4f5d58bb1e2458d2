use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use varfrac::config::ProblemConfig;
use varfrac::energy::{EnergyBreakdown, EnergyError, Problem};
use varfrac::fields::{check_hypotheses, Potential};
use varfrac::kernel::Region;
use varfrac::report::{sweep_csv, write_profile};
use varfrac::solvers::{deflated_search, lambda_sweep, solve_both, DeflationOptions, SolverError};
use varfrac::spaces::luxemburg_norm;

/// Environment variable overriding the number of assembly worker threads.
const THREADS_ENV: &str = "VARFRAC_THREADS";

#[derive(Parser)]
#[command(name = "varfrac", version, about = "Variable-order fractional q(.)-Laplacian solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing hypotheses on the exponent fields and the potential.
    Check(Common),
    /// Norms and modulars of the default test function.
    Norm(Common),
    /// Energy breakdown and residual of the default test function.
    Energy(Common),
    /// Mountain-pass geometry constants.
    Geometry(Common),
    /// Mountain-pass and negative-energy solutions.
    Solve(Common),
    /// Warm-started solves over a list of λ values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        lambda_list: Vec<f64>,
    },
    /// Several distinct solutions of the limit problem by deflation.
    Multi {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory for CSV artifacts (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override λ from the config.
    #[arg(long)]
    lambda: Option<f64>,
}

enum Failure {
    Validation(String),
    Solver(String),
}

impl From<EnergyError> for Failure {
    fn from(e: EnergyError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Energy(e) => e.into(),
            SolverError::NotDistinct(msg) => Failure::Validation(msg),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

struct Loaded {
    cfg: ProblemConfig,
    out: PathBuf,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let mut cfg = ProblemConfig::load(&common.config).map_err(|e| Failure::Validation(e.to_string()))?;
    if let Some(l) = common.lambda {
        cfg.lambda = l;
    }
    cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok(Loaded { cfg, out })
}

fn emit<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    // a closed pipe downstream is not an error of ours
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn out_dir(dir: &Path) -> Result<&Path, Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct NormReport {
    modular_omega: f64,
    modular_full: f64,
    seminorm_omega: f64,
    seminorm_full: f64,
    luxemburg_p: f64,
    luxemburg_k: f64,
    l2: f64,
}

#[derive(Serialize)]
struct EnergyReport {
    energy: EnergyBreakdown,
    residual_norm: f64,
    nonsmooth_source: bool,
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Check(common) => {
            let Loaded { cfg, .. } = load(&common)?;
            let f = cfg.fields().map_err(|e| Failure::Validation(e.to_string()))?;
            let v = Potential::new(f.v, cfg.zeta_tol, cfg.scan_resolution)
                .map_err(|e| Failure::Validation(e.to_string()))?;
            let report = check_hypotheses(&f.p, &f.q, &f.s, &f.k, &v, cfg.n, cfg.scan_resolution)
                .map_err(|e| Failure::Validation(e.to_string()))?;
            emit(&report);
            if !report.all_pass() {
                let names: Vec<&str> = report.failures().iter().map(|e| e.name.as_str()).collect();
                return Err(Failure::Validation(format!("hypotheses fail: {}", names.join(", "))));
            }
        }
        Command::Norm(common) => {
            let Loaded { cfg, .. } = load(&common)?;
            let pb = Problem::from_config(&cfg)?;
            let u = pb.default_w0()?;
            let kq = &pb.kernel;
            let err = |e: varfrac::kernel::KernelError| Failure::from(EnergyError::from(e));
            let report = NormReport {
                modular_omega: kq.modular(&u, Region::Omega).map_err(err)?,
                modular_full: kq.modular(&u, Region::FullPlane).map_err(err)?,
                seminorm_omega: kq.seminorm(&u, Region::Omega).map_err(err)?,
                seminorm_full: kq.seminorm(&u, Region::FullPlane).map_err(err)?,
                luxemburg_p: luxemburg_norm(&u, &pb.p).map_err(|e| Failure::from(EnergyError::from(e)))?,
                luxemburg_k: luxemburg_norm(&u, &pb.k).map_err(|e| Failure::from(EnergyError::from(e)))?,
                l2: u.l2_norm(),
            };
            emit(&report);
        }
        Command::Energy(common) => {
            let Loaded { cfg, .. } = load(&common)?;
            let pb = Problem::from_config(&cfg)?;
            let u = pb.default_w0()?;
            let g = pb.gradient(&u)?;
            emit(&EnergyReport {
                energy: pb.energy(&u)?,
                residual_norm: g.max_abs(),
                nonsmooth_source: g.nonsmooth_source,
            });
        }
        Command::Geometry(common) => {
            let Loaded { cfg, .. } = load(&common)?;
            let pb = Problem::from_config(&cfg)?;
            emit(&pb.default_geometry()?);
        }
        Command::Solve(common) => {
            let Loaded { cfg, out } = load(&common)?;
            let pb = Problem::from_config(&cfg)?;
            let sol = solve_both(&pb, &cfg.solver)?;
            let dir = out_dir(&out)?;
            write_profile(&dir.join("saddle.csv"), &sol.saddle.solution)?;
            write_profile(&dir.join("minimizer.csv"), &sol.minimizer.solution)?;
            emit(&sol);
            if !sol.ok {
                return Err(Failure::Solver(format!(
                    "solutions did not converge to a distinct pair (saddle: {:?}, minimizer: {:?})",
                    sol.saddle.diagnostic, sol.minimizer.diagnostic
                )));
            }
        }
        Command::Sweep { common, lambda_list } => {
            let Loaded { cfg, out } = load(&common)?;
            let pb = Problem::from_config(&cfg)?;
            let records = lambda_sweep(&pb, &cfg.solver, &lambda_list)?;
            let dir = out_dir(&out)?;
            std::fs::write(dir.join("sweep.csv"), sweep_csv(&records))?;
            emit(&records);
        }
        Command::Multi { common, count } => {
            let Loaded { cfg, out } = load(&common)?;
            let pb = Problem::from_config(&cfg)?;
            let lim = pb.limit_problem()?;
            let reports = deflated_search(&lim, count, &cfg.solver, &DeflationOptions::default())?;
            let dir = out_dir(&out)?;
            for (i, r) in reports.iter().enumerate() {
                write_profile(&dir.join(format!("solution_{i}.csv")), &r.solution)?;
            }
            emit(&reports);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors are validation failures; 2 is reserved for non-convergence
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {n:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver did not converge: {msg}");
            ExitCode::from(2)
        }
    }
}
