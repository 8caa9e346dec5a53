use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sobo_cli::output::output_root;
use sobo_cli::{execute, plan, CliError, ExperimentConfig, Overrides, Status};

#[derive(Parser)]
#[command(name = "sobo", version, about = "Run second-order bilevel and minimax experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver in the config and write traces plus summary.json.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run the config once per point of a named hyperparameter grid.
    Sweep {
        config: PathBuf,
        /// Grid preset: f3 or f3-lazy.
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Validate the config and data without running anything.
    Check {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Rerun even if outputs for this config hash exist.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    eps: Option<f64>,
    /// Cubic regularization weight M.
    #[arg(long = "big-m")]
    big_m: Option<f64>,
    /// Hessian refresh period.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            eps: a.eps,
            big_m: a.big_m,
            m: a.m,
            lambda: a.lambda,
            t_max: a.t_max,
            seed: a.seed,
        }
    }
}

fn load(path: &Path, overrides: &OverrideArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    Overrides::from(overrides).apply(&mut cfg);
    cfg.validate()?;
    let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((cfg, base))
}

fn threads(opt: Option<usize>) -> usize {
    opt.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let root = output_root();
    match cli.command {
        Command::Check { config, overrides } => {
            let (cfg, base) = load(&config, &overrides)?;
            let p = plan(&cfg, &base, &root)?;
            let (dx, dy) = p.problem.dims();
            println!("config hash {}", p.hash);
            println!("output {}", p.dir.display());
            println!("problem d_x={dx} d_y={dy}");
            for (s, c) in cfg.solvers.iter().zip(&p.solver_configs) {
                println!(
                    "  {:<6} eps={:e} M={:e} m={} lambda={:e} t_max={} seed={}",
                    s.name.as_str(),
                    c.eps,
                    c.big_m,
                    c.m,
                    c.lambda,
                    c.t_max,
                    c.seed
                );
            }
            Ok(())
        }
        Command::Run { config, opts } => {
            let (cfg, base) = load(&config, &opts.overrides)?;
            let p = plan(&cfg, &base, &root)?;
            let status = execute(&p, threads(opts.threads), opts.force)?;
            if let Status::Completed(s) = &status {
                for r in &s.runs {
                    println!(
                        "{}#{} r{}: {} iters, cost {:.6e}, grad {}, converged {}",
                        r.solver,
                        r.index,
                        r.repeat,
                        r.iterations,
                        r.total_cost,
                        r.final_grad_norm.map_or("n/a".into(), |g| format!("{g:.3e}")),
                        r.converged
                    );
                }
            } else {
                println!("up to date");
            }
            println!("{}", p.dir.display());
            let failed = status.failed();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::NotConverged(failed))
            }
        }
        Command::Sweep { config, grid, opts } => {
            let (cfg, base) = load(&config, &opts.overrides)?;
            let points = sobo_cli::sweep::sweep(&cfg, &grid, &base, &root, threads(opts.threads), opts.force)?;
            for p in &points {
                println!("{:<28} {:<10} {}", p.label, p.status, &p.config_hash[..16]);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
