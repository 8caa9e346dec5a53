//! Problem construction, solver dispatch and result files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sobo::problems::{
    inner_solve, make_exp_ridge_tuning, make_hypercleaning, make_quadratic_bilevel, make_synthetic_minimax,
    synthetic_logistic, synthetic_multinomial, BilevelOracle, Hypercleaning, MinimaxAsBilevel, MinimaxOracle,
    SparseMatrix, SyntheticMinimax, Vector,
};
use sobo::solvers::{
    f2ba_run, fsba_run, gda_run, ifsba_run, lfsba_run, lmcn_run, sosp_check, sosp_check_minimax, RunOutput,
    SolverConfig, SospVerdict,
};
use sobo::telemetry::CounterSnapshot;

use crate::config::{ExperimentConfig, ProblemSpec, SolverName, SolverSpec};
use crate::csv::emit_csv;
use crate::error::{CliError, Result};
use crate::libsvm::parse_libsvm;
use crate::output::write_atomic;

pub enum ProblemKind {
    Bilevel(Box<dyn BilevelOracle>),
    Minimax(SyntheticMinimax),
    /// Kept concrete for the validation-loss metric.
    Hypercleaning(Box<Hypercleaning>),
}

pub struct Problem {
    pub kind: ProblemKind,
    pub x0: Vector,
}

impl Problem {
    pub fn with_bilevel<T>(&self, f: impl FnOnce(&dyn BilevelOracle) -> T) -> T {
        match &self.kind {
            ProblemKind::Bilevel(b) => f(b.as_ref()),
            ProblemKind::Hypercleaning(h) => f(h.as_ref()),
            ProblemKind::Minimax(s) => f(&MinimaxAsBilevel(s)),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.with_bilevel(|o| o.dims())
    }

    pub fn params(&self) -> sobo::problems::SmoothnessParams {
        self.with_bilevel(|o| o.params())
    }

    fn minimax(&self) -> Option<&dyn MinimaxOracle> {
        match &self.kind {
            ProblemKind::Minimax(s) => Some(s),
            _ => None,
        }
    }
}

fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn initial_point(x0: Option<&[f64]>, d_x: usize) -> Result<Vector> {
    match x0 {
        None => Ok(Vector::zeros(d_x)),
        Some([v]) => Ok(Vector::from_element(d_x, *v)),
        Some(v) if v.len() == d_x => Ok(Vector::from_column_slice(v)),
        Some(v) => Err(CliError::Config(format!("x0 has {} entries, expected 1 or {d_x}", v.len()))),
    }
}

/// Seeded split into `(train, validation)` row indices.
fn split_rows(n: usize, val_split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = (val_split * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(CliError::Data(format!("val_split {val_split} leaves an empty split of {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = idx.split_off(n_val);
    Ok((train, idx))
}

pub fn build_problem(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Problem> {
    let seed = cfg.problem_seed();
    match &cfg.problem {
        ProblemSpec::Quadratic(q) => {
            let p = make_quadratic_bilevel(seed, q.d_x, q.d_y, q.cond)?;
            let x0 = initial_point(q.x0.as_deref(), q.d_x)?;
            Ok(Problem {
                kind: ProblemKind::Bilevel(Box::new(p)),
                x0,
            })
        }
        ProblemSpec::SyntheticMinimax(s) => {
            let p = make_synthetic_minimax(s.eps, s.l)?;
            let x0 = initial_point(Some(&s.x0), 3)?;
            Ok(Problem {
                kind: ProblemKind::Minimax(p),
                x0,
            })
        }
        ProblemSpec::Hypercleaning(h) => {
            let (a, b) = match &h.data {
                Some(path) => {
                    let data = parse_libsvm(&resolve(base_dir, path))?;
                    if data.classes() != 2 {
                        return Err(CliError::Data(format!(
                            "hypercleaning needs binary labels, found {} classes",
                            data.classes()
                        )));
                    }
                    let b = data.labels.iter().map(|&l| l as f64).collect();
                    (data.features, b)
                }
                None => synthetic_logistic(h.n, h.features, seed),
            };
            let p = make_hypercleaning(&a, &b, h.val_split, h.p, h.c, seed)?;
            let x0 = initial_point(h.x0.as_deref(), p.n_train())?;
            Ok(Problem {
                kind: ProblemKind::Hypercleaning(Box::new(p)),
                x0,
            })
        }
        ProblemSpec::ExpRidge(e) => {
            let (a, b): (SparseMatrix, Vec<usize>) = match &e.data {
                Some(path) => {
                    let data = parse_libsvm(&resolve(base_dir, path))?;
                    (data.features, data.labels)
                }
                None => synthetic_multinomial(e.n, e.features, e.classes, seed),
            };
            let (tr, val) = split_rows(a.nrows(), e.val_split, seed)?;
            let pick = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| b[i]).collect() };
            let (a_tr, b_tr) = (a.select_rows(&tr), pick(&tr));
            let (a_val, b_val) = (a.select_rows(&val), pick(&val));
            let p = make_exp_ridge_tuning((&a_tr, &b_tr), (&a_val, &b_val))?;
            let x0 = initial_point(e.x0.as_deref(), a.ncols())?;
            Ok(Problem {
                kind: ProblemKind::Bilevel(Box::new(p)),
                x0,
            })
        }
    }
}

/// Solver settings for `spec` on `problem`, with every check that can fail
/// before any work starts.
pub fn solver_config(spec: &SolverSpec, problem: &Problem, seed: u64) -> Result<SolverConfig> {
    if spec.name.is_minimax() && problem.minimax().is_none() {
        return Err(CliError::Config(format!("{} needs a minimax problem", spec.name.as_str())));
    }
    let params = problem.params();
    let mut cfg = SolverConfig::theory(params, spec.eps, spec.big_m, spec.delta_phi.unwrap_or(1.0), spec.m);
    if let Some(v) = spec.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = spec.t_max {
        cfg.t_max = v;
    }
    if let Some(v) = spec.delta {
        cfg.delta = v;
    }
    cfg.eps_tilde_override = spec.eps_tilde;
    cfg.l_override = spec.l;
    cfg.rho_bar_override = spec.rho_bar;
    cfg.r0 = spec.r0;
    cfg.cost_budget = spec.cost_budget;
    cfg.seed = seed;
    cfg.ifsba = spec.ifsba.clone();
    cfg.validate()?;
    let uses_lambda = !spec.name.is_minimax();
    let min_lambda = 2.0 * params.ell / params.mu;
    if uses_lambda && cfg.lambda < min_lambda * (1.0 - 1e-12) {
        return Err(CliError::Config(format!(
            "{}: lambda = {} is below 2ℓ/μ = {min_lambda}",
            spec.name.as_str(),
            cfg.lambda
        )));
    }
    if matches!(spec.name, SolverName::Fsba | SolverName::Ifsba) && spec.m != 1 {
        return Err(CliError::Config(format!("{} refreshes every iteration; m must be 1", spec.name.as_str())));
    }
    for (what, v) in [("step_size", spec.step_size), ("eta_x", spec.eta_x), ("eta_y", spec.eta_y)] {
        if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
            return Err(CliError::Config(format!("{what} must be positive")));
        }
    }
    Ok(cfg)
}

pub fn run_solver(spec: &SolverSpec, problem: &Problem, cfg: &SolverConfig) -> Result<RunOutput> {
    let x0 = &problem.x0;
    let out = match spec.name {
        SolverName::Lmcn | SolverName::Gda => {
            let mm = problem.minimax().expect("checked in solver_config");
            if spec.name == SolverName::Lmcn {
                lmcn_run(mm, x0, cfg)
            } else {
                let p = mm.params();
                let eta_x = spec.eta_x.unwrap_or(1.0 / (16.0 * (p.kappa + 1.0).powi(2) * p.ell));
                let eta_y = spec.eta_y.unwrap_or(1.0 / p.ell);
                gda_run(mm, x0, cfg, eta_x, eta_y)
            }
        }
        name => problem.with_bilevel(|o| match name {
            SolverName::Fsba => fsba_run(o, x0, cfg),
            SolverName::Lfsba => lfsba_run(o, x0, cfg),
            SolverName::Ifsba => ifsba_run(o, x0, cfg),
            SolverName::F2ba => f2ba_run(o, x0, cfg, spec.step_size.expect("checked in validate")),
            _ => unreachable!(),
        }),
    };
    Ok(out?)
}

/// One line of `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub solver: &'static str,
    pub index: usize,
    pub repeat: usize,
    pub seed: u64,
    pub trace_file: String,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
    pub expect_convergence: bool,
    pub final_grad_norm: Option<f64>,
    pub sosp: Option<SospVerdict>,
    pub total_cost: f64,
    pub counters: CounterSnapshot,
    pub hessian_evals: usize,
    pub lambda: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub eps: f64,
    pub eps_tilde: f64,
    pub x_hat: Vec<f64>,
    /// Problem-specific scalars: `phi`, `w_x3`, `val_loss`.
    pub metrics: BTreeMap<String, f64>,
    pub wall_time: Option<f64>,
}

impl RunSummary {
    pub fn ok(&self) -> bool {
        !self.expect_convergence || (self.converged && self.failure.is_none())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub config_hash: String,
    pub runs: Vec<RunSummary>,
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    spec: &SolverSpec,
    problem: &Problem,
    cfg: &SolverConfig,
    out: &RunOutput,
    index: usize,
    repeat: usize,
    trace_file: String,
    record_wall_time: bool,
) -> RunSummary {
    let x = &out.x_hat;
    let sosp = match problem.minimax() {
        Some(mm) => sosp_check_minimax(mm, x, spec.eps, cfg.big_m, spec.sosp_slack),
        None => problem.with_bilevel(|o| sosp_check(o, x, spec.eps, cfg.big_m, spec.sosp_slack)),
    };
    let sosp = sosp
        .map_err(|e| log::warn!("{}: ground-truth check failed: {e}", spec.name.as_str()))
        .ok();
    let mut metrics = BTreeMap::new();
    match &problem.kind {
        ProblemKind::Minimax(s) => {
            metrics.insert("w_x3".into(), s.w(x[2]));
        }
        ProblemKind::Hypercleaning(h) => {
            let (_, dy) = h.dims();
            if let Ok(y) = inner_solve(h.as_ref(), x, &Vector::zeros(dy), 1e-10) {
                metrics.insert("val_loss".into(), h.val_loss(&y));
            }
        }
        ProblemKind::Bilevel(b) => {
            if let Some(cf) = b.closed_form() {
                metrics.insert("phi".into(), cf.phi(x));
            }
        }
    }
    RunSummary {
        solver: spec.name.as_str(),
        index,
        repeat,
        seed: cfg.seed,
        trace_file,
        iterations: out.iterations(),
        converged: out.converged,
        failure: out.failure.clone(),
        expect_convergence: spec.expect_convergence,
        final_grad_norm: sosp.as_ref().map(|v| v.grad_norm),
        sosp,
        total_cost: out.counters.total_cost(),
        counters: out.counters,
        hessian_evals: out.hessian_evals,
        lambda: out.lambda,
        big_m: out.big_m,
        eps: spec.eps,
        eps_tilde: out.eps_tilde,
        x_hat: x.iter().copied().collect(),
        metrics,
        wall_time: record_wall_time.then(|| out.trace.last().map_or(0.0, |r| r.wall_time)),
    }
}

/// Everything `run` needs, validated up front.
pub struct Plan {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub solver_configs: Vec<SolverConfig>,
    pub dir: PathBuf,
    pub hash: String,
}

pub fn plan(cfg: &ExperimentConfig, base_dir: &Path, root: &Path) -> Result<Plan> {
    cfg.validate()?;
    let problem = build_problem(cfg, base_dir)?;
    let solver_configs = cfg
        .solvers
        .iter()
        .enumerate()
        .map(|(i, s)| {
            solver_config(s, &problem, cfg.solver_seed(i)).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("solver {i}: {m}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Plan {
        config: cfg.clone(),
        problem,
        solver_configs,
        dir: cfg.output_dir(root),
        hash: cfg.hash(),
    })
}

pub enum Status {
    Completed(ExperimentSummary),
    /// A summary for this config hash already exists.
    UpToDate { failed: Vec<String> },
}

impl Status {
    /// Runs that were expected to converge and did not.
    pub fn failed(&self) -> Vec<String> {
        match self {
            Status::Completed(s) => s
                .runs
                .iter()
                .filter(|r| !r.ok())
                .map(|r| format!("{}#{} (repeat {})", r.solver, r.index, r.repeat))
                .collect(),
            Status::UpToDate { failed } => failed.clone(),
        }
    }
}

fn existing_failures(path: &Path) -> Option<Vec<String>> {
    let text = std::fs::read_to_string(path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    let runs = v.get("runs")?.as_array()?;
    Some(
        runs.iter()
            .filter(|r| {
                let expect = r["expect_convergence"].as_bool().unwrap_or(true);
                let ok = r["converged"].as_bool().unwrap_or(false) && r["failure"].is_null();
                expect && !ok
            })
            .map(|r| format!("{}#{} (repeat {})", r["solver"].as_str().unwrap_or("?"), r["index"], r["repeat"]))
            .collect(),
    )
}

/// Runs every solver × repeat of `plan`, in parallel over at most `threads`
/// workers. Skips the work when `summary.json` already exists unless `force`.
pub fn execute(plan: &Plan, threads: usize, force: bool) -> Result<Status> {
    let summary_path = plan.dir.join("summary.json");
    if !force {
        if let Some(failed) = existing_failures(&summary_path) {
            log::info!("{} is up to date", plan.dir.display());
            return Ok(Status::UpToDate { failed });
        }
    }
    let cfg = &plan.config;
    let jobs: Vec<(usize, usize)> = (0..cfg.solvers.len())
        .flat_map(|i| (0..cfg.repeat).map(move |r| (i, r)))
        .collect();
    let results: Mutex<Vec<Option<Result<RunSummary>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, r)) = jobs.get(k) else { break };
                let res = run_job(plan, i, r);
                results.lock().unwrap()[k] = Some(res);
            });
        }
    });
    let runs = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;
    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        config_hash: plan.hash.clone(),
        runs,
    };
    write_atomic(&plan.dir.join("config.json"), pretty(&serde_json::from_str::<serde_json::Value>(&cfg.canonical_json()).unwrap()).as_bytes())?;
    write_atomic(&summary_path, pretty(&summary).as_bytes())?;
    Ok(Status::Completed(summary))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run_job(plan: &Plan, i: usize, repeat: usize) -> Result<RunSummary> {
    let spec = &plan.config.solvers[i];
    let cfg = &plan.solver_configs[i];
    log::info!("running {}#{i} repeat {repeat}", spec.name.as_str());
    let out = run_solver(spec, &plan.problem, cfg)
        .map_err(|e| match e {
            CliError::Solver(m) => CliError::Solver(format!("{}#{i}: {m}", spec.name.as_str())),
            other => other,
        })?;
    let file = format!("{i:02}-{}-r{repeat}.csv", spec.name.as_str());
    emit_csv(&out.trace, &plan.dir.join(&file), plan.config.record_wall_time)?;
    Ok(summarize(
        spec,
        &plan.problem,
        cfg,
        &out,
        i,
        repeat,
        file,
        plan.config.record_wall_time,
    ))
}
