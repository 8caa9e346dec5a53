use super::{lazy_stop, Recorder, RunOutput, SolverConfig};
use crate::agd::{agd_run, schedule_k, AgdConfig, ScheduleState};
use crate::cubic::{cubic_solve_exact, CubicModel};
use crate::error::invalid;
use crate::estimators::{minimax_grad, minimax_hess};
use crate::problems::{inner_solve, Matrix, MinimaxAsBilevel, MinimaxOracle, Vector};
use crate::telemetry::{CountedMinimax, OracleCounter};
use crate::Result;

/// `4√2κ³ρ`: Hessian-Lipschitz constant of `φ` for minimax problems.
pub fn minimax_rho_bar(kappa: f64, rho: f64) -> f64 {
    4.0 * std::f64::consts::SQRT_2 * kappa.powi(3) * rho
}

/// Lazy minimax cubic Newton: AGD on `−f(x_t, ·)`, gradient `∇_x f(x_t, y_t)`,
/// Schur-complement Hessian refreshed every `m` iterations, exact cubic steps.
pub fn lmcn_run(oracle: &dyn MinimaxOracle, x0: &Vector, cfg: &SolverConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (dx, dy) = oracle.dims();
    if x0.len() != dx {
        return Err(invalid(format!("x0 has length {}, expected {dx}", x0.len())));
    }
    let counter = OracleCounter::new(dx.max(dy));
    let counted = CountedMinimax::new(oracle, &counter);
    let p = cfg.params;
    let et = cfg.eps_tilde_override.unwrap_or_else(|| {
        let a = cfg.eps / (576.0 * p.ell);
        let b = if p.rho > 0.0 {
            (cfg.big_m * cfg.eps).sqrt() / (288.0 * p.rho)
        } else {
            f64::INFINITY
        };
        a.min(b)
    });
    let rho_bar = cfg.rho_bar_override.unwrap_or_else(|| minimax_rho_bar(p.kappa, p.rho));
    let r0 = match cfg.r0 {
        Some(r) => r,
        None => match oracle.closed_form() {
            Some(cf) => cf.y_star(x0).norm(),
            None => inner_solve(&MinimaxAsBilevel(oracle), x0, &Vector::zeros(dy), 1e-8)?.norm(),
        },
    };
    let st = ScheduleState {
        eps_tilde: et,
        r: r0,
        kappa_inner: p.kappa,
        coupling: p.kappa,
    };

    let mut rec = Recorder::new(&counter);
    let mut x = x0.clone();
    let mut y = Vector::zeros(dy);
    let mut prev_step: Option<f64> = None;
    let mut h_snap: Option<Matrix> = None;
    let mut x_snap = x0.clone();
    let mut out = RunOutput {
        x_hat: x0.clone(),
        converged: false,
        failure: None,
        trace: Vec::new(),
        steps: Vec::new(),
        iterates: Vec::new(),
        inner: Vec::new(),
        hessian_evals: 0,
        counters: Default::default(),
        lambda: 0.0,
        big_m: cfg.big_m,
        eps_tilde: et,
    };

    for t in 0..cfg.t_max {
        let k = schedule_k(t, prev_step, &st)?;
        y = agd_run(|z| -counted.grad_f_y(&x, z), &y, &AgdConfig::strongly_convex(p.ell, p.kappa, k))?;
        let g = minimax_grad(&counted, &x, &y);
        if t % cfg.m == 0 || h_snap.is_none() {
            h_snap = Some(minimax_hess(&counted, &x, &y)?);
            x_snap = x.clone();
            out.hessian_evals += 1;
        }
        let model = CubicModel::dense(g.clone(), h_snap.clone().expect("snapshot set above"), cfg.big_m)?;
        let s = cubic_solve_exact(&model)?.s;
        let sn = s.norm();
        rec.push(t, sn, g.norm(), None, t - t % cfg.m, k, 0);
        out.iterates.push(x.clone());
        out.inner.push((y.clone(), Vector::zeros(0)));
        out.steps.push(s.clone());
        let anchor = (&x_snap - &x).norm();
        x += &s;
        prev_step = Some(sn);
        if lazy_stop(cfg.eps, cfg.big_m, rho_bar, sn, anchor) {
            out.converged = true;
            break;
        }
        if rec.over_budget(cfg.cost_budget) {
            break;
        }
    }
    out.x_hat = x.clone();
    out.iterates.push(x);
    out.trace = rec.trace;
    out.counters = counter.snapshot();
    Ok(out)
}
