use super::{initial_radius, lazy_stop, Recorder, RunOutput, SolverConfig};
use crate::agd::{agd_run, schedule_k, AgdConfig, ScheduleState};
use crate::cubic::{cubic_solve_exact, CubicModel};
use crate::estimators::{grad_estimate, hess_estimate, lagrangian_inner_oracle, LagrangianContext};
use crate::error::invalid;
use crate::problems::{BilevelOracle, Matrix, Vector};
use crate::telemetry::{CountedBilevel, OracleCounter};
use crate::Result;

const FSBA_C_G: f64 = 1.0 / 192.0;
const FSBA_C_H: f64 = 1.0 / 48.0;
const LFSBA_C_G: f64 = 1.0 / 576.0;
const LFSBA_C_H: f64 = 1.0 / 288.0;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Fsba,
    Lfsba,
}

/// Fully second-order bilevel approximation: exact cubic-regularized Newton
/// steps on `L*_λ` with a fresh hyper-Hessian estimate every iteration.
/// Stops once `‖s_t‖ ≤ ½√(ε/M)`, returning `x_t + s_t`.
pub fn fsba_run(oracle: &dyn BilevelOracle, x0: &Vector, cfg: &SolverConfig) -> Result<RunOutput> {
    run(oracle, x0, cfg, Mode::Fsba)
}

/// FSBA with the hyper-Hessian refreshed only at `t ≡ 0 (mod m)` and reused
/// in between. Stops when the lazy stopping inequality holds.
pub fn lfsba_run(oracle: &dyn BilevelOracle, x0: &Vector, cfg: &SolverConfig) -> Result<RunOutput> {
    run(oracle, x0, cfg, Mode::Lfsba)
}

/// `min{C_g ε/(4λℓ̄), C_H√(Mε)/(2C₂)}`.
fn eps_tilde(ctx: &LagrangianContext<'_>, cfg: &SolverConfig, c_g: f64, c_h: f64) -> f64 {
    let a = c_g * cfg.eps / (4.0 * ctx.lambda * ctx.params.ell_bar);
    let b = if ctx.c2 > 0.0 {
        c_h * (cfg.big_m * cfg.eps).sqrt() / (2.0 * ctx.c2)
    } else {
        f64::INFINITY
    };
    a.min(b)
}

fn run(oracle: &dyn BilevelOracle, x0: &Vector, cfg: &SolverConfig, mode: Mode) -> Result<RunOutput> {
    cfg.validate()?;
    let (dx, dy) = oracle.dims();
    if x0.len() != dx {
        return Err(invalid(format!("x0 has length {}, expected {dx}", x0.len())));
    }
    let counter = OracleCounter::new(dx.max(dy));
    let counted = CountedBilevel::new(oracle, &counter);
    let ctx = LagrangianContext::new(&counted, cfg.lambda, cfg.params, cfg.l_override, cfg.rho_bar_override)?;
    let (c_g, c_h) = match mode {
        Mode::Fsba => (FSBA_C_G, FSBA_C_H),
        Mode::Lfsba => (LFSBA_C_G, LFSBA_C_H),
    };
    let m_period = if mode == Mode::Fsba { 1 } else { cfg.m };
    let et = cfg.eps_tilde_override.unwrap_or_else(|| eps_tilde(&ctx, cfg, c_g, c_h));
    let r0 = match cfg.r0 {
        Some(r) => r,
        None => initial_radius(oracle, x0, cfg.lambda)?,
    };
    let p = cfg.params;
    let st = ScheduleState {
        eps_tilde: et,
        r: r0,
        kappa_inner: ctx.kappa2(),
        coupling: 4.0 * p.kappa,
    };
    let stop_radius = 0.5 * (cfg.eps / cfg.big_m).sqrt();
    let closed = oracle.closed_form();

    let mut rec = Recorder::new(&counter);
    let mut x = x0.clone();
    let mut y = Vector::zeros(dy);
    let mut w = Vector::zeros(dy);
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
        lambda: cfg.lambda,
        big_m: cfg.big_m,
        eps_tilde: et,
    };

    for t in 0..cfg.t_max {
        let k = schedule_k(t, prev_step, &st)?;
        w = agd_run(|z| counted.grad_g_y(&x, z), &w, &AgdConfig::strongly_convex(p.ell, p.kappa, k))?;
        y = agd_run(lagrangian_inner_oracle(&ctx, &x), &y, &AgdConfig::strongly_convex(ctx.ell2, ctx.kappa2(), k))?;
        let g = grad_estimate(&ctx, &x, &y, &w);
        if t % m_period == 0 || h_snap.is_none() {
            h_snap = Some(hess_estimate(&ctx, &x, &y, &w)?);
            x_snap = x.clone();
            out.hessian_evals += 1;
        }
        let model = CubicModel::dense(g.clone(), h_snap.clone().expect("snapshot set above"), cfg.big_m)?;
        let s = cubic_solve_exact(&model)?.s;
        let sn = s.norm();

        let lag = closed.and_then(|cf| cf.lagrangian_star(&x, cfg.lambda));
        rec.push(t, sn, g.norm(), lag, t - t % m_period, k, k);
        out.iterates.push(x.clone());
        out.inner.push((y.clone(), w.clone()));
        out.steps.push(s.clone());

        let anchor = (&x_snap - &x).norm();
        x += &s;
        let stop = match mode {
            Mode::Fsba => sn <= stop_radius,
            Mode::Lfsba => {
                let rho_bar = ctx.rho_bar;
                lazy_stop(cfg.eps, cfg.big_m, rho_bar, sn, anchor)
            }
        };
        prev_step = Some(sn);
        if stop {
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
