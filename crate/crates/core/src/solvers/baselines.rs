use super::{initial_radius, Recorder, RunOutput, SolverConfig};
use crate::agd::{agd_run, schedule_k, AgdConfig, ScheduleState};
use crate::error::invalid;
use crate::estimators::{grad_estimate, lagrangian_inner_oracle, LagrangianContext};
use crate::problems::{BilevelOracle, MinimaxOracle, Vector};
use crate::telemetry::{CountedBilevel, CountedMinimax, OracleCounter};
use crate::{Error, Result};

fn guard(x: &Vector, x0: &Vector, what: &'static str) -> Result<()> {
    let norm = x.norm();
    let limit = 1e6 * (1.0 + x0.norm());
    if !norm.is_finite() {
        return Err(Error::NonFinite(what));
    }
    if norm > limit {
        return Err(Error::Diverged {
            what,
            norm,
            guard: limit,
        });
    }
    Ok(())
}

fn empty_output(x0: &Vector, cfg: &SolverConfig, eps_tilde: f64) -> RunOutput {
    RunOutput {
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
        eps_tilde,
    }
}

/// First-order baseline: inexact gradient descent on `L*_λ` with the same
/// inner AGD machinery as FSBA. Stops at `‖g_t‖ ≤ ε`.
pub fn f2ba_run(oracle: &dyn BilevelOracle, x0: &Vector, cfg: &SolverConfig, step_size: f64) -> Result<RunOutput> {
    cfg.validate()?;
    if !(step_size > 0.0) {
        return Err(invalid("step size must be positive"));
    }
    let (dx, dy) = oracle.dims();
    if x0.len() != dx {
        return Err(invalid(format!("x0 has length {}, expected {dx}", x0.len())));
    }
    let counter = OracleCounter::new(dx.max(dy));
    let counted = CountedBilevel::new(oracle, &counter);
    let ctx = LagrangianContext::new(&counted, cfg.lambda, cfg.params, cfg.l_override, cfg.rho_bar_override)?;
    let p = cfg.params;
    let et = cfg
        .eps_tilde_override
        .unwrap_or(cfg.eps / (192.0 * 4.0 * cfg.lambda * p.ell_bar));
    let r0 = match cfg.r0 {
        Some(r) => r,
        None => initial_radius(oracle, x0, cfg.lambda)?,
    };
    let st = ScheduleState {
        eps_tilde: et,
        r: r0,
        kappa_inner: ctx.kappa2(),
        coupling: 4.0 * p.kappa,
    };
    let closed = oracle.closed_form();
    let mut rec = Recorder::new(&counter);
    let mut out = empty_output(x0, cfg, et);
    let mut x = x0.clone();
    let mut y = Vector::zeros(dy);
    let mut w = Vector::zeros(dy);
    let mut prev_step = None;
    for t in 0..cfg.t_max {
        let k = schedule_k(t, prev_step, &st)?;
        w = agd_run(|z| counted.grad_g_y(&x, z), &w, &AgdConfig::strongly_convex(p.ell, p.kappa, k))?;
        y = agd_run(lagrangian_inner_oracle(&ctx, &x), &y, &AgdConfig::strongly_convex(ctx.ell2, ctx.kappa2(), k))?;
        let g = grad_estimate(&ctx, &x, &y, &w);
        let gn = g.norm();
        let lag = closed.and_then(|cf| cf.lagrangian_star(&x, cfg.lambda));
        out.iterates.push(x.clone());
        out.inner.push((y.clone(), w.clone()));
        if gn <= cfg.eps {
            rec.push(t, 0.0, gn, lag, t, k, k);
            out.steps.push(Vector::zeros(dx));
            out.converged = true;
            break;
        }
        let s = g * (-step_size);
        rec.push(t, s.norm(), gn, lag, t, k, k);
        prev_step = Some(s.norm());
        x += &s;
        out.steps.push(s);
        guard(&x, x0, "F2BA iterate")?;
        if rec.over_budget(cfg.cost_budget) {
            break;
        }
    }
    if !out.converged {
        out.iterates.push(x.clone());
    }
    out.x_hat = x;
    out.trace = rec.trace;
    out.counters = counter.snapshot();
    Ok(out)
}

/// Simultaneous gradient descent-ascent from `(x₀, 0)`. When `‖∇_x f‖ ≤ ε`,
/// `y` is refined by AGD on `−f(x, ·)` and the test is repeated.
pub fn gda_run(oracle: &dyn MinimaxOracle, x0: &Vector, cfg: &SolverConfig, eta_x: f64, eta_y: f64) -> Result<RunOutput> {
    gda_run_from(oracle, x0, &Vector::zeros(oracle.dims().1), cfg, eta_x, eta_y)
}

/// [`gda_run`] from an explicit `y₀`.
pub fn gda_run_from(
    oracle: &dyn MinimaxOracle,
    x0: &Vector,
    y0: &Vector,
    cfg: &SolverConfig,
    eta_x: f64,
    eta_y: f64,
) -> Result<RunOutput> {
    cfg.validate()?;
    if !(eta_x >= 0.0 && eta_y > 0.0) {
        return Err(invalid("need eta_x >= 0 and eta_y > 0"));
    }
    let (dx, dy) = oracle.dims();
    if x0.len() != dx || y0.len() != dy {
        return Err(invalid("starting point has the wrong dimension"));
    }
    let counter = OracleCounter::new(dx.max(dy));
    let counted = CountedMinimax::new(oracle, &counter);
    let p = cfg.params;
    let refine_k = (2.0 * p.kappa.sqrt() * ((p.kappa + 1.0).sqrt() * 1e12).ln()).ceil() as usize;
    let refine = AgdConfig::strongly_convex(p.ell, p.kappa, refine_k);
    let mut rec = Recorder::new(&counter);
    let mut out = empty_output(x0, cfg, 0.0);
    let (mut x, mut y) = (x0.clone(), y0.clone());
    let z0_norm = (x0.norm_squared() + y0.norm_squared()).sqrt();
    for t in 0..cfg.t_max {
        let mut gx = counted.grad_f_x(&x, &y);
        out.iterates.push(x.clone());
        if gx.norm() <= cfg.eps {
            y = agd_run(|z| -counted.grad_f_y(&x, z), &y, &refine)?;
            gx = counted.grad_f_x(&x, &y);
            if gx.norm() <= cfg.eps {
                rec.push(t, 0.0, gx.norm(), None, t, refine_k, 0);
                out.inner.push((y.clone(), Vector::zeros(0)));
                out.steps.push(Vector::zeros(dx));
                out.converged = true;
                break;
            }
        }
        let gy = counted.grad_f_y(&x, &y);
        let s = &gx * (-eta_x);
        x += &s;
        y += gy * eta_y;
        let zn = (x.norm_squared() + y.norm_squared()).sqrt();
        let limit = 1e6 * (1.0 + z0_norm);
        if !zn.is_finite() {
            return Err(Error::NonFinite("GDA iterate"));
        }
        if zn > limit {
            return Err(Error::Diverged {
                what: "GDA",
                norm: zn,
                guard: limit,
            });
        }
        rec.push(t, s.norm(), gx.norm(), None, t, 0, 0);
        out.inner.push((y.clone(), Vector::zeros(0)));
        out.steps.push(s);
        if rec.over_budget(cfg.cost_budget) {
            break;
        }
    }
    if !out.converged {
        out.iterates.push(x.clone());
    }
    out.x_hat = x;
    out.trace = rec.trace;
    out.counters = counter.snapshot();
    Ok(out)
}
