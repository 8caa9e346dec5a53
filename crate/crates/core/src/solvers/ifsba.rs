use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{initial_radius, Recorder, RunOutput, SolverConfig};
use crate::agd::{agd_run, schedule_k, AgdConfig, ScheduleState};
use crate::cubic::{cubic_solve_exact, cubic_solve_final, cubic_solve_gd_with, CubicModel, HessianOp};
use crate::estimators::{grad_estimate, hess_estimate_cheb, lagrangian_inner_oracle, ChebHessOperator, LagrangianContext};
use crate::error::invalid;
use crate::problems::{BilevelOracle, Vector};
use crate::telemetry::{CountedBilevel, OracleCounter};
use crate::{Error, Result};

const C_G: f64 = 1.0 / 240.0;
const C_H: f64 = 1.0 / 200.0;

fn hessian_target(ctx: &LagrangianContext<'_>, cfg: &SolverConfig) -> f64 {
    let a = C_H * (cfg.big_m * cfg.eps).sqrt();
    match cfg.ifsba.eps_h {
        Some(eh) => a.min(eh * ctx.l_grad),
        None => a,
    }
}

/// `⌈(√(3κ)+1)/2 · log(24(λ+1)κℓ / min{C̃_H√(Mε), ε_H L})⌉`, at least 1.
pub fn chebyshev_order(ctx: &LagrangianContext<'_>, cfg: &SolverConfig) -> usize {
    let p = &ctx.params;
    let val = ((3.0 * p.kappa).sqrt() + 1.0) / 2.0
        * (24.0 * (ctx.lambda + 1.0) * p.kappa * p.ell / hessian_target(ctx, cfg)).ln();
    if val >= 1.0 {
        val.ceil() as usize
    } else {
        1
    }
}

/// Inexact FSBA: the hyper-Hessian is never formed; the cubic step comes from
/// perturbed gradient descent on the model using Chebyshev Hessian-vector
/// products. When the model decrease falls above the threshold, a final
/// gradient-descent solve produces the last step and the run stops.
pub fn ifsba_run(oracle: &dyn BilevelOracle, x0: &Vector, cfg: &SolverConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (dx, dy) = oracle.dims();
    if x0.len() != dx {
        return Err(invalid(format!("x0 has length {}, expected {dx}", x0.len())));
    }
    let counter = OracleCounter::new(dx.max(dy));
    let counted = CountedBilevel::new(oracle, &counter);
    let ctx = LagrangianContext::new(&counted, cfg.lambda, cfg.params, cfg.l_override, cfg.rho_bar_override)?;
    let p = cfg.params;
    let et = cfg.eps_tilde_override.unwrap_or_else(|| {
        let a = C_G * cfg.eps / (2.0 * ctx.lambda * p.ell_bar);
        let b = if ctx.c2 > 0.0 {
            hessian_target(&ctx, cfg) / (4.0 * ctx.c2)
        } else {
            f64::INFINITY
        };
        a.min(b)
    });
    let k_cheb = cfg.ifsba.cheb_order.unwrap_or_else(|| chebyshev_order(&ctx, cfg));
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
    let delta_prime = cfg.delta / cfg.t_max.max(1) as f64;
    let threshold = cfg.ifsba.threshold.value(cfg.eps, cfg.big_m);
    let l = ctx.l_grad;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let closed = oracle.closed_form();

    let mut rec = Recorder::new(&counter);
    let mut x = x0.clone();
    let mut y = Vector::zeros(dy);
    let mut w = Vector::zeros(dy);
    let mut prev_step: Option<f64> = None;
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
        out.hessian_evals += 1;

        let (s, last) = if cfg.ifsba.exact_subsolver {
            let c = hess_estimate_cheb(&ctx, &x, &y, &w, k_cheb, k_cheb)?;
            let res = cubic_solve_exact(&CubicModel::dense(g.clone(), c, cfg.big_m)?)?;
            let last = res.delta > threshold;
            (res.s, last)
        } else {
            let op = ChebHessOperator::new(&ctx, &x, &y, &w, k_cheb, k_cheb)?;
            let hv = |v: &Vector| op.apply(v);
            let model = CubicModel::new(g.clone(), HessianOp::MatrixFree(&hv), cfg.big_m)?;
            let res = cubic_solve_gd_with(&model, l, cfg.eps, delta_prime, &cfg.ifsba.gd, &mut rng)?;
            if res.delta > threshold {
                match cubic_solve_final(&model, cfg.eps, l) {
                    Ok(fin) => (fin.s, true),
                    Err(Error::IterationCap { cap, .. }) => {
                        out.failure = Some(format!("final cubic solver exceeded {cap} iterations"));
                        (res.s, true)
                    }
                    Err(e) => return Err(e),
                }
            } else {
                (res.s, false)
            }
        };
        let sn = s.norm();
        let lag = closed.and_then(|cf| cf.lagrangian_star(&x, cfg.lambda));
        rec.push(t, sn, g.norm(), lag, t, k, k);
        out.iterates.push(x.clone());
        out.inner.push((y.clone(), w.clone()));
        out.steps.push(s.clone());
        x += &s;
        prev_step = Some(sn);
        if last {
            out.converged = out.failure.is_none();
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
