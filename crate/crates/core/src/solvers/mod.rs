//! Outer loops: FSBA, IFSBA, LFSBA, LMCN and the F²BA / GDA baselines.
//!
//! All bilevel solvers start from `y_{−1} = w_{−1} = 0`, warm-start the inner
//! AGD runs across iterations, and charge oracle calls through a per-run
//! [`OracleCounter`](crate::telemetry::OracleCounter).

mod baselines;
mod fsba;
mod ifsba;
mod lmcn;
mod sosp;

pub use baselines::{f2ba_run, gda_run, gda_run_from};
pub use fsba::{fsba_run, lfsba_run};
pub use ifsba::{chebyshev_order, ifsba_run};
pub use lmcn::{lmcn_run, minimax_rho_bar};
pub use sosp::{sosp_check, sosp_check_minimax, SospVerdict, SOSP_SLACK};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cubic::GdOptions;
use crate::error::invalid;
use crate::problems::{inner_solve, BilevelOracle, SmoothnessParams, Vector};
use crate::telemetry::{CounterSnapshot, OracleCounter, TraceRecord};
use crate::Result;

/// Termination threshold of IFSBA's `Δ_t > threshold` test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IfsbaThreshold {
    /// `−(1/128)√(ε³/M)`.
    #[default]
    SqrtForm,
    /// `−ε³/(128M)`.
    Printed,
}

impl IfsbaThreshold {
    pub fn value(self, eps: f64, big_m: f64) -> f64 {
        match self {
            IfsbaThreshold::SqrtForm => -(eps.powi(3) / big_m).sqrt() / 128.0,
            IfsbaThreshold::Printed => -eps.powi(3) / (128.0 * big_m),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfsbaOptions {
    /// Chebyshev order override (both inverses).
    pub cheb_order: Option<usize>,
    /// `ε_H` in the Chebyshev accuracy target; defaults to `C̃_H√(Mε)/L`.
    pub eps_h: Option<f64>,
    pub gd: GdOptions,
    pub threshold: IfsbaThreshold,
    /// Debug mode: dense Chebyshev Hessian and exact cubic steps.
    pub exact_subsolver: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Cubic regularization weight `M`.
    #[serde(rename = "M")]
    pub big_m: f64,
    /// Hessian refresh period.
    pub m: usize,
    pub eps: f64,
    pub t_max: usize,
    /// Failure probability budget of IFSBA.
    pub delta: f64,
    pub params: SmoothnessParams,
    pub eps_tilde_override: Option<f64>,
    pub l_override: Option<f64>,
    pub rho_bar_override: Option<f64>,
    /// Initial inner radius `R`; computed from `x₀` when absent.
    pub r0: Option<f64>,
    /// Stop once the total oracle cost reaches this budget.
    pub cost_budget: Option<f64>,
    pub seed: u64,
    pub ifsba: IfsbaOptions,
}

/// `max{ℓ̄κ²/Δ, ℓ̄κ³/ε, ℓ̄κ⁵/√(Mε), 2ℓ/μ}`.
pub fn theory_lambda(p: &SmoothnessParams, eps: f64, big_m: f64, delta_phi: f64) -> f64 {
    let (lb, k) = (p.ell_bar, p.kappa);
    let a = lb * k * k / delta_phi.max(f64::MIN_POSITIVE);
    let b = lb * k.powi(3) / eps;
    let c = lb * k.powi(5) / (big_m * eps).sqrt();
    a.max(b).max(c).max(2.0 * p.ell / p.mu)
}

/// `10·⌈Δ√M ε^{−3/2}⌉`, clamped to `[10, 10⁶]`.
pub fn theory_t_max(delta_phi: f64, big_m: f64, eps: f64) -> usize {
    let t = (delta_phi.max(0.0) * big_m.sqrt() * eps.powf(-1.5)).ceil();
    (10.0 * t).clamp(10.0, 1e6) as usize
}

impl SolverConfig {
    /// Settings with `λ` from [`theory_lambda`], `T_max` from [`theory_t_max`],
    /// `δ = 0.1`, seed 0.
    pub fn theory(params: SmoothnessParams, eps: f64, big_m: f64, delta_phi: f64, m: usize) -> Self {
        Self {
            lambda: theory_lambda(&params, eps, big_m, delta_phi),
            big_m,
            m,
            eps,
            t_max: theory_t_max(delta_phi, big_m, eps),
            delta: 0.1,
            params,
            eps_tilde_override: None,
            l_override: None,
            rho_bar_override: None,
            r0: None,
            cost_budget: None,
            seed: 0,
            ifsba: IfsbaOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.big_m > 0.0 && self.big_m.is_finite()) {
            return Err(invalid(format!("M must be positive, got {}", self.big_m)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(e) = self.eps_tilde_override {
            if !(e > 0.0) {
                return Err(invalid("eps_tilde_override must be positive"));
            }
        }
        Ok(())
    }
}

/// Result of one solver run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub x_hat: Vector,
    /// The stopping rule fired (as opposed to `T_max` or the cost budget).
    pub converged: bool,
    /// Set when a subsolver cap tripped (IFSBA's probabilistic failure).
    pub failure: Option<String>,
    pub trace: Vec<TraceRecord>,
    /// Steps `s_t`, one per iteration.
    pub steps: Vec<Vector>,
    /// `x_0, x_1, …`: the point of every executed iteration, then `x_hat`.
    pub iterates: Vec<Vector>,
    /// Inner iterates `(y_t, w_t)` used at iteration `t` (`w_t` is empty for
    /// single-sequence solvers).
    pub inner: Vec<(Vector, Vector)>,
    pub hessian_evals: usize,
    pub counters: CounterSnapshot,
    pub lambda: f64,
    pub big_m: f64,
    pub eps_tilde: f64,
}

impl RunOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// `max{‖y*(x₀)‖, ‖y*_λ(x₀)‖}` from the closed form, or `‖y*(x₀)‖` from an
/// uncounted inner solve otherwise (the two differ by `O(1/λ)`).
pub(crate) fn initial_radius(oracle: &dyn BilevelOracle, x0: &Vector, lambda: f64) -> Result<f64> {
    if let Some(cf) = oracle.closed_form() {
        let a = cf.y_star(x0).norm();
        let b = cf.y_lambda_star(x0, lambda).map_or(a, |v| v.norm());
        return Ok(a.max(b));
    }
    let (_, dy) = oracle.dims();
    Ok(inner_solve(oracle, x0, &Vector::zeros(dy), 1e-8)?.norm())
}

/// Appends trace records with cumulative counters.
pub(crate) struct Recorder<'a> {
    counter: &'a OracleCounter,
    start: Instant,
    pub trace: Vec<TraceRecord>,
}

impl<'a> Recorder<'a> {
    pub fn new(counter: &'a OracleCounter) -> Self {
        Self {
            counter,
            start: Instant::now(),
            trace: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        t: usize,
        step_norm: f64,
        grad_est_norm: f64,
        lagrangian_value: Option<f64>,
        pi_t: usize,
        k_t1: usize,
        k_t2: usize,
    ) {
        let c = self.counter.snapshot();
        self.trace.push(TraceRecord {
            t,
            step_norm,
            grad_est_norm,
            lagrangian_value,
            pi_t,
            k_t1,
            k_t2,
            grad_calls: c.grad_calls,
            hvp_calls: c.hvp_calls,
            hess_block_calls: c.hess_block_calls,
            total_cost: c.total_cost(),
            wall_time: self.start.elapsed().as_secs_f64(),
        });
    }

    pub fn over_budget(&self, budget: Option<f64>) -> bool {
        budget.is_some_and(|b| self.counter.total_cost() >= b)
    }
}

/// Lazy-Hessian stopping test: `ε ≥ (1/M)(288/287)²((M+2ρ̄)/√2·‖s‖ + ρ̄‖x̃ − x‖)²`.
pub fn lazy_stop(eps: f64, big_m: f64, rho_bar: f64, step_norm: f64, anchor_dist: f64) -> bool {
    let inner = (big_m + 2.0 * rho_bar) / std::f64::consts::SQRT_2 * step_norm + rho_bar * anchor_dist;
    eps >= (288.0f64 / 287.0).powi(2) * inner * inner / big_m
}
