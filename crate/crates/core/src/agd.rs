//! Accelerated gradient descent for smooth strongly convex inner problems and
//! the warm-start iteration schedules used by the outer solvers.

use crate::error::invalid;
use crate::problems::Vector;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgdConfig {
    /// Step size, normally `1/ℓ_h`.
    pub eta: f64,
    /// Momentum `(√κ_h − 1)/(√κ_h + 1)`.
    pub theta: f64,
    pub k: usize,
}

impl AgdConfig {
    pub fn new(eta: f64, theta: f64, k: usize) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid(format!("eta must be positive, got {eta}")));
        }
        if !(0.0..1.0).contains(&theta) {
            return Err(invalid(format!("theta must lie in [0, 1), got {theta}")));
        }
        Ok(Self { eta, theta, k })
    }

    /// Standard parameters for an `ℓ_h`-smooth objective with condition number `κ_h`.
    pub fn strongly_convex(ell_h: f64, kappa_h: f64, k: usize) -> Self {
        let sk = kappa_h.max(1.0).sqrt();
        Self {
            eta: 1.0 / ell_h,
            theta: (sk - 1.0) / (sk + 1.0),
            k,
        }
    }
}

/// Runs exactly `cfg.k` steps of `z_{k+1} = z̃_k − η∇h(z̃_k)`,
/// `z̃_{k+1} = z_{k+1} + θ(z_{k+1} − z_k)` from `z̃_0 = z_0`, returning `z_K`.
///
/// Fails if an iterate is non-finite or exceeds `10⁶(1 + ‖z_0‖)` in norm.
pub fn agd_run<F>(mut grad: F, z0: &Vector, cfg: &AgdConfig) -> Result<Vector>
where
    F: FnMut(&Vector) -> Vector,
{
    let guard = 1e6 * (1.0 + z0.norm());
    let mut z = z0.clone();
    let mut z_tilde = z0.clone();
    for _ in 0..cfg.k {
        let mut z_next = &z_tilde - grad(&z_tilde) * cfg.eta;
        let norm = z_next.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("AGD iterate"));
        }
        if norm > guard {
            return Err(Error::Diverged {
                what: "AGD",
                norm,
                guard,
            });
        }
        z_tilde = &z_next + (&z_next - &z) * cfg.theta;
        std::mem::swap(&mut z, &mut z_next);
    }
    Ok(z)
}

/// `(κ_h + 1)(1 − 1/√κ_h)^K`: contraction factor for `‖z_K − z*‖²`.
pub fn contraction_bound(kappa_h: f64, k: usize) -> f64 {
    (kappa_h + 1.0) * (1.0 - 1.0 / kappa_h.sqrt()).powi(k as i32)
}

/// Inputs of the warm-start schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleState {
    pub eps_tilde: f64,
    /// Initial distance bound `max{‖y*(x₀)‖, ‖y*_λ(x₀)‖}` for zero warm starts.
    pub r: f64,
    pub kappa_inner: f64,
    /// Multiplier on the previous outer step norm (`4κ` for the bilevel
    /// solvers, `κ` for the minimax solver).
    pub coupling: f64,
}

/// Inner iteration count `⌈2√κ log(√(κ+1)·A/ε̃)⌉`, floored at 1, where
/// `A = R` at `t = 0` and `A = ε̃ + coupling·prev_step_norm` afterwards.
pub fn schedule_k(t: usize, prev_step_norm: Option<f64>, st: &ScheduleState) -> Result<usize> {
    if !(st.eps_tilde > 0.0 && st.eps_tilde.is_finite()) {
        return Err(invalid(format!("eps_tilde must be positive, got {}", st.eps_tilde)));
    }
    if !(st.r >= 0.0) {
        return Err(invalid("R must be nonnegative"));
    }
    let a = if t == 0 {
        st.r
    } else {
        let prev = prev_step_norm.ok_or_else(|| invalid("prev_step_norm is required for t >= 1"))?;
        st.eps_tilde + st.coupling * prev
    };
    let kap = st.kappa_inner;
    let val = 2.0 * kap.sqrt() * ((kap + 1.0).sqrt() / st.eps_tilde * a).ln();
    if !(val >= 1.0) {
        return Ok(1);
    }
    Ok(val.ceil() as usize)
}
