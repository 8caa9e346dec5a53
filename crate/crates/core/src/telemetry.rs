//! Oracle-call accounting and per-iteration traces.
//!
//! Cost model: every partial gradient and every Hessian-vector product costs one
//! unit; every dense Hessian block costs `d = max{d_x, d_y}` units.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::problems::{BilevelOracle, ClosedForm, Matrix, MinimaxOracle, SmoothnessParams, Vector};

#[derive(Debug, Default)]
pub struct OracleCounter {
    grad: AtomicU64,
    hvp: AtomicU64,
    hess: AtomicU64,
    d: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub grad_calls: u64,
    pub hvp_calls: u64,
    pub hess_block_calls: u64,
    pub d: usize,
}

impl CounterSnapshot {
    /// `grad_calls + hvp_calls + d·hess_block_calls`, in units of one gradient.
    pub fn total_cost(&self) -> f64 {
        total_cost(self.grad_calls, self.hvp_calls, self.hess_block_calls, self.d)
    }
}

pub fn total_cost(grad_calls: u64, hvp_calls: u64, hess_block_calls: u64, d: usize) -> f64 {
    grad_calls as f64 + hvp_calls as f64 + d as f64 * hess_block_calls as f64
}

impl OracleCounter {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            ..Self::default()
        }
    }

    pub fn add_grad(&self, n: u64) {
        self.grad.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_hvp(&self, n: u64) {
        self.hvp.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_hess(&self, n: u64) {
        self.hess.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            grad_calls: self.grad.load(Ordering::Relaxed),
            hvp_calls: self.hvp.load(Ordering::Relaxed),
            hess_block_calls: self.hess.load(Ordering::Relaxed),
            d: self.d,
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.snapshot().total_cost()
    }
}

/// One outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub step_norm: f64,
    pub grad_est_norm: f64,
    /// `L*_λ(x_t)` when the oracle exposes a closed form.
    pub lagrangian_value: Option<f64>,
    pub pi_t: usize,
    pub k_t1: usize,
    pub k_t2: usize,
    pub grad_calls: u64,
    pub hvp_calls: u64,
    pub hess_block_calls: u64,
    pub total_cost: f64,
    pub wall_time: f64,
}

impl TraceRecord {
    pub fn counters(&self, d: usize) -> CounterSnapshot {
        CounterSnapshot {
            grad_calls: self.grad_calls,
            hvp_calls: self.hvp_calls,
            hess_block_calls: self.hess_block_calls,
            d,
        }
    }

    /// Equality ignoring `wall_time`.
    pub fn same_except_time(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            wall_time: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

/// Bilevel oracle that charges every call to a counter.
pub struct CountedBilevel<'a> {
    inner: &'a dyn BilevelOracle,
    counter: &'a OracleCounter,
}

impl<'a> CountedBilevel<'a> {
    pub fn new(inner: &'a dyn BilevelOracle, counter: &'a OracleCounter) -> Self {
        Self { inner, counter }
    }
}

macro_rules! counted {
    ($kind:ident, $name:ident, $ret:ty, ($($arg:ident : $ty:ty),*)) => {
        fn $name(&self, $($arg: $ty),*) -> $ret {
            self.counter.$kind(1);
            self.inner.$name($($arg),*)
        }
    };
}

impl BilevelOracle for CountedBilevel<'_> {
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }
    fn params(&self) -> SmoothnessParams {
        self.inner.params()
    }
    fn inner_curvature(&self, x: &Vector) -> (f64, f64) {
        self.inner.inner_curvature(x)
    }
    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        self.inner.closed_form()
    }
    fn f_val(&self, x: &Vector, y: &Vector) -> f64 {
        self.inner.f_val(x, y)
    }
    fn g_val(&self, x: &Vector, y: &Vector) -> f64 {
        self.inner.g_val(x, y)
    }
    counted!(add_grad, grad_f_x, Vector, (x: &Vector, y: &Vector));
    counted!(add_grad, grad_f_y, Vector, (x: &Vector, y: &Vector));
    counted!(add_grad, grad_g_x, Vector, (x: &Vector, y: &Vector));
    counted!(add_grad, grad_g_y, Vector, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_f_xx, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_f_xy, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_f_yy, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_g_xx, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_g_xy, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_g_yy, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hvp, hvp_f_xx, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_f_xy, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_f_yx, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_f_yy, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_g_xx, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_g_xy, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_g_yx, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_g_yy, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hess, hess_lag_xx, Matrix, (x: &Vector, y: &Vector, lambda: f64));
    counted!(add_hess, hess_lag_xy, Matrix, (x: &Vector, y: &Vector, lambda: f64));
    counted!(add_hess, hess_lag_yy, Matrix, (x: &Vector, y: &Vector, lambda: f64));
    counted!(add_hvp, hvp_lag_xx, Vector, (x: &Vector, y: &Vector, lambda: f64, v: &Vector));
    counted!(add_hvp, hvp_lag_xy, Vector, (x: &Vector, y: &Vector, lambda: f64, v: &Vector));
    counted!(add_hvp, hvp_lag_yx, Vector, (x: &Vector, y: &Vector, lambda: f64, v: &Vector));
    counted!(add_hvp, hvp_lag_yy, Vector, (x: &Vector, y: &Vector, lambda: f64, v: &Vector));
}

/// Minimax oracle that charges every call to a counter.
pub struct CountedMinimax<'a> {
    inner: &'a dyn MinimaxOracle,
    counter: &'a OracleCounter,
}

impl<'a> CountedMinimax<'a> {
    pub fn new(inner: &'a dyn MinimaxOracle, counter: &'a OracleCounter) -> Self {
        Self { inner, counter }
    }
}

impl MinimaxOracle for CountedMinimax<'_> {
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }
    fn params(&self) -> SmoothnessParams {
        self.inner.params()
    }
    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        self.inner.closed_form()
    }
    fn f_val(&self, x: &Vector, y: &Vector) -> f64 {
        self.inner.f_val(x, y)
    }
    counted!(add_grad, grad_f_x, Vector, (x: &Vector, y: &Vector));
    counted!(add_grad, grad_f_y, Vector, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_f_xx, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_f_xy, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hess, hess_f_yy, Matrix, (x: &Vector, y: &Vector));
    counted!(add_hvp, hvp_f_xx, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_f_xy, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_f_yx, Vector, (x: &Vector, y: &Vector, v: &Vector));
    counted!(add_hvp, hvp_f_yy, Vector, (x: &Vector, y: &Vector, v: &Vector));
}
