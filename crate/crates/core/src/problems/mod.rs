//! Oracle interfaces, verification families and ground-truth evaluation.
//!
//! Hessian block conventions: `xy` blocks are `d_x × d_y` (rows indexed by `x`),
//! `yx` products apply the transpose. HVP inputs live in the space of the
//! block's column variable: `hvp_*_xy(x, y, v)` takes `v ∈ R^{d_y}` and returns
//! a vector in `R^{d_x}`.

mod exp_ridge;
mod ground_truth;
mod hypercleaning;
mod minimax;
mod quadratic;
mod sparse;
mod synthetic;

pub use exp_ridge::{make_exp_ridge_tuning, synthetic_multinomial, ExpRidgeTuning};
pub use ground_truth::{ground_truth_eval, ground_truth_minimax, inner_solve, GroundTruth};
pub use hypercleaning::{make_hypercleaning, synthetic_logistic, Hypercleaning};
pub use minimax::MinimaxAsBilevel;
pub use quadratic::{make_quadratic_bilevel, QuadraticBilevel};
pub use sparse::SparseMatrix;
pub use synthetic::{make_synthetic_minimax, w_piecewise, SyntheticMinimax};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{error::invalid, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Smoothness constants of a bilevel (or minimax) instance.
///
/// `ell_bar = max{C, ℓ, ν, ρ}` and `kappa = ell_bar / mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessParams {
    pub mu: f64,
    pub ell: f64,
    pub rho: f64,
    pub nu: f64,
    pub c_lip: f64,
    pub ell_bar: f64,
    pub kappa: f64,
}

impl SmoothnessParams {
    /// `mu` and `ell` must be positive; `rho`, `nu`, `c_lip` may be zero
    /// (quadratic instances have vanishing third derivatives).
    pub fn new(mu: f64, ell: f64, rho: f64, nu: f64, c_lip: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(mu > 0.0 && ell > 0.0 && mu.is_finite() && ell.is_finite()) {
            return Err(invalid(format!("mu and ell must be positive, got mu={mu}, ell={ell}")));
        }
        if !(ok(rho) && ok(nu) && ok(c_lip)) {
            return Err(invalid("rho, nu and c_lip must be finite and nonnegative"));
        }
        let ell_bar = c_lip.max(ell).max(nu).max(rho);
        Ok(Self {
            mu,
            ell,
            rho,
            nu,
            c_lip,
            ell_bar,
            kappa: ell_bar / mu,
        })
    }
}

/// Exact quantities available on verification families.
pub trait ClosedForm: Send + Sync {
    fn y_star(&self, x: &Vector) -> Vector;
    fn phi(&self, x: &Vector) -> f64;
    fn grad_phi(&self, x: &Vector) -> Vector;
    fn hess_phi(&self, x: &Vector) -> Matrix;
    /// Minimizer of `f(x, ·) + λ g(x, ·)`.
    fn y_lambda_star(&self, _x: &Vector, _lambda: f64) -> Option<Vector> {
        None
    }
    /// `L*_λ(x)`.
    fn lagrangian_star(&self, _x: &Vector, _lambda: f64) -> Option<f64> {
        None
    }
}

/// First- and second-order oracles for `f` (upper) and `g` (lower).
pub trait BilevelOracle: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn params(&self) -> SmoothnessParams;

    fn f_val(&self, x: &Vector, y: &Vector) -> f64;
    fn g_val(&self, x: &Vector, y: &Vector) -> f64;
    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_g_x(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector;
    fn hess_f_xx(&self, x: &Vector, y: &Vector) -> Matrix;
    fn hess_f_xy(&self, x: &Vector, y: &Vector) -> Matrix;
    fn hess_f_yy(&self, x: &Vector, y: &Vector) -> Matrix;
    fn hess_g_xx(&self, x: &Vector, y: &Vector) -> Matrix;
    fn hess_g_xy(&self, x: &Vector, y: &Vector) -> Matrix;
    fn hess_g_yy(&self, x: &Vector, y: &Vector) -> Matrix;

    fn hvp_f_xx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_xx(x, y) * v
    }
    fn hvp_f_xy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_xy(x, y) * v
    }
    fn hvp_f_yx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_xy(x, y).tr_mul(v)
    }
    fn hvp_f_yy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_yy(x, y) * v
    }
    fn hvp_g_xx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_g_xx(x, y) * v
    }
    fn hvp_g_xy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_g_xy(x, y) * v
    }
    fn hvp_g_yx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_g_xy(x, y).tr_mul(v)
    }
    fn hvp_g_yy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_g_yy(x, y) * v
    }

    // Blocks of L_λ = f + λg. One evaluation of L_λ is one oracle call in the
    // cost model, so these are counted once each by the telemetry wrapper.
    fn hess_lag_xx(&self, x: &Vector, y: &Vector, lambda: f64) -> Matrix {
        self.hess_f_xx(x, y) + self.hess_g_xx(x, y) * lambda
    }
    fn hess_lag_xy(&self, x: &Vector, y: &Vector, lambda: f64) -> Matrix {
        self.hess_f_xy(x, y) + self.hess_g_xy(x, y) * lambda
    }
    fn hess_lag_yy(&self, x: &Vector, y: &Vector, lambda: f64) -> Matrix {
        self.hess_f_yy(x, y) + self.hess_g_yy(x, y) * lambda
    }
    fn hvp_lag_xx(&self, x: &Vector, y: &Vector, lambda: f64, v: &Vector) -> Vector {
        self.hvp_f_xx(x, y, v) + self.hvp_g_xx(x, y, v) * lambda
    }
    fn hvp_lag_xy(&self, x: &Vector, y: &Vector, lambda: f64, v: &Vector) -> Vector {
        self.hvp_f_xy(x, y, v) + self.hvp_g_xy(x, y, v) * lambda
    }
    fn hvp_lag_yx(&self, x: &Vector, y: &Vector, lambda: f64, v: &Vector) -> Vector {
        self.hvp_f_yx(x, y, v) + self.hvp_g_yx(x, y, v) * lambda
    }
    fn hvp_lag_yy(&self, x: &Vector, y: &Vector, lambda: f64, v: &Vector) -> Vector {
        self.hvp_f_yy(x, y, v) + self.hvp_g_yy(x, y, v) * lambda
    }

    /// Strong convexity and smoothness of `g(x, ·)` valid near `x`.
    fn inner_curvature(&self, _x: &Vector) -> (f64, f64) {
        let p = self.params();
        (p.mu, p.ell)
    }

    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        None
    }
}

/// Oracles for `min_x max_y f(x, y)` with `f(x, ·)` strongly concave.
pub trait MinimaxOracle: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn params(&self) -> SmoothnessParams;

    fn f_val(&self, x: &Vector, y: &Vector) -> f64;
    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector;
    fn hess_f_xx(&self, x: &Vector, y: &Vector) -> Matrix;
    fn hess_f_xy(&self, x: &Vector, y: &Vector) -> Matrix;
    fn hess_f_yy(&self, x: &Vector, y: &Vector) -> Matrix;

    fn hvp_f_xx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_xx(x, y) * v
    }
    fn hvp_f_xy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_xy(x, y) * v
    }
    fn hvp_f_yx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_xy(x, y).tr_mul(v)
    }
    fn hvp_f_yy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hess_f_yy(x, y) * v
    }

    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        None
    }
}
