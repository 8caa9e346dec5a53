//! Synthetic minimax problem with a strict saddle at the origin.
//!
//! `f(x, y) = w(x₃) − 10y₁² + x₁y₁ − 5y₂² + x₂y₂`, so `y*(x) = (x₁/20, x₂/10)`
//! and `φ(x) = w(x₃) + x₁²/40 + x₂²/20`.

use super::{ClosedForm, Matrix, MinimaxOracle, SmoothnessParams, Vector};
use crate::error::invalid;
use crate::Result;

/// Six-branch piecewise cubic `w(x)` with its first and second derivatives.
///
/// `w` is `C¹`, has a strict saddle at 0 (`w″(0) = −2√ε`), linear ramps of
/// slope `±ε` on `√ε < |x| ≤ L√ε`, and minima `−⅓(3L+1)ε^{3/2}` at `±(L+1)√ε`.
pub fn w_piecewise(x: f64, eps: f64, l: f64) -> (f64, f64, f64) {
    let se = eps.sqrt();
    let e32 = eps * se;
    let floor = -(3.0 * l + 1.0) * e32 / 3.0;
    if x <= -l * se {
        let u = x + (l + 1.0) * se;
        (se * u * u - u * u * u / 3.0 + floor, 2.0 * se * u - u * u, 2.0 * se - 2.0 * u)
    } else if x <= -se {
        (eps * x + e32 / 3.0, eps, 0.0)
    } else if x <= 0.0 {
        (-se * x * x - x * x * x / 3.0, -2.0 * se * x - x * x, -2.0 * se - 2.0 * x)
    } else if x <= se {
        (-se * x * x + x * x * x / 3.0, -2.0 * se * x + x * x, -2.0 * se + 2.0 * x)
    } else if x <= l * se {
        (-eps * x + e32 / 3.0, -eps, 0.0)
    } else {
        let u = x - (l + 1.0) * se;
        (se * u * u + u * u * u / 3.0 + floor, 2.0 * se * u + u * u, 2.0 * se + 2.0 * u)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticMinimax {
    pub eps: f64,
    pub l: f64,
    params: SmoothnessParams,
}

/// `eps` and `L` shape `w`; `eps = 0.01`, `L = 3` is the usual setting.
///
/// Smoothness constants: `μ = 10`, `ℓ = 10 + √101` (joint Hessian of the
/// quadratic part; `w″` is unbounded in the outer branches so `ℓ` is local),
/// `ρ = 2` (`|w‴| = 2` everywhere off the ramps).
pub fn make_synthetic_minimax(eps: f64, l: f64) -> Result<SyntheticMinimax> {
    if !(eps > 0.0 && eps.is_finite()) || !(l >= 1.0 && l.is_finite()) {
        return Err(invalid(format!("need eps > 0 and L >= 1, got eps={eps}, L={l}")));
    }
    let ell = 10.0 + 101f64.sqrt();
    let params = SmoothnessParams::new(10.0, ell, 2.0, 0.0, ell)?;
    Ok(SyntheticMinimax { eps, l, params })
}

impl SyntheticMinimax {
    pub fn w(&self, x3: f64) -> f64 {
        w_piecewise(x3, self.eps, self.l).0
    }

    /// `w` at the saddle/plateau boundary `√ε`.
    pub fn plateau_value(&self) -> f64 {
        self.w(self.eps.sqrt())
    }

    /// Minimum value of `w`, attained at `±(L+1)√ε`.
    pub fn valley_value(&self) -> f64 {
        -(3.0 * self.l + 1.0) * self.eps.powf(1.5) / 3.0
    }
}

impl MinimaxOracle for SyntheticMinimax {
    fn dims(&self) -> (usize, usize) {
        (3, 2)
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    fn f_val(&self, x: &Vector, y: &Vector) -> f64 {
        self.w(x[2]) - 10.0 * y[0] * y[0] + x[0] * y[0] - 5.0 * y[1] * y[1] + x[1] * y[1]
    }

    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector {
        let (_, dw, _) = w_piecewise(x[2], self.eps, self.l);
        Vector::from_vec(vec![y[0], y[1], dw])
    }

    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector {
        Vector::from_vec(vec![-20.0 * y[0] + x[0], -10.0 * y[1] + x[1]])
    }

    fn hess_f_xx(&self, x: &Vector, _y: &Vector) -> Matrix {
        let (_, _, d2w) = w_piecewise(x[2], self.eps, self.l);
        Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 0.0, d2w]))
    }

    fn hess_f_xy(&self, _x: &Vector, _y: &Vector) -> Matrix {
        Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    fn hess_f_yy(&self, _x: &Vector, _y: &Vector) -> Matrix {
        Matrix::from_diagonal(&Vector::from_vec(vec![-20.0, -10.0]))
    }

    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        Some(self)
    }
}

impl ClosedForm for SyntheticMinimax {
    fn y_star(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[0] / 20.0, x[1] / 10.0])
    }

    fn phi(&self, x: &Vector) -> f64 {
        self.w(x[2]) + x[0] * x[0] / 40.0 + x[1] * x[1] / 20.0
    }

    fn grad_phi(&self, x: &Vector) -> Vector {
        let (_, dw, _) = w_piecewise(x[2], self.eps, self.l);
        Vector::from_vec(vec![x[0] / 20.0, x[1] / 10.0, dw])
    }

    fn hess_phi(&self, x: &Vector) -> Matrix {
        let (_, _, d2w) = w_piecewise(x[2], self.eps, self.l);
        Matrix::from_diagonal(&Vector::from_vec(vec![1.0 / 20.0, 1.0 / 10.0, d2w]))
    }
}
