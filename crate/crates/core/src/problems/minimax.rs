use super::{BilevelOracle, ClosedForm, Matrix, MinimaxOracle, SmoothnessParams, Vector};

/// Views `min_x max_y f` as the bilevel problem with `g = −f`, so that
/// `y*(x)` and `φ` coincide. Used for ground-truth evaluation.
pub struct MinimaxAsBilevel<'a>(pub &'a dyn MinimaxOracle);

impl BilevelOracle for MinimaxAsBilevel<'_> {
    fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
    fn params(&self) -> SmoothnessParams {
        self.0.params()
    }
    fn f_val(&self, x: &Vector, y: &Vector) -> f64 {
        self.0.f_val(x, y)
    }
    fn g_val(&self, x: &Vector, y: &Vector) -> f64 {
        -self.0.f_val(x, y)
    }
    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_f_x(x, y)
    }
    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_f_y(x, y)
    }
    fn grad_g_x(&self, x: &Vector, y: &Vector) -> Vector {
        -self.0.grad_f_x(x, y)
    }
    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        -self.0.grad_f_y(x, y)
    }
    fn hess_f_xx(&self, x: &Vector, y: &Vector) -> Matrix {
        self.0.hess_f_xx(x, y)
    }
    fn hess_f_xy(&self, x: &Vector, y: &Vector) -> Matrix {
        self.0.hess_f_xy(x, y)
    }
    fn hess_f_yy(&self, x: &Vector, y: &Vector) -> Matrix {
        self.0.hess_f_yy(x, y)
    }
    fn hess_g_xx(&self, x: &Vector, y: &Vector) -> Matrix {
        -self.0.hess_f_xx(x, y)
    }
    fn hess_g_xy(&self, x: &Vector, y: &Vector) -> Matrix {
        -self.0.hess_f_xy(x, y)
    }
    fn hess_g_yy(&self, x: &Vector, y: &Vector) -> Matrix {
        -self.0.hess_f_yy(x, y)
    }
    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        self.0.closed_form()
    }
}
