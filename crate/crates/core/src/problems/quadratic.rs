//! Quadratic bilevel family with closed-form hyper-objective.
//!
//! `f(x, y) = ½xᵀAx + xᵀBy + ½yᵀCy + aᵀx + bᵀy`, `g(x, y) = ½yᵀQy + yᵀPx + qᵀy`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BilevelOracle, ClosedForm, Matrix, SmoothnessParams, Vector};
use crate::error::invalid;
use crate::linalg::{gaussian_matrix, gaussian_vector, random_orthogonal, spectral_norm, symmetrize};
use crate::Result;

#[derive(Clone, Debug)]
pub struct QuadraticBilevel {
    pub a_mat: Matrix,
    pub b_mat: Matrix,
    pub c_mat: Matrix,
    pub a_vec: Vector,
    pub b_vec: Vector,
    pub q_mat: Matrix,
    pub p_mat: Matrix,
    pub q_vec: Vector,
    params: SmoothnessParams,
    q_inv: Matrix,
}

/// Random instance whose lower-level Hessian `Q` has eigenvalues log-uniform in
/// `[1, cond]` (both endpoints attained when `d_y ≥ 2`). The hyper-Hessian is
/// positive definite with spectrum in `[0.5, 1.5]`, so `φ` has a unique minimizer.
pub fn make_quadratic_bilevel(seed: u64, d_x: usize, d_y: usize, cond: f64) -> Result<QuadraticBilevel> {
    if d_x == 0 || d_y == 0 {
        return Err(invalid("dimensions must be positive"));
    }
    if !(cond >= 1.0 && cond.is_finite()) {
        return Err(invalid(format!("cond must be >= 1, got {cond}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut eig: Vec<f64> = (0..d_y)
        .map(|i| {
            let u = if d_y == 1 || i == 0 {
                0.0
            } else if i == d_y - 1 {
                1.0
            } else {
                rng.random::<f64>()
            };
            cond.powf(u)
        })
        .collect();
    eig.sort_by(f64::total_cmp);
    let u = random_orthogonal(d_y, &mut rng);
    let q_mat = symmetrize(&(&u * Matrix::from_diagonal(&Vector::from_vec(eig)) * u.transpose()));

    let scaled = |m: Matrix, s: f64| {
        let n = spectral_norm(&m);
        if n > 0.0 {
            m * (s / n)
        } else {
            m
        }
    };
    let p_mat = scaled(gaussian_matrix(d_y, d_x, &mut rng), 0.3);
    let b_mat = scaled(gaussian_matrix(d_x, d_y, &mut rng), 0.3);
    let c_mat = scaled(symmetrize(&gaussian_matrix(d_y, d_y, &mut rng)), 0.3);

    let hphi_eig = Vector::from_fn(d_x, |_, _| 0.5 + rng.random::<f64>());
    let v = random_orthogonal(d_x, &mut rng);
    let hphi = symmetrize(&(&v * Matrix::from_diagonal(&hphi_eig) * v.transpose()));

    let q_inv = q_mat.clone().cholesky().expect("Q is SPD").inverse();
    let y_jac = -(&q_inv * &p_mat);
    let cross = &b_mat * &y_jac;
    let a_mat = symmetrize(&(hphi - &cross - cross.transpose() - y_jac.transpose() * &c_mat * &y_jac));

    let a_vec = gaussian_vector(d_x, &mut rng) * 0.5;
    let b_vec = gaussian_vector(d_y, &mut rng) * 0.5;
    let q_vec = gaussian_vector(d_y, &mut rng) * 0.5;
    QuadraticBilevel::from_parts(a_mat, b_mat, c_mat, a_vec, b_vec, q_mat, p_mat, q_vec)
}

fn block(tl: &Matrix, tr: &Matrix, br: &Matrix) -> Matrix {
    let (m, n) = (tl.nrows(), br.nrows());
    let mut out = Matrix::zeros(m + n, m + n);
    out.view_mut((0, 0), (m, m)).copy_from(tl);
    out.view_mut((0, m), (m, n)).copy_from(tr);
    out.view_mut((m, 0), (n, m)).copy_from(&tr.transpose());
    out.view_mut((m, m), (n, n)).copy_from(br);
    out
}

impl QuadraticBilevel {
    /// Builds an instance from explicit coefficients. `B` is `d_x × d_y`,
    /// `P` is `d_y × d_x`. `ℓ` is the larger joint-Hessian norm of `f` and `g`;
    /// `C` (Lipschitz constant of `f` in `y`) is unbounded globally and set to `ℓ`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        a_mat: Matrix,
        b_mat: Matrix,
        c_mat: Matrix,
        a_vec: Vector,
        b_vec: Vector,
        q_mat: Matrix,
        p_mat: Matrix,
        q_vec: Vector,
    ) -> Result<Self> {
        let (dx, dy) = (a_mat.nrows(), q_mat.nrows());
        let shapes_ok = a_mat.shape() == (dx, dx)
            && b_mat.shape() == (dx, dy)
            && c_mat.shape() == (dy, dy)
            && a_vec.len() == dx
            && b_vec.len() == dy
            && q_mat.shape() == (dy, dy)
            && p_mat.shape() == (dy, dx)
            && q_vec.len() == dy;
        if !shapes_ok {
            return Err(invalid("inconsistent quadratic coefficient shapes"));
        }
        let mu = crate::linalg::min_eig(&q_mat);
        if mu <= 0.0 {
            return Err(invalid("Q must be positive definite"));
        }
        let ell_f = spectral_norm(&block(&a_mat, &b_mat, &c_mat));
        let ell_g = spectral_norm(&block(&Matrix::zeros(dx, dx), &p_mat.transpose(), &q_mat));
        let ell = ell_f.max(ell_g);
        let params = SmoothnessParams::new(mu, ell, 0.0, 0.0, ell)?;
        let q_inv = q_mat.clone().cholesky().expect("Q is SPD").inverse();
        Ok(Self {
            a_mat,
            b_mat,
            c_mat,
            a_vec,
            b_vec,
            q_mat,
            p_mat,
            q_vec,
            params,
            q_inv,
        })
    }

    /// `dy*/dx = −Q⁻¹P`.
    fn y_jacobian(&self) -> Matrix {
        -(&self.q_inv * &self.p_mat)
    }

    /// Unique minimizer of `φ`.
    pub fn x_star(&self) -> Vector {
        let h = self.hess_phi(&Vector::zeros(self.a_mat.nrows()));
        let g0 = self.grad_phi(&Vector::zeros(self.a_mat.nrows()));
        -h.cholesky().expect("hyper-Hessian is SPD").solve(&g0)
    }
}

impl ClosedForm for QuadraticBilevel {
    fn y_star(&self, x: &Vector) -> Vector {
        -(&self.q_inv * (&self.p_mat * x + &self.q_vec))
    }

    fn phi(&self, x: &Vector) -> f64 {
        self.f_val(x, &self.y_star(x))
    }

    fn grad_phi(&self, x: &Vector) -> Vector {
        let y = self.y_star(x);
        self.grad_f_x(x, &y) + self.y_jacobian().tr_mul(&self.grad_f_y(x, &y))
    }

    fn hess_phi(&self, _x: &Vector) -> Matrix {
        let yj = self.y_jacobian();
        let cross = &self.b_mat * &yj;
        symmetrize(&(&self.a_mat + &cross + cross.transpose() + yj.transpose() * &self.c_mat * &yj))
    }

    fn y_lambda_star(&self, x: &Vector, lambda: f64) -> Option<Vector> {
        let h = &self.c_mat + &self.q_mat * lambda;
        let rhs = self.b_mat.tr_mul(x) + &self.b_vec + (&self.p_mat * x + &self.q_vec) * lambda;
        h.cholesky().map(|ch| -ch.solve(&rhs))
    }

    /// Uses `g(x, y) − g(x, y*) = ½dᵀQd` with `d = y − y*` to avoid cancellation.
    fn lagrangian_star(&self, x: &Vector, lambda: f64) -> Option<f64> {
        let yl = self.y_lambda_star(x, lambda)?;
        let d = &yl - self.y_star(x);
        Some(self.f_val(x, &yl) + 0.5 * lambda * d.dot(&(&self.q_mat * &d)))
    }
}

impl BilevelOracle for QuadraticBilevel {
    fn dims(&self) -> (usize, usize) {
        (self.a_mat.nrows(), self.q_mat.nrows())
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    fn f_val(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a_mat * x))
            + x.dot(&(&self.b_mat * y))
            + 0.5 * y.dot(&(&self.c_mat * y))
            + self.a_vec.dot(x)
            + self.b_vec.dot(y)
    }

    fn g_val(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * y.dot(&(&self.q_mat * y)) + y.dot(&(&self.p_mat * x)) + self.q_vec.dot(y)
    }

    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector {
        &self.a_mat * x + &self.b_mat * y + &self.a_vec
    }

    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.b_mat.tr_mul(x) + &self.c_mat * y + &self.b_vec
    }

    fn grad_g_x(&self, _x: &Vector, y: &Vector) -> Vector {
        self.p_mat.tr_mul(y)
    }

    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        &self.q_mat * y + &self.p_mat * x + &self.q_vec
    }

    fn hess_f_xx(&self, _x: &Vector, _y: &Vector) -> Matrix {
        self.a_mat.clone()
    }

    fn hess_f_xy(&self, _x: &Vector, _y: &Vector) -> Matrix {
        self.b_mat.clone()
    }

    fn hess_f_yy(&self, _x: &Vector, _y: &Vector) -> Matrix {
        self.c_mat.clone()
    }

    fn hess_g_xx(&self, _x: &Vector, _y: &Vector) -> Matrix {
        let n = self.a_mat.nrows();
        Matrix::zeros(n, n)
    }

    fn hess_g_xy(&self, _x: &Vector, _y: &Vector) -> Matrix {
        self.p_mat.transpose()
    }

    fn hess_g_yy(&self, _x: &Vector, _y: &Vector) -> Matrix {
        self.q_mat.clone()
    }

    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        Some(self)
    }
}
