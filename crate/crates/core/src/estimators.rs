//! Hypergradient and hyper-Hessian estimates.
//!
//! For the bilevel proxy the estimates evaluate the exact formulas for
//! `∇L*_λ` and `∇²L*_λ` at approximate inner solutions `y ≈ y*_λ(x)`,
//! `w ≈ y*(x)`. The Chebyshev variant replaces both `yy`-block inverses by
//! polynomial approximations that need only Hessian-vector products.

use crate::error::invalid;
use crate::linalg::{spd_solve, symmetrize};
use crate::problems::{BilevelOracle, Matrix, MinimaxOracle, SmoothnessParams, Vector};
use crate::{Error, Result};

/// Default gradient-Lipschitz constant of `∇L*_λ`: `8ℓ̄κ³`.
pub fn default_l(p: &SmoothnessParams) -> f64 {
    8.0 * p.ell_bar * p.kappa.powi(3)
}

/// Default Hessian-Lipschitz constant of `∇²L*_λ`: `8ℓ̄κ⁵`.
pub fn default_rho_bar(p: &SmoothnessParams) -> f64 {
    8.0 * p.ell_bar * p.kappa.powi(5)
}

/// Error constants `(C₁, C₂)` of the hyper-Hessian estimate:
/// `‖∇²L*_λ − H‖ ≤ C₁‖w − y*‖ + C₂‖y − y*_λ‖`.
pub fn hessian_error_constants(p: &SmoothnessParams, lambda: f64) -> (f64, f64) {
    let (l, mu, rho) = (p.ell, p.mu, p.rho);
    let c1 = lambda * rho + 2.0 * l * rho / mu + l * l * rho / (mu * mu);
    let rl = rho + lambda * rho;
    let ll = l + lambda * l;
    let c2 = rl + ll * (4.0 * rl / (lambda * mu) + 4.0 * rl * ll / (lambda * lambda * mu * mu));
    (c1, c2)
}

/// Oracle plus penalty multiplier and the constants derived from them.
#[derive(Clone, Copy)]
pub struct LagrangianContext<'a> {
    pub oracle: &'a dyn BilevelOracle,
    pub lambda: f64,
    pub params: SmoothnessParams,
    /// Gradient-Lipschitz constant of `∇L*_λ`.
    pub l_grad: f64,
    pub rho_bar: f64,
    /// Smoothness `(1+λ)ℓ` of `f(x, ·) + λg(x, ·)`.
    pub ell2: f64,
    /// Strong convexity `λμ/2` of `f(x, ·) + λg(x, ·)`.
    pub mu2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl<'a> LagrangianContext<'a> {
    /// Requires `λ ≥ 2ℓ/μ`, which makes the penalized inner problem strongly convex.
    pub fn new(
        oracle: &'a dyn BilevelOracle,
        lambda: f64,
        params: SmoothnessParams,
        l_override: Option<f64>,
        rho_bar_override: Option<f64>,
    ) -> Result<Self> {
        let min_lambda = 2.0 * params.ell / params.mu;
        if !(lambda.is_finite() && lambda >= min_lambda * (1.0 - 1e-12)) {
            return Err(invalid(format!("lambda = {lambda} is below 2ℓ/μ = {min_lambda}")));
        }
        let (c1, c2) = hessian_error_constants(&params, lambda);
        Ok(Self {
            oracle,
            lambda,
            params,
            l_grad: l_override.unwrap_or_else(|| default_l(&params)),
            rho_bar: rho_bar_override.unwrap_or_else(|| default_rho_bar(&params)),
            ell2: (1.0 + lambda) * params.ell,
            mu2: lambda * params.mu / 2.0,
            c1,
            c2,
        })
    }

    /// Condition number used for the penalized inner problem, `3κ`.
    pub fn kappa2(&self) -> f64 {
        3.0 * self.params.kappa
    }

    /// Same multiplier, different oracle (typically a counting wrapper).
    pub fn with_oracle<'b>(&self, oracle: &'b dyn BilevelOracle) -> LagrangianContext<'b> {
        LagrangianContext {
            oracle,
            lambda: self.lambda,
            params: self.params,
            l_grad: self.l_grad,
            rho_bar: self.rho_bar,
            ell2: self.ell2,
            mu2: self.mu2,
            c1: self.c1,
            c2: self.c2,
        }
    }
}

/// Gradient in `y` of `f(x, y) + λg(x, y)`; its minimizer is `y*_λ(x)`.
pub fn lagrangian_inner_oracle<'c>(ctx: &'c LagrangianContext<'_>, x: &'c Vector) -> impl Fn(&Vector) -> Vector + 'c {
    move |y| ctx.oracle.grad_f_y(x, y) + ctx.oracle.grad_g_y(x, y) * ctx.lambda
}

/// `∇_x f(x, y) + λ(∇_x g(x, y) − ∇_x g(x, w))`.
pub fn grad_estimate(ctx: &LagrangianContext<'_>, x: &Vector, y: &Vector, w: &Vector) -> Vector {
    let o = ctx.oracle;
    o.grad_f_x(x, y) + (o.grad_g_x(x, y) - o.grad_g_x(x, w)) * ctx.lambda
}

/// Hyper-Hessian estimate with exact block inverses:
///
/// `∇²_xx L_λ(x,y) − λ∇²_xx g(x,w) − ∇²_xy L_λ [∇²_yy L_λ]⁻¹ ∇²_yx L_λ (at y)
///  + λ ∇²_xy g [∇²_yy g]⁻¹ ∇²_yx g (at w)`, symmetrized.
pub fn hess_estimate(ctx: &LagrangianContext<'_>, x: &Vector, y: &Vector, w: &Vector) -> Result<Matrix> {
    let o = ctx.oracle;
    let lam = ctx.lambda;
    let lxx = o.hess_lag_xx(x, y, lam);
    let lxy = o.hess_lag_xy(x, y, lam);
    let lyy = o.hess_lag_yy(x, y, lam);
    let gxx = o.hess_g_xx(x, w);
    let gxy = o.hess_g_xy(x, w);
    let gyy = o.hess_g_yy(x, w);
    let sol_l = spd_solve(&lyy, &lxy.transpose(), "hess_lag_yy")?;
    let sol_g = spd_solve(&gyy, &gxy.transpose(), "hess_g_yy")?;
    let h = lxx - gxx * lam - &lxy * sol_l + (&gxy * sol_g) * lam;
    Ok(symmetrize(&h))
}

/// Chebyshev approximation of `X⁻¹` for `X` with spectrum in `[μ_X, ℓ_X]`.
///
/// Works on `X̂ = X/(2ℓ_X)` with spectral bounds `μ′ = μ_X/(2ℓ_X)`, `ℓ′ = 1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevConfig {
    pub mu_x: f64,
    pub ell_x: f64,
    pub mu_prime: f64,
    pub ell_prime: f64,
    pub k_prime: usize,
    pub coeffs: Vec<f64>,
}

impl ChebyshevConfig {
    pub fn new(mu_x: f64, ell_x: f64, k_prime: usize) -> Result<Self> {
        if !(mu_x > 0.0 && mu_x.is_finite()) {
            return Err(invalid(format!("Chebyshev lower bound must be positive, got {mu_x}")));
        }
        if !(ell_x >= mu_x && ell_x.is_finite()) {
            return Err(invalid(format!("Chebyshev bounds out of order: [{mu_x}, {ell_x}]")));
        }
        let mu_p = mu_x / (2.0 * ell_x);
        let ell_p = 0.5;
        let r = (mu_p / ell_p).sqrt();
        let q = (r - 1.0) / (r + 1.0);
        let c0 = 2.0 / (ell_p * mu_p).sqrt();
        let coeffs = (0..=k_prime).map(|k| c0 * q.powi(k as i32)).collect();
        Ok(Self {
            mu_x,
            ell_x,
            mu_prime: mu_p,
            ell_prime: ell_p,
            k_prime,
            coeffs,
        })
    }

    /// Spectral-norm error bound for the approximation of `X̂⁻¹`; the bound for
    /// `X⁻¹` itself is this divided by `2ℓ_X`.
    pub fn scaled_error_bound(&self) -> f64 {
        let s = (self.ell_prime / self.mu_prime).sqrt();
        (s - 1.0) / (self.ell_prime * self.mu_prime).sqrt() * (1.0 - 2.0 / (s + 1.0)).powi(self.k_prime as i32)
    }

    /// Applies the polynomial to `u`, given a routine computing `Xv`.
    pub fn apply<F: FnMut(&Vector) -> Vector>(&self, mut apply_x: F, u: &Vector) -> Vector {
        let scale = 1.0 / (2.0 * self.ell_x);
        let mut acc = u * (self.coeffs[0] / 2.0);
        let width = self.ell_prime - self.mu_prime;
        if self.k_prime == 0 || width <= 0.0 {
            return acc * scale;
        }
        let mid = (self.ell_prime + self.mu_prime) / 2.0;
        let mut z = |v: &Vector| (apply_x(v) * scale - v * mid) * (2.0 / width);
        let mut t_prev = u.clone();
        let mut t_cur = z(u);
        acc += &t_cur * self.coeffs[1];
        for k in 2..=self.k_prime {
            let t_next = z(&t_cur) * 2.0 - &t_prev;
            acc += &t_next * self.coeffs[k];
            t_prev = std::mem::replace(&mut t_cur, t_next);
        }
        acc * scale
    }

    /// Dense form of the polynomial in `X`.
    pub fn apply_matrix(&self, x: &Matrix) -> Matrix {
        let n = x.nrows();
        let scale = 1.0 / (2.0 * self.ell_x);
        let eye = Matrix::identity(n, n);
        let mut acc = &eye * (self.coeffs[0] / 2.0);
        let width = self.ell_prime - self.mu_prime;
        if self.k_prime == 0 || width <= 0.0 {
            return acc * scale;
        }
        let mid = (self.ell_prime + self.mu_prime) / 2.0;
        let zp = (x * scale - &eye * mid) * (2.0 / width);
        let mut t_prev = eye;
        let mut t_cur = zp.clone();
        acc += &t_cur * self.coeffs[1];
        for k in 2..=self.k_prime {
            let t_next = &zp * &t_cur * 2.0 - &t_prev;
            acc += &t_next * self.coeffs[k];
            t_prev = std::mem::replace(&mut t_cur, t_next);
        }
        acc * scale
    }
}

/// Chebyshev approximation of `X⁻¹` of order `k_prime`.
pub fn cheb_inverse_apply(x: &Matrix, mu_x: f64, ell_x: f64, k_prime: usize) -> Result<Matrix> {
    Ok(ChebyshevConfig::new(mu_x, ell_x, k_prime)?.apply_matrix(x))
}

/// `κℓ(1 − 2/(√κ+1))^{K₁} + 6(λ+1)κℓ(1 − 2/(√(3κ)+1))^{K₂}`.
pub fn chebyshev_hessian_bound(p: &SmoothnessParams, lambda: f64, k1: usize, k2: usize) -> f64 {
    let (k, l) = (p.kappa, p.ell);
    let q1 = 1.0 - 2.0 / (k.sqrt() + 1.0);
    let q2 = 1.0 - 2.0 / ((3.0 * k).sqrt() + 1.0);
    k * l * q1.powi(k1 as i32) + 6.0 * (lambda + 1.0) * k * l * q2.powi(k2 as i32)
}

fn cheb_pair(ctx: &LagrangianContext<'_>, k1: usize, k2: usize) -> Result<(ChebyshevConfig, ChebyshevConfig)> {
    let p = &ctx.params;
    Ok((
        ChebyshevConfig::new(p.mu, p.ell, k1)?,
        ChebyshevConfig::new(ctx.mu2, ctx.ell2, k2)?,
    ))
}

/// Dense Chebyshev hyper-Hessian estimate: [`hess_estimate`] with
/// `[∇²_yy g]⁻¹` (bounds `[μ, ℓ]`, order `k1`) and `[∇²_yy L_λ]⁻¹`
/// (bounds `[λμ/2, (1+λ)ℓ]`, order `k2`) replaced by polynomials.
pub fn hess_estimate_cheb(
    ctx: &LagrangianContext<'_>,
    x: &Vector,
    y: &Vector,
    w: &Vector,
    k1: usize,
    k2: usize,
) -> Result<Matrix> {
    let (c1, c2) = cheb_pair(ctx, k1, k2)?;
    let o = ctx.oracle;
    let lam = ctx.lambda;
    let lxy = o.hess_lag_xy(x, y, lam);
    let gxy = o.hess_g_xy(x, w);
    let inv_l = c2.apply_matrix(&o.hess_lag_yy(x, y, lam));
    let inv_g = c1.apply_matrix(&o.hess_g_yy(x, w));
    let h = o.hess_lag_xx(x, y, lam) - o.hess_g_xx(x, w) * lam - &lxy * inv_l * lxy.transpose()
        + (&gxy * inv_g * gxy.transpose()) * lam;
    Ok(symmetrize(&h))
}

/// Matrix-free Chebyshev hyper-Hessian: each product costs
/// `6 + K₁ + K₂` Hessian-vector products and no dense blocks.
pub struct ChebHessOperator<'a> {
    ctx: LagrangianContext<'a>,
    x: Vector,
    y: Vector,
    w: Vector,
    c1: ChebyshevConfig,
    c2: ChebyshevConfig,
}

impl<'a> ChebHessOperator<'a> {
    pub fn new(ctx: &LagrangianContext<'a>, x: &Vector, y: &Vector, w: &Vector, k1: usize, k2: usize) -> Result<Self> {
        let (c1, c2) = cheb_pair(ctx, k1, k2)?;
        Ok(Self {
            ctx: *ctx,
            x: x.clone(),
            y: y.clone(),
            w: w.clone(),
            c1,
            c2,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        let o = self.ctx.oracle;
        let lam = self.ctx.lambda;
        let (x, y, w) = (&self.x, &self.y, &self.w);
        let mut out = o.hvp_lag_xx(x, y, lam, v) - o.hvp_g_xx(x, w, v) * lam;
        let u1 = self.c1.apply(|z| o.hvp_g_yy(x, w, z), &o.hvp_g_yx(x, w, v));
        out += o.hvp_g_xy(x, w, &u1) * lam;
        let u2 = self.c2.apply(|z| o.hvp_lag_yy(x, y, lam, z), &o.hvp_lag_yx(x, y, lam, v));
        out -= o.hvp_lag_xy(x, y, lam, &u2);
        out
    }
}

/// `∇_x f(x, y)`.
pub fn minimax_grad(oracle: &dyn MinimaxOracle, x: &Vector, y: &Vector) -> Vector {
    oracle.grad_f_x(x, y)
}

/// Schur complement `∇²_xx f − ∇²_xy f [∇²_yy f]⁻¹ ∇²_yx f`, symmetrized.
pub fn minimax_hess(oracle: &dyn MinimaxOracle, x: &Vector, y: &Vector) -> Result<Matrix> {
    let fxy = oracle.hess_f_xy(x, y);
    let neg_fyy = -oracle.hess_f_yy(x, y);
    let sol = spd_solve(&neg_fyy, &fxy.transpose(), "-hess_f_yy").map_err(|e| match e {
        Error::NotPositiveDefinite { min_eig, .. } => Error::NotPositiveDefinite {
            block: "-hess_f_yy (f not strongly concave in y)",
            min_eig,
        },
        other => other,
    })?;
    Ok(symmetrize(&(oracle.hess_f_xx(x, y) + &fxy * sol)))
}
