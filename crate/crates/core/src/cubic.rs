//! Solvers for the cubic-regularized model `m(s) = gᵀs + ½sᵀHs + (M/6)‖s‖³`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::invalid;
use crate::linalg::{all_finite_vec, sym_eigen_sorted};
use crate::problems::{Matrix, Vector};
use crate::{Error, Result};

/// Model Hessian: an explicit matrix or a Hessian-vector product routine.
pub enum HessianOp<'a> {
    Dense(Matrix),
    MatrixFree(&'a dyn Fn(&Vector) -> Vector),
}

impl HessianOp<'_> {
    pub fn apply(&self, v: &Vector) -> Vector {
        match self {
            HessianOp::Dense(h) => h * v,
            HessianOp::MatrixFree(f) => f(v),
        }
    }
}

pub struct CubicModel<'a> {
    pub g: Vector,
    pub h: HessianOp<'a>,
    pub m: f64,
}

impl<'a> CubicModel<'a> {
    pub fn new(g: Vector, h: HessianOp<'a>, m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid(format!("cubic weight M must be positive, got {m}")));
        }
        if let HessianOp::Dense(ref hm) = h {
            if hm.shape() != (g.len(), g.len()) {
                return Err(invalid("model Hessian shape does not match gradient"));
            }
        }
        Ok(Self { g, h, m })
    }

    pub fn dense(g: Vector, h: Matrix, m: f64) -> Result<Self> {
        Self::new(g, HessianOp::Dense(h), m)
    }

    /// `g + Hs + (M/2)‖s‖s`.
    pub fn gradient(&self, s: &Vector) -> Vector {
        &self.g + self.h.apply(s) + s * (0.5 * self.m * s.norm())
    }
}

/// `gᵀs + ½sᵀHs + (M/6)‖s‖³`.
pub fn cubic_model_value(model: &CubicModel<'_>, s: &Vector) -> f64 {
    let n = s.norm();
    model.g.dot(s) + 0.5 * s.dot(&model.h.apply(s)) + model.m / 6.0 * n * n * n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CubicBranch {
    Exact,
    Cauchy,
    PerturbedGd,
    FinalGd,
}

#[derive(Clone, Debug)]
pub struct CubicResult {
    pub s: Vector,
    /// Model value at `s`.
    pub delta: f64,
    pub branch: CubicBranch,
    pub hard_case: bool,
    /// Gradient-descent iterations performed (zero for closed-form branches).
    pub iterations: usize,
}

/// Relative threshold below which a gradient component along the minimal
/// eigenspace is treated as zero.
const HARD_CASE_TOL: f64 = 1e-12;

/// Global minimizer of a dense cubic model.
///
/// With `H = VΛVᵀ` and `g̃ = Vᵀg`, the minimizer is `s = −(H + (Mr/2)I)⁻¹g`
/// where `r = ‖s‖` solves `Σ g̃ᵢ²/(λᵢ + Mr/2)² = r²` on `r > max(0, −2λ_min/M)`.
/// In the hard case (`g` orthogonal to the minimal eigenspace and the interior
/// root infeasible) a null-direction component restores `‖s‖ = −2λ_min/M`.
pub fn cubic_solve_exact(model: &CubicModel<'_>) -> Result<CubicResult> {
    let HessianOp::Dense(h) = &model.h else {
        return Err(invalid("exact cubic solver needs a dense Hessian"));
    };
    if !all_finite_vec(&model.g) || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cubic model"));
    }
    let n = model.g.len();
    let m = model.m;
    let finish = |s: Vector, hard_case: bool| {
        let delta = cubic_model_value(model, &s);
        Ok(CubicResult {
            s,
            delta,
            branch: CubicBranch::Exact,
            hard_case,
            iterations: 0,
        })
    };
    if n == 0 {
        return finish(Vector::zeros(0), false);
    }

    let (vals, vecs) = sym_eigen_sorted(h);
    let mut gt = vecs.tr_mul(&model.g);
    let gnorm = model.g.norm();
    let hnorm = vals[0].abs().max(vals[n - 1].abs());
    let lmin = vals[0];
    let r_min = (-2.0 * lmin / m).max(0.0);
    let eig_tol = 1e-10 * hnorm.max(1e-300);
    let min_space: Vec<usize> = (0..n).filter(|&i| vals[i] - lmin <= eig_tol).collect();
    let degenerate = min_space.iter().all(|&i| gt[i].abs() <= HARD_CASE_TOL * gnorm);

    let s_of = |r: f64, gt: &Vector| -> Vector {
        let coef = Vector::from_fn(n, |i, _| {
            if gt[i] == 0.0 {
                0.0
            } else {
                -gt[i] / (vals[i] + 0.5 * m * r)
            }
        });
        &vecs * coef
    };
    let norm_of = |r: f64, gt: &Vector| -> f64 {
        gt.iter()
            .zip(vals.iter())
            .filter(|(g, _)| **g != 0.0)
            .map(|(g, l)| {
                let d = l + 0.5 * m * r;
                (g / d) * (g / d)
            })
            .sum::<f64>()
            .sqrt()
    };

    if degenerate {
        for &i in &min_space {
            gt[i] = 0.0;
        }
        if gnorm == 0.0 && lmin >= 0.0 {
            return finish(Vector::zeros(n), false);
        }
        if lmin < 0.0 {
            let sbar_norm = norm_of(r_min, &gt);
            if sbar_norm <= r_min {
                let tau = (r_min * r_min - sbar_norm * sbar_norm).max(0.0).sqrt();
                let s = s_of(r_min, &gt) + vecs.column(0) * tau;
                return finish(s, true);
            }
        }
    }

    // Root of φ(r) = 1/‖s(r)‖ − 1/r, increasing on (r_min, ∞).
    let phi = |r: f64| -> f64 {
        let sn = norm_of(r, &gt);
        if sn == 0.0 {
            f64::INFINITY
        } else {
            1.0 / sn - 1.0 / r
        }
    };
    let mut lo = r_min;
    let mut hi = 2.0 * (gnorm / m).sqrt() + 2.0 * hnorm / m;
    if hi <= lo {
        hi = lo + 2.0 * (gnorm / m).sqrt() + 1e-300;
    }
    if !(phi(hi) >= 0.0) {
        return Err(Error::Bracket);
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..500 {
        let f = phi(r);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        // Newton step on φ.
        let sn = norm_of(r, &gt);
        let sum3: f64 = gt
            .iter()
            .zip(vals.iter())
            .filter(|(g, _)| **g != 0.0)
            .map(|(g, l)| {
                let d = l + 0.5 * m * r;
                g * g / (d * d * d)
            })
            .sum();
        let dsn = -0.5 * m * sum3 / sn;
        let dphi = -dsn / (sn * sn) + 1.0 / (r * r);
        let newton = r - f / dphi;
        r = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    finish(s_of(r, &gt), false)
}

/// Options of the perturbed gradient-descent cubic solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdOptions {
    pub c_sigma: f64,
    /// Hard cap on iterations, below the theoretical `K(ε, δ′)`. Experiments only.
    pub max_iters: Option<usize>,
    /// Early exit once the model gradient norm drops below this. Experiments only.
    pub stall_tol: Option<f64>,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            c_sigma: 1.0,
            max_iters: None,
            stall_tol: None,
        }
    }
}

/// Perturbation radius `σ = C_σ M²√(ε³/M³) / (4608(4L + √(Mε)))`.
pub fn perturbation_sigma(l: f64, m: f64, eps: f64, c_sigma: f64) -> f64 {
    c_sigma * m * m * (eps.powi(3) / m.powi(3)).sqrt() / (4608.0 * (4.0 * l + (m * eps).sqrt()))
}

/// Iteration count `K(ε, δ′)` of the perturbed gradient-descent solver.
pub fn gd_iterations(l: f64, m: f64, eps: f64, delta_prime: f64, c_sigma: f64, d: usize) -> f64 {
    const C_H_TILDE: f64 = 1.0 / 200.0;
    let sme = (m * eps).sqrt();
    let a = 6.0 * (3.0 + 9.0 * (d as f64).sqrt() / delta_prime).ln();
    let b = 18.0 * (6.0 * l / sme).ln();
    let c = 14.0 * (48.0 * (l + C_H_TILDE * sme) / (c_sigma * sme) + 24.0 / c_sigma).ln();
    19200.0 * l / (c_sigma * sme) * (a + b + c)
}

fn uniform_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let nv = v.norm();
        if nv > 0.0 {
            return v / nv;
        }
    }
}

/// Cubic subproblem solver using only Hessian-vector products.
///
/// Large gradients (`‖g‖ ≥ L²/M`) take the Cauchy step along `−g`. Otherwise
/// the gradient is perturbed by `σζ` (`ζ` uniform on the sphere) and
/// `K(ε, δ′)` gradient steps with `η = 1/(20L)` are run from `s = 0`.
pub fn cubic_solve_gd<R: Rng + ?Sized>(
    model: &CubicModel<'_>,
    l: f64,
    eps: f64,
    delta_prime: f64,
    c_sigma: f64,
    rng: &mut R,
) -> Result<CubicResult> {
    let opts = GdOptions {
        c_sigma,
        ..GdOptions::default()
    };
    cubic_solve_gd_with(model, l, eps, delta_prime, &opts, rng)
}

pub fn cubic_solve_gd_with<R: Rng + ?Sized>(
    model: &CubicModel<'_>,
    l: f64,
    eps: f64,
    delta_prime: f64,
    opts: &GdOptions,
    rng: &mut R,
) -> Result<CubicResult> {
    if !(l > 0.0 && eps > 0.0) {
        return Err(invalid("L and eps must be positive"));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(invalid(format!("delta' must lie in (0, 1), got {delta_prime}")));
    }
    let m = model.m;
    let n = model.g.len();
    let gnorm = model.g.norm();
    if gnorm >= l * l / m {
        let hg = model.h.apply(&model.g);
        let a = model.g.dot(&hg) / (m * gnorm * gnorm);
        let rc = -a + (a * a + 2.0 * gnorm / m).sqrt();
        let s = &model.g * (-rc / gnorm);
        let delta = cubic_model_value(model, &s);
        return Ok(CubicResult {
            s,
            delta,
            branch: CubicBranch::Cauchy,
            hard_case: false,
            iterations: 0,
        });
    }

    let sigma = perturbation_sigma(l, m, eps, opts.c_sigma);
    let g_tilde = &model.g + uniform_sphere(n, rng) * sigma;
    let k_theory = gd_iterations(l, m, eps, delta_prime, opts.c_sigma, n).ceil();
    let mut k = if k_theory.is_finite() { k_theory as usize } else { usize::MAX };
    if let Some(cap) = opts.max_iters {
        k = k.min(cap);
    }
    let eta = 1.0 / (20.0 * l);
    let mut s = Vector::zeros(n);
    let mut iters = 0;
    while iters < k {
        let grad = &g_tilde + model.h.apply(&s) + &s * (0.5 * m * s.norm());
        if let Some(tol) = opts.stall_tol {
            if grad.norm() <= tol {
                break;
            }
        }
        s -= grad * eta;
        if !all_finite_vec(&s) {
            return Err(Error::NonFinite("cubic gradient-descent iterate"));
        }
        iters += 1;
    }
    let delta = cubic_model_value(model, &s);
    Ok(CubicResult {
        s,
        delta,
        branch: CubicBranch::PerturbedGd,
        hard_case: false,
        iterations: iters,
    })
}

/// Iteration cap `10·⌈400L²/(Mε)⌉` of [`cubic_solve_final`].
pub fn final_solver_cap(l: f64, m: f64, eps: f64) -> usize {
    10 * (400.0 * l * l / (m * eps)).ceil() as usize
}

/// Gradient descent on the model (`η = 1/(20L)`) until `‖∇m(s)‖ ≤ ε/2`.
pub fn cubic_solve_final(model: &CubicModel<'_>, eps: f64, l: f64) -> Result<CubicResult> {
    if !(l > 0.0 && eps > 0.0) {
        return Err(invalid("L and eps must be positive"));
    }
    let cap = final_solver_cap(l, model.m, eps);
    let eta = 1.0 / (20.0 * l);
    let mut s = Vector::zeros(model.g.len());
    let mut grad = model.g.clone();
    let mut iters = 0;
    while grad.norm() > eps / 2.0 {
        if iters >= cap {
            return Err(Error::IterationCap {
                what: "final cubic solver",
                cap,
            });
        }
        s -= &grad * eta;
        if !all_finite_vec(&s) {
            return Err(Error::NonFinite("final cubic solver iterate"));
        }
        grad = model.gradient(&s);
        iters += 1;
    }
    let delta = cubic_model_value(model, &s);
    Ok(CubicResult {
        s,
        delta,
        branch: CubicBranch::FinalGd,
        hard_case: false,
        iterations: iters,
    })
}
