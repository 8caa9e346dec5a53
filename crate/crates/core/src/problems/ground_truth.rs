use serde::Serialize;

use super::{BilevelOracle, MinimaxAsBilevel, MinimaxOracle, Vector};
use crate::agd::{agd_run, AgdConfig};
use crate::error::invalid;
use crate::linalg::{min_eig, spd_solve, symmetrize};
use crate::{Error, Result};

/// Exact (or high-accuracy) hyper-objective quantities at a point.
#[derive(Clone, Debug, Serialize)]
pub struct GroundTruth {
    pub phi: f64,
    pub grad_phi: Vector,
    pub hess_phi_min_eig: f64,
    /// `[−λ_min(∇²φ)]₊`.
    pub xi: f64,
    pub y_star: Vector,
}

const INNER_CAP: usize = 1_000_000;

/// Minimizes `g(x, ·)` from `y0` to `‖∇_y g‖ ≤ tol` by AGD, restarting the
/// momentum every `⌈4√κ⌉` steps.
pub fn inner_solve(oracle: &dyn BilevelOracle, x: &Vector, y0: &Vector, tol: f64) -> Result<Vector> {
    let (mu, ell) = oracle.inner_curvature(x);
    let kappa = ell / mu;
    let cfg = AgdConfig::strongly_convex(ell, kappa, (4.0 * kappa.sqrt()).ceil() as usize);
    let mut y = y0.clone();
    let mut used = 0;
    loop {
        if oracle.grad_g_y(x, &y).norm() <= tol {
            return Ok(y);
        }
        if used >= INNER_CAP {
            return Err(Error::IterationCap {
                what: "ground-truth inner solve",
                cap: INNER_CAP,
            });
        }
        y = agd_run(|z| oracle.grad_g_y(x, z), &y, &cfg)?;
        used += cfg.k;
    }
}

fn implicit_grad(oracle: &dyn BilevelOracle, x: &Vector, y: &Vector) -> Result<Vector> {
    let gy = oracle.grad_f_y(x, y);
    let rhs = nalgebra::DMatrix::from_column_slice(gy.len(), 1, gy.as_slice());
    let sol = spd_solve(&oracle.hess_g_yy(x, y), &rhs, "hess_g_yy")?;
    Ok(oracle.grad_f_x(x, y) - oracle.hess_g_xy(x, y) * sol.column(0))
}

/// Evaluates `φ`, `∇φ` and `λ_min(∇²φ)` at `x`.
///
/// Uses the closed form when the oracle provides one. Otherwise the inner
/// problem is solved to `tol`, `∇φ` comes from the implicit-function formula,
/// and `∇²φ` from central differences of `∇φ` with step `√tol`.
pub fn ground_truth_eval(oracle: &dyn BilevelOracle, x: &Vector, tol: f64) -> Result<GroundTruth> {
    if !(tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    if let Some(cf) = oracle.closed_form() {
        let min_e = min_eig(&cf.hess_phi(x));
        return Ok(GroundTruth {
            phi: cf.phi(x),
            grad_phi: cf.grad_phi(x),
            hess_phi_min_eig: min_e,
            xi: (-min_e).max(0.0),
            y_star: cf.y_star(x),
        });
    }
    let (_, dy) = oracle.dims();
    let y_star = inner_solve(oracle, x, &Vector::zeros(dy), tol)?;
    let grad_phi = implicit_grad(oracle, x, &y_star)?;
    let h = tol.sqrt();
    let n = x.len();
    let mut hess = nalgebra::DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let gp = implicit_grad(oracle, &xp, &inner_solve(oracle, &xp, &y_star, tol)?)?;
        let gm = implicit_grad(oracle, &xm, &inner_solve(oracle, &xm, &y_star, tol)?)?;
        hess.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    let min_e = min_eig(&symmetrize(&hess));
    Ok(GroundTruth {
        phi: oracle.f_val(x, &y_star),
        grad_phi,
        hess_phi_min_eig: min_e,
        xi: (-min_e).max(0.0),
        y_star,
    })
}

/// [`ground_truth_eval`] for `min_x max_y f`, via the bilevel view `g = −f`.
pub fn ground_truth_minimax(oracle: &dyn MinimaxOracle, x: &Vector, tol: f64) -> Result<GroundTruth> {
    ground_truth_eval(&MinimaxAsBilevel(oracle), x, tol)
}
