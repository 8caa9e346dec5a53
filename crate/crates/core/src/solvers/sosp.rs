use serde::Serialize;

use crate::error::invalid;
use crate::problems::{ground_truth_eval, ground_truth_minimax, BilevelOracle, GroundTruth, MinimaxOracle, Vector};
use crate::Result;

/// Default slack on both tests, absorbing the hidden constants of the
/// convergence guarantees.
pub const SOSP_SLACK: f64 = 5.0;

const GT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SospVerdict {
    pub grad_norm: f64,
    pub min_eig: f64,
    /// `[−λ_min(∇²φ)]₊`.
    pub xi: f64,
    /// `max{ξ³/(987M²), ‖∇φ‖^{3/2}/(120√(3M))}`.
    pub gamma: f64,
    /// `‖∇φ‖ ≤ slack·ε`.
    pub is_fosp: bool,
    /// Additionally `λ_min(∇²φ) ≥ −slack·√(Mε)`.
    pub is_sosp: bool,
}

impl SospVerdict {
    fn from_truth(gt: &GroundTruth, eps: f64, big_m: f64, slack: f64) -> Result<Self> {
        if !(eps > 0.0 && big_m > 0.0 && slack > 0.0) {
            return Err(invalid("eps, M and slack must be positive"));
        }
        let grad_norm = gt.grad_phi.norm();
        let xi = gt.xi;
        let gamma = (xi.powi(3) / (987.0 * big_m * big_m))
            .max(grad_norm.powf(1.5) / (120.0 * (3.0 * big_m).sqrt()));
        let is_fosp = grad_norm <= slack * eps;
        let is_sosp = is_fosp && gt.hess_phi_min_eig >= -slack * (big_m * eps).sqrt();
        Ok(Self {
            grad_norm,
            min_eig: gt.hess_phi_min_eig,
            xi,
            gamma,
            is_fosp,
            is_sosp,
        })
    }
}

pub fn sosp_check(oracle: &dyn BilevelOracle, x: &Vector, eps: f64, big_m: f64, slack: f64) -> Result<SospVerdict> {
    SospVerdict::from_truth(&ground_truth_eval(oracle, x, GT_TOL)?, eps, big_m, slack)
}

pub fn sosp_check_minimax(
    oracle: &dyn MinimaxOracle,
    x: &Vector,
    eps: f64,
    big_m: f64,
    slack: f64,
) -> Result<SospVerdict> {
    SospVerdict::from_truth(&ground_truth_minimax(oracle, x, GT_TOL)?, eps, big_m, slack)
}
