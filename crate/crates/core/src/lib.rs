//! Second-order methods for bilevel and minimax optimization.
//!
//! The bilevel problem is `min_x φ(x) = f(x, y*(x))` with `y*(x) = argmin_y g(x, y)`.
//! Solvers work on the penalty proxy `L*_λ(x) = f(x, y*_λ) + λ(g(x, y*_λ) − g(x, y*))`,
//! whose gradient and Hessian need only first- and second-order oracles of `f` and `g`.
//!
//! Module map:
//! - [`problems`]: oracle traits, test families, ground-truth evaluation
//! - [`agd`]: accelerated inner solver and iteration schedules
//! - [`estimators`]: hypergradient / hyper-Hessian estimates, Chebyshev inverses
//! - [`cubic`]: cubic-regularized subproblem solvers
//! - [`solvers`]: FSBA, IFSBA, LFSBA, LMCN and the F²BA / GDA baselines
//! - [`telemetry`]: oracle-call accounting and traces

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agd;
pub mod cubic;
pub mod estimators;
mod error;
pub mod linalg;
pub mod problems;
pub mod solvers;
pub mod telemetry;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
