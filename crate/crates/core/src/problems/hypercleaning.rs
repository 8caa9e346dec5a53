//! Data hypercleaning: learn per-sample weights `σ(x_i)` on a noisy training set.
//!
//! Upper level: mean validation cross-entropy of the linear model `y`.
//! Lower level: `(1/n) Σ σ(x_i) ℓ(⟨a_i, y⟩, b_i) + c‖y‖²` with `σ` the logistic sigmoid.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BilevelOracle, Matrix, SmoothnessParams, SparseMatrix, Vector};
use crate::error::invalid;
use crate::linalg::{gaussian_vector, spectral_norm};
use crate::{Error, Result};

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᶻ) − b z`.
pub(crate) fn logistic_loss(z: f64, b: f64) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - b * z
}

#[derive(Clone, Debug)]
pub struct Hypercleaning {
    a_tr: SparseMatrix,
    b_tr: Vec<f64>,
    a_val: SparseMatrix,
    b_val: Vec<f64>,
    c: f64,
    flipped: Vec<usize>,
    params: SmoothnessParams,
}

/// Splits `(features, labels)` into train/validation by a seeded shuffle, then
/// flips the labels of `round(p · n_train)` training samples (also seeded).
/// Labels must be 0/1.
pub fn make_hypercleaning(
    features: &SparseMatrix,
    labels: &[f64],
    val_split: f64,
    p: f64,
    c: f64,
    seed: u64,
) -> Result<Hypercleaning> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::Data(format!("{} labels for {} rows", labels.len(), n)));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(invalid(format!("noise rate must lie in [0, 1), got {p}")));
    }
    if !(c > 0.0) {
        return Err(invalid(format!("c must be positive, got {c}")));
    }
    if !(0.0 < val_split && val_split < 1.0) {
        return Err(invalid(format!("val_split must lie in (0, 1), got {val_split}")));
    }
    if labels.iter().any(|&b| b != 0.0 && b != 1.0) {
        return Err(Error::Data("hypercleaning labels must be 0 or 1".into()));
    }
    let n_val = (val_split * n as f64).round() as usize;
    let n_tr = n.saturating_sub(n_val);
    if n_val < 2 || n_tr < 2 {
        return Err(Error::Data(format!("need at least 2 samples per split, got {n_tr} train / {n_val} val")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (tr_idx, val_idx) = order.split_at(n_tr);

    let mut b_tr: Vec<f64> = tr_idx.iter().map(|&i| labels[i]).collect();
    let mut pos: Vec<usize> = (0..n_tr).collect();
    pos.shuffle(&mut rng);
    let n_flip = (p * n_tr as f64).round() as usize;
    let mut flipped: Vec<usize> = pos[..n_flip].to_vec();
    flipped.sort_unstable();
    for &i in &flipped {
        b_tr[i] = 1.0 - b_tr[i];
    }

    let a_tr = features.select_rows(tr_idx);
    let a_val = features.select_rows(val_idx);
    let b_val = val_idx.iter().map(|&i| labels[i]).collect();
    let params = estimate_params(&a_tr, &a_val, c)?;
    Ok(Hypercleaning {
        a_tr,
        b_tr,
        a_val,
        b_val,
        c,
        flipped,
        params,
    })
}

/// Smoothness estimates. `μ = 2c` and the `yy`/`xy` block bounds are exact
/// upper bounds; the `xx` block and `ρ` depend on `‖y‖` and assume `‖y‖ ≤ 10`.
fn estimate_params(a_tr: &SparseMatrix, a_val: &SparseMatrix, c: f64) -> Result<SmoothnessParams> {
    let n_tr = a_tr.nrows() as f64;
    let n_val = a_val.nrows() as f64;
    let s_tr = spectral_norm(&a_tr.to_dense());
    let s_val = spectral_norm(&a_val.to_dense());
    let max_row = (0..a_tr.nrows())
        .map(|i| a_tr.row_norm_sq(i).sqrt())
        .chain((0..a_val.nrows()).map(|i| a_val.row_norm_sq(i).sqrt()))
        .fold(0.0, f64::max);
    const Y_BOUND: f64 = 10.0;
    let ell_f = 0.25 * s_val * s_val / n_val;
    let g_yy = 0.25 * s_tr * s_tr / n_tr + 2.0 * c;
    let g_xy = 0.25 * s_tr / n_tr;
    let g_xx = 0.1 * (std::f64::consts::LN_2 + max_row * Y_BOUND) / n_tr;
    let ell = ell_f.max(g_yy + g_xy + g_xx);
    let rho = 0.1 * max_row.powi(3) + 0.25 * max_row.powi(2) + 0.1 * max_row;
    SmoothnessParams::new(2.0 * c, ell, rho, rho, max_row)
}

/// Gaussian features with `‖a_i‖ ≈ 1`; labels drawn from a logistic model with
/// a random ground-truth direction (signal-to-noise factor 4).
pub fn synthetic_logistic(n: usize, d: usize, seed: u64) -> (SparseMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = gaussian_vector(d, &mut rng);
    let scale = 1.0 / (d as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a = gaussian_vector(d, &mut rng) * scale;
        let prob = sigmoid(4.0 * a.dot(&w));
        labels.push(if rng.random::<f64>() < prob { 1.0 } else { 0.0 });
        rows.push(a.iter().copied().enumerate().collect::<Vec<_>>());
    }
    (SparseMatrix::from_rows(d, &rows).expect("dense rows"), labels)
}

fn ce_grad(a: &SparseMatrix, b: &[f64], y: &Vector, weights: Option<&[f64]>) -> Vector {
    let n = a.nrows() as f64;
    let mut out = vec![0.0; a.ncols()];
    for i in 0..a.nrows() {
        let z = a.row_dot(i, y.as_slice());
        let w = weights.map_or(1.0, |w| w[i]);
        a.row_axpy(i, w * (sigmoid(z) - b[i]) / n, &mut out);
    }
    Vector::from_vec(out)
}

fn ce_hess(a: &SparseMatrix, y: &Vector, weights: Option<&[f64]>) -> Matrix {
    let d = a.ncols();
    let n = a.nrows() as f64;
    let mut h = Matrix::zeros(d, d);
    for i in 0..a.nrows() {
        let s = sigmoid(a.row_dot(i, y.as_slice()));
        let w = weights.map_or(1.0, |w| w[i]) * s * (1.0 - s) / n;
        for (j, aj) in a.row(i) {
            for (k, ak) in a.row(i) {
                h[(j, k)] += w * aj * ak;
            }
        }
    }
    h
}

fn ce_hvp(a: &SparseMatrix, y: &Vector, v: &Vector, weights: Option<&[f64]>) -> Vector {
    let n = a.nrows() as f64;
    let mut out = vec![0.0; a.ncols()];
    for i in 0..a.nrows() {
        let s = sigmoid(a.row_dot(i, y.as_slice()));
        let w = weights.map_or(1.0, |w| w[i]) * s * (1.0 - s) / n;
        a.row_axpy(i, w * a.row_dot(i, v.as_slice()), &mut out);
    }
    Vector::from_vec(out)
}

impl Hypercleaning {
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n_train(&self) -> usize {
        self.a_tr.nrows()
    }

    pub fn n_val(&self) -> usize {
        self.a_val.nrows()
    }

    /// Training indices whose labels were flipped, ascending.
    pub fn flipped(&self) -> &[usize] {
        &self.flipped
    }

    pub fn train_labels(&self) -> &[f64] {
        &self.b_tr
    }

    /// Mean validation cross-entropy of `y`.
    pub fn val_loss(&self, y: &Vector) -> f64 {
        let n = self.a_val.nrows() as f64;
        (0..self.a_val.nrows())
            .map(|i| logistic_loss(self.a_val.row_dot(i, y.as_slice()), self.b_val[i]))
            .sum::<f64>()
            / n
    }

    fn weights(x: &Vector) -> Vec<f64> {
        x.iter().map(|&t| sigmoid(t)).collect()
    }

    /// Per-sample `(σ′(x_i)(p_i − b_i)/n)` used by the `xy` block.
    fn cross_coeffs(&self, x: &Vector, y: &Vector) -> Vec<f64> {
        let n = self.a_tr.nrows() as f64;
        (0..self.a_tr.nrows())
            .map(|i| {
                let s = sigmoid(x[i]);
                let p = sigmoid(self.a_tr.row_dot(i, y.as_slice()));
                s * (1.0 - s) * (p - self.b_tr[i]) / n
            })
            .collect()
    }

    fn train_losses(&self, y: &Vector) -> Vec<f64> {
        (0..self.a_tr.nrows())
            .map(|i| logistic_loss(self.a_tr.row_dot(i, y.as_slice()), self.b_tr[i]))
            .collect()
    }
}

impl BilevelOracle for Hypercleaning {
    fn dims(&self) -> (usize, usize) {
        (self.a_tr.nrows(), self.a_tr.ncols())
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    fn f_val(&self, _x: &Vector, y: &Vector) -> f64 {
        self.val_loss(y)
    }

    fn g_val(&self, x: &Vector, y: &Vector) -> f64 {
        let n = self.a_tr.nrows() as f64;
        let losses = self.train_losses(y);
        let data: f64 = losses.iter().zip(x.iter()).map(|(l, &t)| sigmoid(t) * l).sum();
        data / n + self.c * y.norm_squared()
    }

    fn grad_f_x(&self, _x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(self.a_tr.nrows())
    }

    fn grad_f_y(&self, _x: &Vector, y: &Vector) -> Vector {
        ce_grad(&self.a_val, &self.b_val, y, None)
    }

    fn grad_g_x(&self, x: &Vector, y: &Vector) -> Vector {
        let n = self.a_tr.nrows() as f64;
        let losses = self.train_losses(y);
        Vector::from_fn(x.len(), |i, _| {
            let s = sigmoid(x[i]);
            s * (1.0 - s) * losses[i] / n
        })
    }

    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        ce_grad(&self.a_tr, &self.b_tr, y, Some(&Self::weights(x))) + y * (2.0 * self.c)
    }

    fn hess_f_xx(&self, x: &Vector, _y: &Vector) -> Matrix {
        Matrix::zeros(x.len(), x.len())
    }

    fn hess_f_xy(&self, x: &Vector, y: &Vector) -> Matrix {
        Matrix::zeros(x.len(), y.len())
    }

    fn hess_f_yy(&self, _x: &Vector, y: &Vector) -> Matrix {
        ce_hess(&self.a_val, y, None)
    }

    fn hess_g_xx(&self, x: &Vector, y: &Vector) -> Matrix {
        Matrix::from_diagonal(&self.hvp_g_xx(x, y, &Vector::from_element(x.len(), 1.0)))
    }

    fn hess_g_xy(&self, x: &Vector, y: &Vector) -> Matrix {
        let coeffs = self.cross_coeffs(x, y);
        let mut m = Matrix::zeros(x.len(), y.len());
        for (i, &ci) in coeffs.iter().enumerate() {
            for (j, a) in self.a_tr.row(i) {
                m[(i, j)] = ci * a;
            }
        }
        m
    }

    fn hess_g_yy(&self, x: &Vector, y: &Vector) -> Matrix {
        let mut h = ce_hess(&self.a_tr, y, Some(&Self::weights(x)));
        for j in 0..y.len() {
            h[(j, j)] += 2.0 * self.c;
        }
        h
    }

    fn hvp_f_xx(&self, x: &Vector, _y: &Vector, _v: &Vector) -> Vector {
        Vector::zeros(x.len())
    }

    fn hvp_f_xy(&self, x: &Vector, _y: &Vector, _v: &Vector) -> Vector {
        Vector::zeros(x.len())
    }

    fn hvp_f_yx(&self, _x: &Vector, y: &Vector, _v: &Vector) -> Vector {
        Vector::zeros(y.len())
    }

    fn hvp_f_yy(&self, _x: &Vector, y: &Vector, v: &Vector) -> Vector {
        ce_hvp(&self.a_val, y, v, None)
    }

    fn hvp_g_xx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let n = self.a_tr.nrows() as f64;
        let losses = self.train_losses(y);
        Vector::from_fn(x.len(), |i, _| {
            let s = sigmoid(x[i]);
            s * (1.0 - s) * (1.0 - 2.0 * s) * losses[i] / n * v[i]
        })
    }

    fn hvp_g_xy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let coeffs = self.cross_coeffs(x, y);
        Vector::from_fn(x.len(), |i, _| coeffs[i] * self.a_tr.row_dot(i, v.as_slice()))
    }

    fn hvp_g_yx(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let coeffs = self.cross_coeffs(x, y);
        let mut out = vec![0.0; y.len()];
        for (i, &ci) in coeffs.iter().enumerate() {
            self.a_tr.row_axpy(i, ci * v[i], &mut out);
        }
        Vector::from_vec(out)
    }

    fn hvp_g_yy(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        ce_hvp(&self.a_tr, y, v, Some(&Self::weights(x))) + v * (2.0 * self.c)
    }
}
