//! Hyperparameter tuning with per-feature exponential ridge penalties.
//!
//! `y` is a `c × p` weight matrix flattened row-major (entry `(j, k)` at `j·p + k`).
//! Upper level: validation softmax cross-entropy. Lower level: training
//! cross-entropy plus `(1/(2cp)) Σ_{j,k} exp(x_k) y_{jk}²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BilevelOracle, Matrix, SmoothnessParams, SparseMatrix, Vector};
use crate::linalg::{gaussian_vector, spectral_norm};
use crate::{Error, Result};

/// Box `|x_k| ≤ X_BOX` over which `params()` bounds hold.
const X_BOX: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct ExpRidgeTuning {
    a_tr: SparseMatrix,
    b_tr: Vec<usize>,
    a_val: SparseMatrix,
    b_val: Vec<usize>,
    classes: usize,
    ce_bound: f64,
    params: SmoothnessParams,
}

pub fn make_exp_ridge_tuning(
    train: (&SparseMatrix, &[usize]),
    val: (&SparseMatrix, &[usize]),
) -> Result<ExpRidgeTuning> {
    let (a_tr, b_tr) = train;
    let (a_val, b_val) = val;
    let p = a_tr.ncols();
    if p == 0 || a_val.ncols() != p {
        return Err(Error::Data("feature dimensions must be positive and agree".into()));
    }
    if a_tr.nrows() == 0 || a_val.nrows() == 0 || b_tr.len() != a_tr.nrows() || b_val.len() != a_val.nrows() {
        return Err(Error::Data("empty split or label count mismatch".into()));
    }
    let classes = b_tr.iter().chain(b_val).max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(Error::Data("need at least 2 classes".into()));
    }
    let cp = (classes * p) as f64;
    let s_tr = spectral_norm(&a_tr.to_dense());
    let s_val = spectral_norm(&a_val.to_dense());
    let ce_bound = 0.5 * s_tr * s_tr / a_tr.nrows() as f64;
    let ell_f = 0.5 * s_val * s_val / a_val.nrows() as f64;
    let mu = (-X_BOX).exp() / cp;
    let ell = ell_f.max(ce_bound + 2.0 * X_BOX.exp() / cp);
    let params = SmoothnessParams::new(mu, ell, ell, ell, ell)?;
    Ok(ExpRidgeTuning {
        a_tr: a_tr.clone(),
        b_tr: b_tr.to_vec(),
        a_val: a_val.clone(),
        b_val: b_val.to_vec(),
        classes,
        ce_bound,
        params,
    })
}

/// Gaussian features and labels from a random softmax model.
pub fn synthetic_multinomial(n: usize, p: usize, classes: usize, seed: u64) -> (SparseMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<Vector> = (0..classes).map(|_| gaussian_vector(p, &mut rng) * 2.0).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a = gaussian_vector(p, &mut rng) / (p as f64).sqrt();
        let probs = softmax(&w.iter().map(|wj| wj.dot(&a)).collect::<Vec<_>>());
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = classes - 1;
        for (j, pj) in probs.iter().enumerate() {
            acc += pj;
            if u < acc {
                label = j;
                break;
            }
        }
        labels.push(label);
        rows.push(a.iter().copied().enumerate().collect::<Vec<_>>());
    }
    (SparseMatrix::from_rows(p, &rows).expect("dense rows"), labels)
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl ExpRidgeTuning {
    pub fn classes(&self) -> usize {
        self.classes
    }

    fn p(&self) -> usize {
        self.a_tr.ncols()
    }

    fn cp(&self) -> f64 {
        (self.classes * self.p()) as f64
    }

    fn logits(&self, a: &SparseMatrix, i: usize, y: &Vector) -> Vec<f64> {
        let p = self.p();
        (0..self.classes).map(|j| a.row_dot(i, &y.as_slice()[j * p..(j + 1) * p])).collect()
    }

    fn ce_val(&self, a: &SparseMatrix, b: &[usize], y: &Vector) -> f64 {
        let mut total = 0.0;
        for i in 0..a.nrows() {
            let z = self.logits(a, i, y);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - z[b[i]];
        }
        total / a.nrows() as f64
    }

    fn ce_grad(&self, a: &SparseMatrix, b: &[usize], y: &Vector) -> Vector {
        let p = self.p();
        let n = a.nrows() as f64;
        let mut out = vec![0.0; self.classes * p];
        for (i, &bi) in b.iter().enumerate() {
            let probs = softmax(&self.logits(a, i, y));
            for (j, pj) in probs.iter().enumerate() {
                let r = pj - if j == bi { 1.0 } else { 0.0 };
                a.row_axpy(i, r / n, &mut out[j * p..(j + 1) * p]);
            }
        }
        Vector::from_vec(out)
    }

    fn ce_hess(&self, a: &SparseMatrix, y: &Vector) -> Matrix {
        let p = self.p();
        let n = a.nrows() as f64;
        let dim = self.classes * p;
        let mut h = Matrix::zeros(dim, dim);
        for i in 0..a.nrows() {
            let probs = softmax(&self.logits(a, i, y));
            for j in 0..self.classes {
                for jj in 0..self.classes {
                    let s = (if j == jj { probs[j] } else { 0.0 }) - probs[j] * probs[jj];
                    if s == 0.0 {
                        continue;
                    }
                    for (k, ak) in a.row(i) {
                        for (kk, akk) in a.row(i) {
                            h[(j * p + k, jj * p + kk)] += s * ak * akk / n;
                        }
                    }
                }
            }
        }
        h
    }
}

impl BilevelOracle for ExpRidgeTuning {
    fn dims(&self) -> (usize, usize) {
        (self.p(), self.classes * self.p())
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    /// Strong convexity comes only from the penalty, so it scales with `min_k exp(x_k)`.
    fn inner_curvature(&self, x: &Vector) -> (f64, f64) {
        let cp = self.cp();
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min).exp() / cp;
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp() / cp;
        (lo, self.ce_bound + hi)
    }

    fn f_val(&self, _x: &Vector, y: &Vector) -> f64 {
        self.ce_val(&self.a_val, &self.b_val, y)
    }

    fn g_val(&self, x: &Vector, y: &Vector) -> f64 {
        let p = self.p();
        let reg: f64 = (0..y.len()).map(|i| x[i % p].exp() * y[i] * y[i]).sum();
        self.ce_val(&self.a_tr, &self.b_tr, y) + reg / (2.0 * self.cp())
    }

    fn grad_f_x(&self, x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(x.len())
    }

    fn grad_f_y(&self, _x: &Vector, y: &Vector) -> Vector {
        self.ce_grad(&self.a_val, &self.b_val, y)
    }

    fn grad_g_x(&self, x: &Vector, y: &Vector) -> Vector {
        let p = self.p();
        let mut out = Vector::zeros(p);
        for i in 0..y.len() {
            out[i % p] += y[i] * y[i];
        }
        for k in 0..p {
            out[k] *= x[k].exp() / (2.0 * self.cp());
        }
        out
    }

    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        let p = self.p();
        let cp = self.cp();
        let mut g = self.ce_grad(&self.a_tr, &self.b_tr, y);
        for i in 0..y.len() {
            g[i] += x[i % p].exp() * y[i] / cp;
        }
        g
    }

    fn hess_f_xx(&self, x: &Vector, _y: &Vector) -> Matrix {
        Matrix::zeros(x.len(), x.len())
    }

    fn hess_f_xy(&self, x: &Vector, y: &Vector) -> Matrix {
        Matrix::zeros(x.len(), y.len())
    }

    fn hess_f_yy(&self, _x: &Vector, y: &Vector) -> Matrix {
        self.ce_hess(&self.a_val, y)
    }

    fn hess_g_xx(&self, x: &Vector, y: &Vector) -> Matrix {
        Matrix::from_diagonal(&self.grad_g_x(x, y))
    }

    fn hess_g_xy(&self, x: &Vector, y: &Vector) -> Matrix {
        let p = self.p();
        let cp = self.cp();
        let mut m = Matrix::zeros(p, y.len());
        for i in 0..y.len() {
            let k = i % p;
            m[(k, i)] = x[k].exp() * y[i] / cp;
        }
        m
    }

    fn hess_g_yy(&self, x: &Vector, y: &Vector) -> Matrix {
        let p = self.p();
        let cp = self.cp();
        let mut h = self.ce_hess(&self.a_tr, y);
        for i in 0..y.len() {
            h[(i, i)] += x[i % p].exp() / cp;
        }
        h
    }
}
