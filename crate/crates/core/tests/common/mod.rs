#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sobo::linalg::gaussian_vector;
use sobo::problems::{BilevelOracle, Matrix, SmoothnessParams, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(n: usize, seed: u64) -> Vector {
    gaussian_vector(n, &mut rng(seed))
}

pub fn vecf(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

/// Central-difference gradient of a scalar function.
pub fn fd_grad(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    Vector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        }),
    )
}

/// Central-difference Jacobian of a vector function (columns are partials).
pub fn fd_jac(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
    let m = f(x).len();
    let mut j = Matrix::zeros(m, x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        j.set_column(i, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

pub fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// Forwards every oracle but hides the closed form, forcing generic code paths.
pub struct Opaque<'a>(pub &'a dyn BilevelOracle);

impl BilevelOracle for Opaque<'_> {
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
        self.0.g_val(x, y)
    }
    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_f_x(x, y)
    }
    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_f_y(x, y)
    }
    fn grad_g_x(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_g_x(x, y)
    }
    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_g_y(x, y)
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
        self.0.hess_g_xx(x, y)
    }
    fn hess_g_xy(&self, x: &Vector, y: &Vector) -> Matrix {
        self.0.hess_g_xy(x, y)
    }
    fn hess_g_yy(&self, x: &Vector, y: &Vector) -> Matrix {
        self.0.hess_g_yy(x, y)
    }
    fn inner_curvature(&self, x: &Vector) -> (f64, f64) {
        self.0.inner_curvature(x)
    }
}

/// Value of `gᵀs + ½sᵀHs + (M/6)‖s‖³`, computed independently of the library.
pub fn model_value(g: &Vector, h: &Matrix, m: f64, s: &Vector) -> f64 {
    g.dot(s) + 0.5 * s.dot(&(h * s)) + m / 6.0 * s.norm().powi(3)
}

/// Brute-force minimizer of a 2-D cubic model: a polar grid over directions,
/// with the radial cubic minimized in closed form, then golden-section polish
/// of the direction.
pub fn brute_force_2d(g: &Vector, h: &Matrix, m: f64) -> (Vector, f64) {
    let along = |th: f64| -> (f64, f64) {
        let u = Vector::from_column_slice(&[th.cos(), th.sin()]);
        let a = g.dot(&u);
        let b = u.dot(&(h * &u));
        // minimize a r + b r²/2 + m r³/6 over r ≥ 0; stationary: m r²/2 + b r + a = 0
        let disc = b * b - 2.0 * m * a;
        let mut best = (0.0, 0.0);
        if disc >= 0.0 {
            let r = (-b + disc.sqrt()) / m;
            if r > 0.0 {
                let v = a * r + 0.5 * b * r * r + m / 6.0 * r.powi(3);
                if v < best.1 {
                    best = (r, v);
                }
            }
        }
        best
    };
    let n = 20_000;
    let step = std::f64::consts::TAU / n as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..n {
        let v = along(i as f64 * step).1;
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = ((best_i as f64 - 1.0) * step, (best_i as f64 + 1.0) * step);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = hi - gr * (hi - lo);
        let d = lo + gr * (hi - lo);
        if along(c).1 < along(d).1 {
            hi = d;
        } else {
            lo = c;
        }
    }
    let th = 0.5 * (lo + hi);
    let (r, v) = along(th);
    (Vector::from_column_slice(&[r * th.cos(), r * th.sin()]), v)
}

/// Random symmetric matrix with eigenvalues uniform in `[lo, hi]`.
pub fn sym_with_spectrum(d: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    use rand::Rng;
    let mut r = rng(seed);
    let u = sobo::linalg::random_orthogonal(d, &mut r);
    let eig = Vector::from_iterator(d, (0..d).map(|_| r.random_range(lo..hi)));
    &u * Matrix::from_diagonal(&eig) * u.transpose()
}

/// Hard-case model: `g` orthogonal to the bottom eigenvector of `H`, and small
/// enough that the boundary of the hard case is reached.
pub fn hard_case_model(d: usize, seed: u64, m: f64) -> (Vector, Matrix) {
    use rand::Rng;
    let mut r = rng(seed);
    let u = sobo::linalg::random_orthogonal(d, &mut r);
    let lmin = -r.random_range(0.5..2.0);
    let mut eig = vec![lmin];
    eig.extend((1..d).map(|_| r.random_range(0.0..3.0)));
    let h = &u * Matrix::from_diagonal(&Vector::from_vec(eig.clone())) * u.transpose();
    // components only along the other eigenvectors, scaled so ‖s̄(r_min)‖ < r_min
    let r_min = -2.0 * lmin / m;
    let mut g = Vector::zeros(d);
    for i in 1..d {
        let c: f64 = r.random_range(-1.0..1.0);
        g += u.column(i) * c;
    }
    let sbar: f64 = (1..d)
        .map(|i| {
            let gi = u.column(i).dot(&g);
            (gi / (eig[i] - lmin)).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    if sbar > 0.0 {
        g *= 0.5 * r_min / sbar;
    }
    // remove roundoff along the bottom eigenvector
    let v0 = u.column(0).into_owned();
    let proj = v0.dot(&g);
    g -= v0 * proj;
    (g, h)
}
