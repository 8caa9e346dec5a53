mod common;

use common::{fd_grad, fd_jac, randn, rel_err, vecf, Opaque};
use proptest::prelude::*;
use sobo::linalg::{min_eig, symmetrize};
use sobo::problems::*;

fn scalar(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

#[test]
fn decoupled_identity_quadratic_has_half_square_phi() {
    let z = Vector::zeros(1);
    let q = QuadraticBilevel::from_parts(
        scalar(1.0),
        scalar(0.0),
        scalar(0.0),
        z.clone(),
        z.clone(),
        scalar(1.0),
        scalar(0.0),
        z.clone(),
    )
    .unwrap();
    for x in [-2.0, 0.0, 0.7] {
        assert!((q.phi(&vecf(&[x])) - 0.5 * x * x).abs() < 1e-14);
    }
    assert_eq!(q.grad_phi(&z)[0], 0.0);
}

#[test]
fn quadratic_grad_phi_matches_finite_differences() {
    for seed in 0..5 {
        let q = make_quadratic_bilevel(seed, 4, 6, 20.0).unwrap();
        let x = randn(4, 100 + seed);
        let fd = fd_grad(|x| q.phi(x), &x, 1e-5);
        assert!(rel_err(&q.grad_phi(&x), &fd) < 1e-6, "seed {seed}");
    }
}

#[test]
fn quadratic_hess_phi_matches_finite_differences_of_grad() {
    let q = make_quadratic_bilevel(3, 5, 5, 10.0).unwrap();
    let x = randn(5, 9);
    let fd = fd_jac(|x| q.grad_phi(x), &x, 1e-5);
    assert!((q.hess_phi(&x) - fd).norm() < 1e-6);
}

#[test]
fn quadratic_y_star_satisfies_inner_first_order_condition() {
    let q = make_quadratic_bilevel(11, 2, 2, 10.0).unwrap();
    for s in 0..10 {
        let x = randn(2, s);
        assert!(q.grad_g_y(&x, &q.y_star(&x)).norm() <= 1e-10);
    }
}

#[test]
fn quadratic_y_lambda_star_minimizes_penalized_inner() {
    let q = make_quadratic_bilevel(4, 3, 4, 10.0).unwrap();
    let x = randn(3, 1);
    let lam = 50.0;
    let y = q.y_lambda_star(&x, lam).unwrap();
    let g = q.grad_f_y(&x, &y) + q.grad_g_y(&x, &y) * lam;
    assert!(g.norm() <= 1e-10);
}

#[test]
fn quadratic_hess_phi_is_constant_in_x() {
    let q = make_quadratic_bilevel(5, 4, 3, 10.0).unwrap();
    let a = q.hess_phi(&randn(4, 1));
    let b = q.hess_phi(&randn(4, 2));
    assert!((a - b).amax() <= 1e-10);
}

#[test]
fn quadratic_generator_hits_requested_conditioning() {
    let q = make_quadratic_bilevel(0, 5, 5, 10.0).unwrap();
    let p = q.params();
    assert!((p.mu - 1.0).abs() < 1e-9);
    assert!(p.kappa >= 10.0 - 1e-9);
    assert_eq!(p.rho, 0.0);
    let h = q.hess_phi(&Vector::zeros(5));
    let e = symmetrize(&h).symmetric_eigenvalues();
    assert!(e.min() >= 0.5 - 1e-9 && e.max() <= 1.5 + 1e-9);
    assert!(q.grad_phi(&q.x_star()).norm() < 1e-10);
}

#[test]
fn quadratic_generator_is_seed_deterministic() {
    let a = make_quadratic_bilevel(7, 3, 3, 5.0).unwrap();
    let b = make_quadratic_bilevel(7, 3, 3, 5.0).unwrap();
    let x = randn(3, 0);
    assert_eq!(a.grad_phi(&x), b.grad_phi(&x));
    assert_eq!(a.hess_g_yy(&x, &x), b.hess_g_yy(&x, &x));
}

#[test]
fn quadratic_rejects_bad_shapes_and_indefinite_q() {
    let z = Vector::zeros(1);
    assert!(QuadraticBilevel::from_parts(
        scalar(1.0),
        scalar(0.0),
        scalar(0.0),
        z.clone(),
        z.clone(),
        scalar(-1.0),
        scalar(0.0),
        z.clone()
    )
    .is_err());
    assert!(QuadraticBilevel::from_parts(
        scalar(1.0),
        Matrix::zeros(1, 2),
        scalar(0.0),
        z.clone(),
        z.clone(),
        scalar(1.0),
        scalar(0.0),
        z
    )
    .is_err());
    assert!(make_quadratic_bilevel(0, 0, 2, 10.0).is_err());
}

const EPS: f64 = 0.01;
const L: f64 = 3.0;

#[test]
fn w_is_zero_at_origin() {
    assert_eq!(w_piecewise(0.0, EPS, L), (0.0, 0.0, -2.0 * EPS.sqrt()));
}

#[test]
fn w_valley_vertex() {
    let xv = -(L + 1.0) * EPS.sqrt();
    let (v, d, _) = w_piecewise(xv, EPS, L);
    let expect = -(3.0 * L + 1.0) * EPS.powf(1.5) / 3.0;
    assert!((v - expect).abs() < 1e-15);
    assert!(d.abs() < 1e-15);
    let (v2, d2, _) = w_piecewise(-xv, EPS, L);
    assert!((v2 - expect).abs() < 1e-15 && d2.abs() < 1e-15);
}

#[test]
fn w_value_and_slope_continuous_at_breakpoints() {
    let se = EPS.sqrt();
    for b in [-L * se, -se, 0.0, se, L * se] {
        let lo = w_piecewise(b, EPS, L);
        let hi = w_piecewise(b + 1e-13, EPS, L);
        // evaluating the right-hand branch formula at b itself
        let hi0 = (hi.0 - hi.1 * 1e-13, hi.1 - hi.2 * 1e-13);
        assert!((lo.0 - hi0.0).abs() < 1e-12, "value jump at {b}");
        assert!((lo.1 - hi0.1).abs() < 1e-12, "slope jump at {b}");
    }
}

proptest! {
    #[test]
    fn w_derivatives_match_finite_differences(x in -1.0f64..1.0) {
        let se = EPS.sqrt();
        let h = 1e-6;
        let near = [-L * se, -se, 0.0, se, L * se].iter().any(|b| (x - b).abs() < 10.0 * h);
        prop_assume!(!near);
        let (_, d, d2) = w_piecewise(x, EPS, L);
        let fd1 = (w_piecewise(x + h, EPS, L).0 - w_piecewise(x - h, EPS, L).0) / (2.0 * h);
        let fd2 = (w_piecewise(x + h, EPS, L).1 - w_piecewise(x - h, EPS, L).1) / (2.0 * h);
        prop_assert!((d - fd1).abs() < 1e-7);
        prop_assert!((d2 - fd2).abs() < 1e-6);
    }

    #[test]
    fn w_first_derivative_is_continuous(x in -1.0f64..1.0) {
        let h = 1e-9;
        let a = w_piecewise(x - h, EPS, L).1;
        let b = w_piecewise(x + h, EPS, L).1;
        prop_assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn synthetic_minimax_y_star_and_saddle() {
    let s = make_synthetic_minimax(EPS, L).unwrap();
    assert_eq!(s.y_star(&vecf(&[0.0, 0.0, 0.4])), Vector::zeros(2));
    let o = Vector::zeros(3);
    assert_eq!(s.phi(&o), 0.0);
    assert_eq!(s.grad_phi(&o).norm(), 0.0);
    assert!((min_eig(&s.hess_phi(&o)) + 2.0 * EPS.sqrt()).abs() < 1e-15);
}

#[test]
fn synthetic_minimax_y_star_maximizes_f() {
    let s = make_synthetic_minimax(EPS, L).unwrap();
    for seed in 0..5 {
        let x = randn(3, seed);
        assert!(s.grad_f_y(&x, &s.y_star(&x)).norm() < 1e-14);
        assert!((s.f_val(&x, &s.y_star(&x)) - s.phi(&x)).abs() < 1e-12);
    }
}

#[test]
fn synthetic_minimax_grad_phi_matches_finite_differences() {
    let s = make_synthetic_minimax(EPS, L).unwrap();
    for seed in 0..10 {
        let x = randn(3, seed) * 0.3;
        let phi = |x: &Vector| s.f_val(x, &s.y_star(x));
        let fd = fd_grad(phi, &x, 1e-6);
        assert!((s.grad_phi(&x) - fd).norm() < 1e-6, "seed {seed}");
    }
}

#[test]
fn synthetic_rejects_bad_arguments() {
    assert!(make_synthetic_minimax(0.0, 3.0).is_err());
    assert!(make_synthetic_minimax(0.01, 0.5).is_err());
}

fn cleaning(p: f64, seed: u64) -> Hypercleaning {
    let (a, b) = synthetic_logistic(80, 6, 3);
    make_hypercleaning(&a, &b, 0.25, p, 1e-3, seed).unwrap()
}

#[test]
fn hypercleaning_saturated_weights_reduce_to_ridge_logistic() {
    let h = cleaning(0.0, 1);
    let (dx, dy) = h.dims();
    assert_eq!(dx, h.n_train());
    let x = Vector::from_element(dx, 20.0);
    let y = randn(dy, 5);
    let labels = h.train_labels().to_vec();
    // ridge logistic objective evaluated independently from the oracle's own data
    let x0 = Vector::from_element(dx, 1e3);
    let ridge = h.g_val(&x0, &y);
    assert!((h.g_val(&x, &y) - ridge).abs() < 1e-7 * (1.0 + ridge.abs()));
    assert!(h.flipped().is_empty());
    assert!(labels.iter().all(|&b| b == 0.0 || b == 1.0));
}

#[test]
fn hypercleaning_default_regularizer_and_curvature() {
    let h = cleaning(0.25, 2);
    assert_eq!(h.c(), 1e-3);
    let (dx, dy) = h.dims();
    for s in 0..5 {
        let x = randn(dx, s) * 3.0;
        let y = randn(dy, 10 + s);
        let hyy = h.hess_g_yy(&x, &y);
        assert!((&hyy - hyy.transpose()).amax() < 1e-14);
        assert!(min_eig(&hyy) >= 2.0 * h.c() - 1e-12);
    }
}

#[test]
fn hypercleaning_oracles_match_finite_differences() {
    let h = cleaning(0.25, 2);
    let (dx, dy) = h.dims();
    let x = randn(dx, 1);
    let y = randn(dy, 2);
    let tol = 1e-6;
    assert!(rel_err(&h.grad_g_x(&x, &y), &fd_grad(|x| h.g_val(x, &y), &x, 1e-5)) < tol);
    assert!(rel_err(&h.grad_g_y(&x, &y), &fd_grad(|y| h.g_val(&x, y), &y, 1e-5)) < tol);
    assert!(rel_err(&h.grad_f_y(&x, &y), &fd_grad(|y| h.f_val(&x, y), &y, 1e-5)) < tol);
    let gxy = fd_jac(|y| h.grad_g_x(&x, y), &y, 1e-5);
    assert!((h.hess_g_xy(&x, &y) - gxy).amax() < tol);
    let gxx = fd_jac(|x| h.grad_g_x(x, &y), &x, 1e-5);
    assert!((h.hess_g_xx(&x, &y) - gxx).amax() < tol);
    let gyy = fd_jac(|y| h.grad_g_y(&x, y), &y, 1e-5);
    assert!((h.hess_g_yy(&x, &y) - gyy).amax() < tol);
    let fyy = fd_jac(|y| h.grad_f_y(&x, y), &y, 1e-5);
    assert!((h.hess_f_yy(&x, &y) - fyy).amax() < tol);
    let v = randn(dy, 3);
    assert!((h.hvp_g_xy(&x, &y, &v) - h.hess_g_xy(&x, &y) * &v).amax() < 1e-12);
    let u = randn(dx, 4);
    assert!((h.hvp_g_yx(&x, &y, &u) - h.hess_g_xy(&x, &y).transpose() * &u).amax() < 1e-12);
    assert!((h.hvp_g_yy(&x, &y, &v) - h.hess_g_yy(&x, &y) * &v).amax() < 1e-12);
}

#[test]
fn hypercleaning_flip_set_is_reproducible() {
    let a = cleaning(0.25, 42);
    let b = cleaning(0.25, 42);
    assert_eq!(a.flipped(), b.flipped());
    assert_eq!(a.flipped().len(), (0.25 * a.n_train() as f64).round() as usize);
    assert!(a.flipped().windows(2).all(|w| w[0] < w[1]));
    let c = cleaning(0.25, 43);
    assert_ne!(a.flipped(), c.flipped());
}

#[test]
fn hypercleaning_rejects_bad_input() {
    let (a, b) = synthetic_logistic(20, 3, 0);
    assert!(make_hypercleaning(&a, &b[..10], 0.2, 0.1, 1e-3, 0).is_err());
    assert!(make_hypercleaning(&a, &b, 0.2, 1.5, 1e-3, 0).is_err());
    assert!(make_hypercleaning(&a, &b, 0.2, 0.1, 0.0, 0).is_err());
    let bad: Vec<f64> = b.iter().map(|v| v * 2.0 + 0.5).collect();
    assert!(make_hypercleaning(&a, &bad, 0.2, 0.1, 1e-3, 0).is_err());
}

fn ridge_problem() -> ExpRidgeTuning {
    let (a, b) = synthetic_multinomial(40, 4, 3, 1);
    let (v, vb) = synthetic_multinomial(20, 4, 3, 2);
    make_exp_ridge_tuning((&a, &b), (&v, &vb)).unwrap()
}

#[test]
fn exp_ridge_zero_hyperparameters_give_uniform_ridge() {
    let r = ridge_problem();
    let (dx, dy) = r.dims();
    assert_eq!((dx, dy), (4, 12));
    let y = randn(dy, 3);
    let cp = (r.classes() * dx) as f64;
    let x0 = Vector::zeros(dx);
    let xs = vecf(&[1.0, -0.5, 0.3, 0.0]);
    // only the regularizer depends on x
    let mut expect = 0.0;
    for (idx, yi) in y.iter().enumerate() {
        expect += (xs[idx % dx].exp() - 1.0) * yi * yi / (2.0 * cp);
    }
    assert!((r.g_val(&xs, &y) - r.g_val(&x0, &y) - expect).abs() < 1e-12);
}

#[test]
fn exp_ridge_oracles_match_finite_differences() {
    let r = ridge_problem();
    let (dx, dy) = r.dims();
    let x = randn(dx, 7) * 0.5;
    let y = randn(dy, 8);
    assert!(rel_err(&r.grad_g_x(&x, &y), &fd_grad(|x| r.g_val(x, &y), &x, 1e-5)) < 1e-6);
    assert!(rel_err(&r.grad_g_y(&x, &y), &fd_grad(|y| r.g_val(&x, y), &y, 1e-5)) < 1e-6);
    assert!(rel_err(&r.grad_f_y(&x, &y), &fd_grad(|y| r.f_val(&x, y), &y, 1e-5)) < 1e-6);
    let gyy = fd_jac(|y| r.grad_g_y(&x, y), &y, 1e-5);
    assert!((r.hess_g_yy(&x, &y) - gyy).amax() < 1e-6);
    let fyy = fd_jac(|y| r.grad_f_y(&x, y), &y, 1e-5);
    assert!((r.hess_f_yy(&x, &y) - fyy).amax() < 1e-6);
}

#[test]
fn exp_ridge_cross_hessian_structure() {
    let r = ridge_problem();
    let (dx, dy) = r.dims();
    let p = dx;
    let cp = (r.classes() * p) as f64;
    let x = randn(dx, 1);
    let y = randn(dy, 2);
    let h = r.hess_g_xy(&x, &y);
    for k in 0..p {
        for col in 0..dy {
            let expect = if col % p == k { x[k].exp() * y[col] / cp } else { 0.0 };
            assert!((h[(k, col)] - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn exp_ridge_rejects_mismatched_data() {
    let (a, b) = synthetic_multinomial(10, 4, 3, 1);
    let (v, vb) = synthetic_multinomial(10, 5, 3, 2);
    assert!(make_exp_ridge_tuning((&a, &b), (&v, &vb)).is_err());
    assert!(make_exp_ridge_tuning((&a, &b[..5]), (&a, &b)).is_err());
}

#[test]
fn ground_truth_matches_closed_form_on_quadratic() {
    let q = make_quadratic_bilevel(2, 3, 4, 10.0).unwrap();
    let x = randn(3, 5);
    let gt = ground_truth_eval(&Opaque(&q), &x, 1e-10).unwrap();
    assert!((&gt.grad_phi - q.grad_phi(&x)).norm() < 1e-8);
    assert!((gt.phi - q.phi(&x)).abs() < 1e-8);
    assert!((gt.hess_phi_min_eig - min_eig(&q.hess_phi(&x))).abs() < 1e-4);
    assert!(gt.xi >= 0.0);
    assert_eq!(gt.xi, (-gt.hess_phi_min_eig).max(0.0));
    assert!(q.grad_g_y(&x, &gt.y_star).norm() <= 10.0 * 1e-10);
}

#[test]
fn ground_truth_on_synthetic_saddle() {
    let s = make_synthetic_minimax(EPS, L).unwrap();
    let o = Vector::zeros(3);
    let gt = ground_truth_minimax(&s, &o, 1e-10).unwrap();
    assert_eq!(gt.grad_phi.norm(), 0.0);
    assert!((gt.hess_phi_min_eig + 2.0 * EPS.sqrt()).abs() < 1e-14);
    let generic = ground_truth_eval(&Opaque(&MinimaxAsBilevel(&s)), &vecf(&[0.2, -0.1, 0.0]), 1e-10).unwrap();
    assert!((generic.hess_phi_min_eig + 2.0 * EPS.sqrt()).abs() < 1e-4);
    assert!((&generic.grad_phi - s.grad_phi(&vecf(&[0.2, -0.1, 0.0]))).norm() < 1e-8);
}

#[test]
fn ground_truth_decoupled_gives_upper_gradient() {
    // f independent of y, g independent of x
    let a = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let q = QuadraticBilevel::from_parts(
        a.clone(),
        Matrix::zeros(2, 3),
        Matrix::zeros(3, 3),
        vecf(&[1.0, -1.0]),
        Vector::zeros(3),
        Matrix::identity(3, 3) * 2.0,
        Matrix::zeros(3, 2),
        vecf(&[1.0, 2.0, 3.0]),
    )
    .unwrap();
    let x = vecf(&[0.3, -0.7]);
    let gt = ground_truth_eval(&Opaque(&q), &x, 1e-10).unwrap();
    let y = Vector::zeros(3);
    assert!((&gt.grad_phi - q.grad_f_x(&x, &y)).norm() < 1e-9);
}

#[test]
fn ground_truth_inner_residual_on_data_families() {
    let tol = 1e-9;
    let h = cleaning(0.2, 3);
    let x = randn(h.dims().0, 1);
    let gt = ground_truth_eval(&h, &x, tol).unwrap();
    assert!(h.grad_g_y(&x, &gt.y_star).norm() <= 10.0 * tol);
    let r = ridge_problem();
    let x = randn(r.dims().0, 2) * 0.3;
    let gt = ground_truth_eval(&r, &x, tol).unwrap();
    assert!(r.grad_g_y(&x, &gt.y_star).norm() <= 10.0 * tol);
}

#[test]
fn ground_truth_rejects_nonpositive_tol() {
    let q = make_quadratic_bilevel(0, 2, 2, 4.0).unwrap();
    assert!(ground_truth_eval(&q, &Vector::zeros(2), 0.0).is_err());
}

#[test]
fn sparse_matrix_round_trip() {
    let rows = vec![vec![(0, 1.0), (2, -2.0)], vec![], vec![(1, 3.0)]];
    let m = SparseMatrix::from_rows(3, &rows).unwrap();
    assert_eq!((m.nrows(), m.ncols(), m.nnz()), (3, 3, 3));
    let d = m.to_dense();
    assert_eq!(SparseMatrix::from_dense(&d).to_dense(), d);
    let v = vecf(&[1.0, 2.0, 3.0]);
    assert_eq!(m.mul_vec(&v), &d * &v);
    assert_eq!(m.row_dot(0, v.as_slice()), -5.0);
    assert_eq!(m.row_norm_sq(0), 5.0);
    assert_eq!(m.select_rows(&[2, 0]).to_dense().row(0), d.row(2));
    assert!(SparseMatrix::from_rows(2, &[vec![(5, 1.0)]]).is_err());
}

#[test]
fn smoothness_params_validation() {
    let p = SmoothnessParams::new(0.5, 2.0, 3.0, 1.0, 0.5).unwrap();
    assert_eq!(p.ell_bar, 3.0);
    assert_eq!(p.kappa, 6.0);
    assert!(SmoothnessParams::new(0.0, 1.0, 0.0, 0.0, 0.0).is_err());
    assert!(SmoothnessParams::new(1.0, 1.0, -1.0, 0.0, 0.0).is_err());
}
