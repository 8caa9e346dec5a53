mod common;

use common::{brute_force_2d, hard_case_model, model_value, randn, rng, sym_with_spectrum, vecf};
use proptest::prelude::*;
use sobo::cubic::*;
use sobo::linalg::min_eig;
use sobo::problems::{Matrix, Vector};

fn check_optimality(g: &Vector, h: &Matrix, m: f64, s: &Vector) {
    let sn = s.norm();
    let shifted = h + Matrix::identity(g.len(), g.len()) * (0.5 * m * sn);
    let res = (&shifted * s + g).norm();
    assert!(res <= 1e-9 * (1.0 + g.norm()), "stationarity residual {res}");
    assert!(min_eig(&shifted) >= -1e-9, "curvature {}", min_eig(&shifted));
    assert!(model_value(g, h, m, s) <= -m / 12.0 * sn.powi(3) + 1e-12);
}

#[test]
fn zero_gradient_psd_hessian_gives_zero_step() {
    let h = sym_with_spectrum(4, 0.0, 2.0, 1);
    let r = cubic_solve_exact(&CubicModel::dense(Vector::zeros(4), h, 1.0).unwrap()).unwrap();
    assert_eq!(r.s, Vector::zeros(4));
    assert_eq!(r.delta, 0.0);
}

#[test]
fn scalar_linear_model() {
    let r = cubic_solve_exact(&CubicModel::dense(vecf(&[1.0]), Matrix::zeros(1, 1), 6.0).unwrap()).unwrap();
    assert!((r.s[0] + 1.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!((r.delta + 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-12);
}

#[test]
fn hard_case_two_dimensional_matches_brute_force() {
    let h = Matrix::from_diagonal(&vecf(&[-1.0, 2.0]));
    let g = vecf(&[0.0, 1.0]);
    let r = cubic_solve_exact(&CubicModel::dense(g.clone(), h.clone(), 1.0).unwrap()).unwrap();
    assert!(r.hard_case);
    let (sb, vb) = brute_force_2d(&g, &h, 1.0);
    // two symmetric minimizers ±; compare up to the sign of the first coordinate
    let s_flip = vecf(&[-r.s[0], r.s[1]]);
    let ds = (&r.s - &sb).norm().min((s_flip - &sb).norm());
    assert!(ds < 1e-3, "{ds}");
    assert!((r.delta - vb).abs() < 1e-6);
    check_optimality(&g, &h, 1.0, &r.s);
}

#[test]
fn random_models_satisfy_optimality_conditions() {
    for seed in 0..60u64 {
        let d = [2, 5, 20][(seed % 3) as usize];
        let h = sym_with_spectrum(d, -2.0, 2.0, seed);
        let g = randn(d, 1000 + seed) * 10f64.powi((seed % 5) as i32 - 2);
        let m = 0.5 + (seed % 4) as f64;
        let r = cubic_solve_exact(&CubicModel::dense(g.clone(), h.clone(), m).unwrap()).unwrap();
        check_optimality(&g, &h, m, &r.s);
        assert!((r.delta - model_value(&g, &h, m, &r.s)).abs() < 1e-12);
    }
}

#[test]
fn constructed_hard_cases() {
    for seed in 0..10u64 {
        let d = [2, 5][(seed % 2) as usize];
        let (g, h) = hard_case_model(d, seed, 1.5);
        let r = cubic_solve_exact(&CubicModel::dense(g.clone(), h.clone(), 1.5).unwrap()).unwrap();
        assert!(r.hard_case, "seed {seed}");
        check_optimality(&g, &h, 1.5, &r.s);
        if d == 2 {
            assert!((r.delta - brute_force_2d(&g, &h, 1.5).1).abs() < 1e-6);
        }
    }
}

#[test]
fn exact_solver_rejects_matrix_free_and_nonfinite() {
    let f = |v: &Vector| v.clone();
    let mf = CubicModel::new(vecf(&[1.0]), HessianOp::MatrixFree(&f), 1.0).unwrap();
    assert!(cubic_solve_exact(&mf).is_err());
    let bad = CubicModel::dense(vecf(&[f64::NAN]), Matrix::zeros(1, 1), 1.0).unwrap();
    assert!(cubic_solve_exact(&bad).is_err());
    assert!(CubicModel::dense(vecf(&[1.0]), Matrix::zeros(1, 1), 0.0).is_err());
    assert!(CubicModel::dense(vecf(&[1.0]), Matrix::zeros(2, 2), 1.0).is_err());
}

#[test]
fn model_value_at_origin_is_zero() {
    let m = CubicModel::dense(randn(3, 1), sym_with_spectrum(3, -1.0, 1.0, 2), 2.0).unwrap();
    assert_eq!(cubic_model_value(&m, &Vector::zeros(3)), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_solver_matches_brute_force_in_two_dimensions(seed in 0u64..100_000, m in 0.2f64..5.0, gs in -3i32..2) {
        let h = sym_with_spectrum(2, -2.0, 2.0, seed);
        let g = randn(2, seed ^ 0xabc) * 10f64.powi(gs);
        let r = cubic_solve_exact(&CubicModel::dense(g.clone(), h.clone(), m).unwrap()).unwrap();
        let (_, vb) = brute_force_2d(&g, &h, m);
        prop_assert!((r.delta - vb).abs() <= 1e-6);
        prop_assert!(r.delta <= -m / 12.0 * r.s.norm().powi(3) + 1e-12);
    }
}

const L: f64 = 3.0;

#[test]
fn cauchy_branch_closed_form() {
    let m = 2.0;
    let gnorm = 2.0 * L * L / m;
    let g = randn(4, 3).normalize() * gnorm;
    let model = CubicModel::dense(g.clone(), Matrix::zeros(4, 4), m).unwrap();
    let r = cubic_solve_gd(&model, L, 0.1, 0.01, 1.0, &mut rng(0)).unwrap();
    assert_eq!(r.branch, CubicBranch::Cauchy);
    let rc = (2.0 * gnorm / m).sqrt();
    assert!((r.s.norm() - rc).abs() < 1e-12);
    let expect = -(2.0 / 3.0) * gnorm.powf(1.5) * (2.0 / m).sqrt();
    assert!((r.delta - expect).abs() < 1e-10);
    assert!((r.delta - (-gnorm * rc + m / 6.0 * rc.powi(3))).abs() < 1e-10);
}

#[test]
fn perturbation_only_fixed_point_is_small() {
    let (m, eps) = (1.0, 1.0);
    let h = sym_with_spectrum(5, eps, L, 4);
    let model = CubicModel::dense(Vector::zeros(5), h, m).unwrap();
    let r = cubic_solve_gd(&model, L, eps, 0.1, 1.0, &mut rng(1)).unwrap();
    assert_eq!(r.branch, CubicBranch::PerturbedGd);
    let sigma = perturbation_sigma(L, m, eps, 1.0);
    assert!(r.s.norm() <= sigma / eps * (1.0 + 1e-9));
}

#[test]
fn negative_curvature_is_found_with_high_probability() {
    let (m, eps, d) = (1.0f64, 4.0f64, 10);
    let threshold = -(eps.powi(3) / m).sqrt() / 128.0;
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut h = sym_with_spectrum(d, -L, L, seed);
        // shift so that λ_min ≤ −√(Mε) while keeping ‖H‖ ≤ L
        let lmin = min_eig(&h);
        if lmin > -(m * eps).sqrt() {
            h -= Matrix::identity(d, d) * (lmin + (m * eps).sqrt() + 0.1);
        }
        let g = randn(d, 50 + seed) * 1e-3;
        let model = CubicModel::dense(g, h, m).unwrap();
        let r = cubic_solve_gd(&model, L.max(sobo::linalg::spectral_norm(&model_h(&model))), eps, 0.01, 1.0, &mut rng(seed)).unwrap();
        if r.delta <= threshold {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20");
}

fn model_h(model: &CubicModel<'_>) -> Matrix {
    match &model.h {
        HessianOp::Dense(h) => h.clone(),
        HessianOp::MatrixFree(_) => unreachable!(),
    }
}

#[test]
fn gradient_descent_beats_cauchy_point() {
    let (m, eps) = (1.0, 4.0);
    for seed in 0..5u64 {
        let h = sym_with_spectrum(6, -L, L, 10 + seed);
        let g = randn(6, 20 + seed);
        let model = CubicModel::dense(g.clone(), h.clone(), m).unwrap();
        let r = cubic_solve_gd(&model, L, eps, 0.01, 1.0, &mut rng(seed)).unwrap();
        assert_eq!(r.branch, CubicBranch::PerturbedGd);
        let a = g.dot(&(&h * &g)) / (m * g.norm_squared());
        let rc = -a + (a * a + 2.0 * g.norm() / m).sqrt();
        let cauchy = model_value(&g, &h, m, &(&g * (-rc / g.norm())));
        assert!(r.delta <= cauchy, "seed {seed}: {} > {cauchy}", r.delta);
    }
}

#[test]
fn matrix_free_hessian_only_uses_products() {
    use std::cell::Cell;
    let h = sym_with_spectrum(4, -1.0, 1.0, 7);
    let calls = Cell::new(0usize);
    let f = |v: &Vector| {
        calls.set(calls.get() + 1);
        &h * v
    };
    let model = CubicModel::new(randn(4, 8), HessianOp::MatrixFree(&f), 1.0).unwrap();
    let opts = GdOptions {
        max_iters: Some(50),
        ..GdOptions::default()
    };
    let r = cubic_solve_gd_with(&model, L, 1.0, 0.1, &opts, &mut rng(0)).unwrap();
    assert_eq!(r.iterations, 50);
    assert_eq!(calls.get(), 50 + 1);
}

#[test]
fn gd_solver_is_deterministic_per_seed() {
    let h = sym_with_spectrum(4, -1.0, 1.0, 9);
    let model = CubicModel::dense(randn(4, 1), h, 1.0).unwrap();
    let opts = GdOptions {
        max_iters: Some(500),
        ..GdOptions::default()
    };
    let a = cubic_solve_gd_with(&model, L, 1.0, 0.1, &opts, &mut rng(3)).unwrap();
    let b = cubic_solve_gd_with(&model, L, 1.0, 0.1, &opts, &mut rng(3)).unwrap();
    assert_eq!(a.s, b.s);
}

#[test]
fn gd_rejects_bad_arguments() {
    let model = CubicModel::dense(vecf(&[1.0]), Matrix::zeros(1, 1), 1.0).unwrap();
    assert!(cubic_solve_gd(&model, 0.0, 1.0, 0.1, 1.0, &mut rng(0)).is_err());
    assert!(cubic_solve_gd(&model, 1.0, 1.0, 1.0, 1.0, &mut rng(0)).is_err());
    assert!(cubic_solve_final(&model, 0.0, 1.0).is_err());
}

#[test]
fn final_solver_small_gradient_returns_zero() {
    let model = CubicModel::dense(vecf(&[1e-4, 0.0]), Matrix::identity(2, 2), 1.0).unwrap();
    let r = cubic_solve_final(&model, 1e-3, 1.0).unwrap();
    assert_eq!(r.s, Vector::zeros(2));
    assert_eq!(r.iterations, 0);
}

#[test]
fn final_solver_scalar_root() {
    // 1 + s + 3|s|s = 0 with s < 0 gives 3s² − s − 1 = 0
    let root = (1.0 - 13f64.sqrt()) / 6.0;
    let model = CubicModel::dense(vecf(&[1.0]), Matrix::identity(1, 1), 6.0).unwrap();
    let r = cubic_solve_final(&model, 1e-6, 1.0).unwrap();
    assert!((r.s[0] - root).abs() < 1e-6, "{}", r.s[0]);
    assert!((root + 0.434258545910665).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn final_solver_gradient_postcondition(seed in 0u64..10_000, eps in 1e-4f64..1e-1) {
        let h = sym_with_spectrum(4, -1.0, 1.0, seed);
        let model = CubicModel::dense(randn(4, seed + 1), h, 2.0).unwrap();
        let r = cubic_solve_final(&model, eps, 1.0).unwrap();
        prop_assert!(model.gradient(&r.s).norm() <= eps / 2.0);
    }
}

#[test]
fn schedule_constants() {
    assert_eq!(final_solver_cap(1.0, 2.0, 0.5), 4000);
    let sigma = perturbation_sigma(3.0, 1.0, 4.0, 1.0);
    assert!((sigma - 8.0 / (4608.0 * 14.0)).abs() < 1e-15);
    assert!(gd_iterations(3.0, 1.0, 4.0, 0.01, 1.0, 10) > 1e6);
}
