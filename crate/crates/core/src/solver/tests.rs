use super::*;
use crate::numerics::Matrix;
use crate::penalty::PenaltyKind;
use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn v(x: &[f64]) -> Vector {
    Vector::from_row_slice(x)
}

fn gaussian_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

#[test]
fn noiseless_least_squares_recovers_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = gaussian_matrix(50, 4, &mut rng);
    let theta0 = v(&[1.0, -2.0, 0.5, 0.0]);
    let data = Dataset::new(x.clone(), &x * &theta0).unwrap();
    let r = fit(&data, &LossSpec::Squared, &PenaltySpec::none(), &SolveOptions::default()).unwrap();
    assert!((r.minimizer - theta0).amax() < 1e-8);
}

#[test]
fn orthonormal_design_lasso_is_soft_threshold_of_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, p) = (64, 4);
    let q = gaussian_matrix(n, p, &mut rng).qr().q();
    let x = q * (n as f64).sqrt();
    let y = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = Dataset::new(x.clone(), y.clone()).unwrap();
    let (lambda, alpha) = (0.8, 1.5);
    let pen = PenaltySpec::lasso(lambda).with_scale(alpha);
    let r = fit(&data, &LossSpec::Squared, &pen, &SolveOptions::default()).unwrap();
    let ols = x.tr_mul(&y) / n as f64;
    let level = alpha * lambda / (n as f64).sqrt();
    for i in 0..p {
        assert_abs_diff_eq!(r.minimizer[i], soft(ols[i], level), epsilon = 1e-8);
    }
}

#[test]
fn median_regression_on_intercept_finds_sample_median() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 101;
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut sorted = y.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let data = Dataset::new(Matrix::from_element(n, 1, 1.0), Vector::from_vec(y)).unwrap();
    let r = fit(&data, &LossSpec::Quantile { alpha: 0.5 }, &PenaltySpec::none(), &SolveOptions::default()).unwrap();
    assert_abs_diff_eq!(r.minimizer[0], sorted[n / 2], epsilon = 1e-6);
}

#[test]
fn smoothing_gap_is_bounded_by_level() {
    let q = LossSpec::Quantile { alpha: 0.3 };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for mu in [1e-1, 1e-3, 1e-7] {
        for _ in 0..100 {
            let r: f64 = rng.random_range(-2.0..2.0);
            let gap = q.value_eta(r, 0.0) - q.value_deriv_eta(r, 0.0, mu).0;
            assert!((0.0..=mu).contains(&gap));
        }
    }
}

#[test]
fn smoothed_quantile_fits_converge_as_floor_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (200, 3);
    let x = gaussian_matrix(n, p, &mut rng);
    let y = &x * v(&[1.0, 0.0, -1.0]) + Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = Dataset::new(x, y).unwrap();
    let loss = LossSpec::Quantile { alpha: 0.5 };
    let pen = PenaltySpec::lasso(1.0);
    let solve = |floor_k: i32| {
        let opts = SolveOptions {
            smoothing: (1..=floor_k).map(|k| 10f64.powi(-k)).collect(),
            ..SolveOptions::default()
        };
        fit(&data, &loss, &pen, &opts).unwrap().minimizer
    };
    let (a, b, c) = (solve(3), solve(5), solve(7));
    assert!((&b - &c).norm() <= (&a - &c).norm() + 1e-12);
    assert!((&b - &c).norm() < 1e-3);
}

#[test]
fn logistic_separable_data_is_reported() {
    let x = Matrix::from_row_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
    let y = v(&[0.0, 0.0, 1.0, 1.0]);
    let data = Dataset::new(x, y).unwrap();
    let r = fit(&data, &LossSpec::Logistic { tau: 1.0 }, &PenaltySpec::none(), &SolveOptions::default());
    assert!(matches!(r, Err(Error::SeparableData { .. })), "{r:?}");
}

#[test]
fn logistic_fit_satisfies_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, p) = (500, 5);
    let x = gaussian_matrix(n, p, &mut rng);
    let theta0 = v(&[1.0, -1.0, 0.0, 0.0, 0.5]);
    let eta = &x * &theta0;
    let y = eta.map(|e| if rng.random::<f64>() < crate::loss::sigmoid(e) { 1.0 } else { 0.0 });
    let data = Dataset::new(x.clone(), y.clone()).unwrap();
    let pen = PenaltySpec::slope(vec![2.0, 1.5, 1.0, 0.5, 0.25]);
    let r = fit(&data, &LossSpec::Logistic { tau: 1.0 }, &pen, &SolveOptions::default()).unwrap();
    // Independent gradient and residual.
    let th = &r.minimizer;
    let grad = x.tr_mul(&((&x * th).map(crate::loss::sigmoid) - &y)) / n as f64;
    let compiled = pen.compile(p).unwrap();
    let res = kkt_residual(th, &grad, &compiled, 1.0 / (n as f64).sqrt());
    assert!(res / (n as f64).sqrt() <= 1e-8, "{res}");
    assert!(r.objective <= (2f64).ln());
}

#[test]
fn poisson_fit_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, p) = (400, 3);
    let x = gaussian_matrix(n, p, &mut rng) * 0.5;
    let theta0 = v(&[0.5, 0.0, -0.5]);
    let y = Vector::from_fn(n, |i, _| {
        let mean = (x.row(i) * &theta0)[0].exp();
        rand_distr::Distribution::sample(&rand_distr::Poisson::new(mean).unwrap(), &mut rng)
    });
    let data = Dataset::new(x, y).unwrap();
    let r = fit(&data, &LossSpec::Poisson, &PenaltySpec::fused(0.5, 0.5), &SolveOptions::default()).unwrap();
    assert!(r.converged);
    assert!((r.minimizer - theta0).amax() < 0.3);
}

#[test]
fn limit_without_penalty_is_a_linear_solve() {
    let c = SpdMatrix::new(Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
    let w = v(&[1.0, -1.0]);
    let r = minimize_limit(&c, &w, &DirectionalPenalty::zero(2), &SolveOptions::default()).unwrap();
    assert_eq!(r.iterations, 0);
    let expected = c.matrix().clone().try_inverse().unwrap() * &w;
    assert!((r.minimizer - expected).amax() < 1e-14);
}

#[test]
fn limit_identity_lasso_is_soft_threshold() {
    let pen = PenaltySpec::lasso(1.0).compile(2).unwrap();
    let dir = pen.directional(&Vector::zeros(2)).unwrap();
    let r = minimize_limit(&SpdMatrix::identity(2), &v(&[2.0, 0.0]), &dir, &SolveOptions::default()).unwrap();
    assert!((&r.minimizer - v(&[1.0, 0.0])).amax() < 1e-8);
    // The exact minimizer has zero residual, a perturbed point does not.
    let grad = &r.minimizer - v(&[2.0, 0.0]);
    assert!(kkt_residual(&v(&[1.0, 0.0]), &(v(&[1.0, 0.0]) - v(&[2.0, 0.0])), &dir, 1.0) < 1e-10);
    assert!(kkt_residual(&r.minimizer, &grad, &dir, 1.0) <= r.kkt_tolerance);
    let off = v(&[1.001, 0.0]);
    assert!(kkt_residual(&off, &(&off - v(&[2.0, 0.0])), &dir, 1.0) > 1e-4);
}

/// Objective minimum by grid search refined with a shrinking pattern search.
fn grid_polish(obj: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let mut best = (0.0, 0.0, obj(0.0, 0.0));
    for i in -500..=500 {
        for j in -500..=500 {
            let (a, b) = (i as f64 * 0.01, j as f64 * 0.01);
            let f = obj(a, b);
            if f < best.2 {
                best = (a, b, f);
            }
        }
    }
    let mut step = 0.01;
    while step > 1e-10 {
        let mut improved = false;
        for (da, db) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let (a, b) = (best.0 + da * step, best.1 + db * step);
            let f = obj(a, b);
            if f < best.2 {
                best = (a, b, f);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best.0, best.1)
}

#[test]
fn limit_matches_grid_search_in_two_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for spec in [PenaltySpec::lasso(0.7), PenaltySpec::slope(vec![1.0, 0.4]), PenaltySpec::fused(0.3, 0.9)] {
        let pen = spec.compile(2).unwrap();
        let a = gaussian_matrix(2, 2, &mut rng);
        let c = SpdMatrix::new(&a * a.transpose() + Matrix::identity(2, 2) * 0.5).unwrap();
        let w = Vector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let theta0 = v(&[[0.0, 1.0][rng.random_range(0..2)], 1.0]);
        let dir = pen.directional(&theta0).unwrap();
        let r = minimize_limit(&c, &w, &dir, &SolveOptions::default()).unwrap();
        let cm = c.matrix().clone();
        let obj = |a: f64, b: f64| {
            let u = v(&[a, b]);
            0.5 * u.dot(&(&cm * &u)) - w.dot(&u) + dir.value(&u)
        };
        let (a, b) = grid_polish(obj);
        assert!((r.minimizer[0] - a).abs() < 1e-5 && (r.minimizer[1] - b).abs() < 1e-5, "{:?}: {} vs ({a}, {b})", spec.variant, r.minimizer);
    }
}

fn random_limit_instance(rng: &mut ChaCha8Rng, p: usize) -> (SpdMatrix, Vector, DirectionalPenalty) {
    let a = gaussian_matrix(p, p, rng);
    let c = SpdMatrix::new(&a * a.transpose() / p as f64 + Matrix::identity(p, p) * 0.2).unwrap();
    let w = Vector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
    let theta0 = Vector::from_fn(p, |_, _| rng.random_range(-1i32..=1) as f64);
    let lambda: Vec<f64> = (0..p).map(|i| (p - i) as f64 * 0.3).collect();
    let dir = PenaltySpec::slope(lambda).compile(p).unwrap().directional(&theta0).unwrap();
    (c, w, dir)
}

#[test]
fn limit_minimizer_is_unique_across_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (c, w, dir) = random_limit_instance(&mut rng, 6);
        let start = Vector::from_fn(6, |_, _| rng.random_range(-5.0..5.0));
        let a = minimize_limit(&c, &w, &dir, &SolveOptions::default()).unwrap();
        let b = minimize_limit_from(&c, &w, &dir, &SolveOptions::default(), Some(&start)).unwrap();
        assert!((a.minimizer - b.minimizer).amax() < 1e-6);
    }
}

#[test]
fn accepted_objectives_are_nonincreasing_and_residuals_shrink() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut shrinking = 0;
    for _ in 0..100 {
        let (c, w, dir) = random_limit_instance(&mut rng, 5);
        let cm = c.matrix().clone();
        let smooth = |u: &Vector| {
            let cu = &cm * u;
            (0.5 * u.dot(&cu) - w.dot(u), cu - &w)
        };
        let mut trace = Trace::new();
        let opts = SolveOptions::default();
        apg(&smooth, &dir, Vector::zeros(5), &opts, 1.0 / spectral_bound(&cm), 1e-9 * w.norm().max(1.0), None, Some(&mut trace)).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1].0 <= pair[0].0 + 1e-12 * pair[0].0.abs().max(1.0));
        }
        let (first, mid, last) = (trace[0].1, trace[trace.len() / 2].1, trace[trace.len() - 1].1);
        if last <= mid && mid <= first {
            shrinking += 1;
        }
    }
    assert!(shrinking > 50, "{shrinking}");
}

#[test]
fn fit_and_limit_agree_for_linear_model() {
    // With C = XᵀX/n and W = Xᵀε/√n the limit objective is the rescaled
    // finite-sample objective whenever √n(θ̂ − θ₀) stays inside the face.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in 2..=5 {
        let n = 4000;
        let x = gaussian_matrix(n, p, &mut rng);
        let theta0 = Vector::from_fn(p, |i, _| if i % 2 == 0 { 1.0 + i as f64 } else { 0.0 });
        let eps = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * &theta0 + &eps;
        let data = Dataset::new(x.clone(), y).unwrap();
        let spec = PenaltySpec::lasso(1.0);
        let r = fit(&data, &LossSpec::Squared, &spec, &SolveOptions::default()).unwrap();
        let c = SpdMatrix::new(crate::numerics::symmetrize(&(x.tr_mul(&x) / n as f64))).unwrap();
        let w = x.tr_mul(&eps) / (n as f64).sqrt();
        let dir = spec.compile(p).unwrap().directional(&theta0).unwrap();
        let u = minimize_limit(&c, &w, &dir, &SolveOptions::default()).unwrap();
        let scaled = (&r.minimizer - &theta0) * (n as f64).sqrt();
        assert!((scaled - u.minimizer).amax() < 1e-6);
    }
}

#[test]
fn two_step_examples() {
    let t1 = v(&[3.0, -0.5]);
    let pen = PenaltySpec::lasso(1.0);
    assert_eq!(prox_two_step(&t1, &pen, 0.0, 100).unwrap(), t1);
    assert_eq!(prox_two_step(&t1, &pen, 1.0, 1).unwrap(), v(&[2.0, 0.0]));
}

#[test]
fn two_step_recovery_is_eventually_constant_in_alpha() {
    // θ₁ near the pattern space of θ₀ = (1, 0): once the threshold exceeds
    // the noise in the zero coordinate the recovery indicator stays on.
    let theta0 = v(&[1.0, 0.0]);
    let t1 = v(&[1.03, -0.02]);
    let pen = PenaltySpec::lasso(1.0);
    let compiled = pen.compile(2).unwrap();
    let target = compiled.pattern(&theta0, 0.0);
    let mut seen = false;
    for k in 0..60 {
        let alpha = 0.05 * k as f64;
        let ok = compiled.pattern(&prox_two_step(&t1, &pen, alpha, 100).unwrap(), 0.0) == target;
        assert!(!(seen && !ok), "recovery lost at α = {alpha}");
        seen |= ok;
    }
    assert!(seen);
}

#[test]
fn elastic_net_fit_satisfies_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, p) = (300, 4);
    let x = gaussian_matrix(n, p, &mut rng);
    let y = &x * v(&[1.0, 0.0, -1.0, 0.0]) + Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = Dataset::new(x.clone(), y.clone()).unwrap();
    let spec = PenaltySpec::new(PenaltyKind::ElasticNet { lambda1: 2.0, lambda2: 1.0 }, 1.0);
    let r = fit(&data, &LossSpec::Huber { k: 1.345 }, &spec, &SolveOptions::default()).unwrap();
    let th = &r.minimizer;
    let resid = &y - &x * th;
    let grad = -x.tr_mul(&resid.map(|r| r.clamp(-1.345, 1.345))) / n as f64;
    let res = kkt_residual(th, &grad, &spec.compile(p).unwrap(), 1.0 / (n as f64).sqrt());
    assert!(res / (n as f64).sqrt() < 1e-8);
}

#[test]
fn options_validation() {
    assert!(SolveOptions::default().validate().is_ok());
    let bad = SolveOptions { shrink: 1.0, ..SolveOptions::default() };
    assert!(bad.validate().is_err());
    let bad = SolveOptions { smoothing: vec![1e-3, 1e-2], ..SolveOptions::default() };
    assert!(bad.validate().is_err());
}
