//! Lift/adjoint pairing, proximal operators and the Schur rank identity.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use slrid::covariance::{toeplitz_adjoint, toeplitz_lift};
use slrid::linalg;
use slrid::reweight::rank_identity_check;
use slrid::solver::prox;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    linalg::symmetrize(&gaussian(rng, n, n))
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

#[test]
fn lift_and_adjoint_are_paired() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let n = 1 + case % 4;
        let blocks = 1 + case % 3;
        let mut z: Vec<DMatrix<f64>> = (0..blocks).map(|_| gaussian(&mut rng, n, n)).collect();
        z[0] = linalg::symmetrize(&z[0]);
        let s = sym(&mut rng, n * blocks);
        let lhs: f64 = z
            .iter()
            .zip(toeplitz_adjoint(&s, n).unwrap())
            .map(|(a, b)| inner(a, &b))
            .sum();
        let rhs = inner(toeplitz_lift(&z).unwrap().matrix(), &s);
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "case {case}: {lhs} vs {rhs}");
    }
}

fn linf_objective(x: &[f64], v: &[f64], t: f64) -> f64 {
    let quad: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * quad + t * x.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
}

#[test]
fn linf_prox_beats_a_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let t = rng.random_range(0.05..2.0);
        let x = prox::prox_group_linf(&v, t);
        let best = linf_objective(&x, &v, t);
        let steps = 400;
        let mut grid_min = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = [-2.0 + 4.0 * i as f64 / steps as f64, -2.0 + 4.0 * j as f64 / steps as f64];
                grid_min = grid_min.min(linf_objective(&p, &v, t));
            }
        }
        assert!(best <= grid_min + 1e-12);
        assert!(grid_min - best <= 1e-4, "grid {grid_min} prox {best}");
    }
}

proptest! {
    #[test]
    fn linf_prox_optimality(v in prop::collection::vec(-5.0f64..5.0, 1..12), t in 0.01f64..4.0) {
        let x = prox::prox_group_linf(&v, t);
        let g: Vec<f64> = v.iter().zip(&x).map(|(a, b)| a - b).collect();
        // v − x must be a subgradient of t‖·‖_∞ at x
        let l1: f64 = g.iter().map(|a| a.abs()).sum();
        prop_assert!(l1 <= t + 1e-9);
        let peak = x.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let pairing: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!((pairing - t * peak).abs() <= 1e-9 * (1.0 + t * peak));
    }

    #[test]
    fn svt_optimality(seed in 0u64..1000, t in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(&mut rng, 5, 4);
        let x = prox::svt(&m, t);
        let g = &m - &x;
        let spec = linalg::singular_values(&g)[0];
        prop_assert!(spec <= t + 1e-9);
        let nuc: f64 = linalg::singular_values(&x).iter().sum();
        prop_assert!((inner(&g, &x) - t * nuc).abs() <= 1e-9 * (1.0 + nuc));
    }

    #[test]
    fn svt_beats_perturbations(seed in 0u64..1000, t in 0.1f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(&mut rng, 4, 4);
        let x = prox::svt(&m, t);
        let f = |y: &DMatrix<f64>| 0.5 * (y - &m).norm_squared() + t * linalg::singular_values(y).iter().sum::<f64>();
        let fx = f(&x);
        for _ in 0..20 {
            let d = gaussian(&mut rng, 4, 4) * 1e-2;
            prop_assert!(f(&(&x + d)) >= fx - 1e-4);
        }
    }

    #[test]
    fn psd_projection_optimality(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sym(&mut rng, 5);
        let x = prox::psd_project(&s);
        // X ⪰ 0, X − S ⪰ 0 and ⟨X, X − S⟩ = 0
        prop_assert!(linalg::min_eigenvalue(&x) >= -1e-10);
        prop_assert!(linalg::min_eigenvalue(&(&x - &s)) >= -1e-10);
        prop_assert!(inner(&x, &(&x - &s)).abs() <= 1e-9);
    }

    #[test]
    fn symmetric_svt_agrees_with_svd(seed in 0u64..1000, t in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sym(&mut rng, 6);
        // The SVD reference itself only recomposes `s` to about 1e-8 when two
        // singular values nearly coincide, so its own error widens the bound.
        let reference_err = (s.clone().svd(true, true).recompose().unwrap() - &s).norm();
        prop_assert!((prox::svt_symmetric(&s, t) - prox::svt(&s, t)).norm() <= 1e-9 + 2.0 * reference_err);
    }

    #[test]
    fn ball_projection_is_nearest(seed in 0u64..1000, delta in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = gaussian(&mut rng, 3, 3);
        let m = gaussian(&mut rng, 3, 3) * 2.0;
        let p = prox::frobenius_ball_project(&m, &c, delta);
        prop_assert!((&p - &c).norm() <= delta + 1e-12);
        for _ in 0..10 {
            let q = prox::frobenius_ball_project(&(gaussian(&mut rng, 3, 3) * 3.0), &c, delta);
            prop_assert!((&m - &p).norm() <= (&m - &q).norm() + 1e-12);
        }
    }

    #[test]
    fn l1_ball_projection_lands_inside(v in prop::collection::vec(-5.0f64..5.0, 1..10), r in 0.0f64..6.0) {
        let p = prox::project_l1_ball(&v, r);
        let l1: f64 = p.iter().map(|a| a.abs()).sum();
        prop_assert!(l1 <= r + 1e-9);
    }
}

/// Exact small instance: `K = T⁻¹ H T⁻ᵀ` with `θ = [I 0] T`, so that
/// `θKθᵀ = H_00 = I + GGᵀ` has rank-`r` excess.
fn planted_instance(rng: &mut ChaCha8Rng, n: usize, blocks: usize, r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let nk = n * blocks;
    let mut t = DMatrix::identity(nk, nk);
    let b = gaussian(rng, n, nk - n) * 0.5;
    t.view_mut((0, n), (n, nk - n)).copy_from(&b);
    let g = gaussian(rng, n, r);
    let c = gaussian(rng, nk - n, nk - n);
    let mut h = DMatrix::zeros(nk, nk);
    h.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) + &g * g.transpose()));
    h.view_mut((n, n), (nk - n, nk - n)).copy_from(&(&c * c.transpose() + DMatrix::identity(nk - n, nk - n)));
    let t_inv = t.clone().try_inverse().unwrap();
    let k = linalg::symmetrize(&(&t_inv * h * t_inv.transpose()));
    let theta = t.rows(0, n).into_owned();
    (k, theta)
}

fn rank_of(m: &DMatrix<f64>) -> usize {
    linalg::numerical_rank(&linalg::singular_values(m), 1e-8)
}

/// Singular values above `1e−8·scale`.
fn rank_at_scale(m: &DMatrix<f64>, scale: f64) -> usize {
    linalg::singular_values(m).iter().filter(|&&s| s > 1e-8 * scale).count()
}

#[test]
fn schur_rank_identity_on_planted_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20 {
        let n = 3 + case % 3;
        let r = case % n;
        let (k, theta) = planted_instance(&mut rng, n, 3, r);
        let nk = k.nrows();
        let mut lift = DMatrix::zeros(nk + n, nk + n);
        lift.view_mut((0, 0), (nk, nk)).copy_from(&k.clone().try_inverse().unwrap());
        lift.view_mut((nk, 0), (n, nk)).copy_from(&theta);
        lift.view_mut((0, nk), (nk, n)).copy_from(&theta.transpose());
        lift.view_mut((nk, nk), (n, n)).fill_with_identity();
        let gram = &theta * &k * theta.transpose();
        let schur = &gram - DMatrix::identity(n, n);
        assert_eq!(rank_at_scale(&schur, gram.norm()), r, "case {case}");
        assert_eq!(rank_of(&lift), rank_of(&k) + r, "case {case}");
    }
}

#[test]
fn schur_rank_identity_on_toeplitz_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..20 {
        let n = 2 + case % 3;
        let lags: Vec<DMatrix<f64>> = (0..3)
            .map(|j| {
                if j == 0 {
                    DMatrix::identity(n, n) * 6.0
                } else {
                    gaussian(&mut rng, n, n) * 0.3
                }
            })
            .collect();
        let k = toeplitz_lift(&lags).unwrap();
        assert!(k.is_positive_definite());
        let mut theta = gaussian(&mut rng, n, 3 * n);
        theta.columns_mut(0, n).fill_with_identity();
        let report = rank_identity_check(&theta, &k, 0, 0).unwrap();
        assert!(report.identity_holds, "case {case}: {report:?}");
        assert_eq!(report.rank_k, 3 * n);
    }
}

#[test]
fn complex_square_root_squares_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let a = linalg::to_complex(&gaussian(&mut rng, 4, 4)) + linalg::to_complex(&gaussian(&mut rng, 4, 4)) * num_i();
        let h = &a * a.adjoint();
        let r = linalg::herm_sqrt(&h);
        assert!((&r * &r - &h).norm() <= 1e-9 * h.norm());
    }
}

fn num_i() -> num_complex::Complex64 {
    num_complex::Complex64::new(0.0, 1.0)
}
