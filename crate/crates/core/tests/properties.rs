mod common;

use common::*;
use pnml_core::linalg::{orth_residual_sq, pseudo_inverse, ridge_solve, svd_decompose, DEFAULT_RANK_TOL};
use pnml_core::*;
use proptest::prelude::*;

/// Random over-parameterized instance: design, test vector and label seed.
fn over_param(seed: u64, n: usize, extra: usize) -> (DesignMatrix, DVector<f64>, rand_chacha::ChaCha8Rng) {
    let mut r = rng(seed);
    let m = n + extra;
    let x = gaussian_matrix(&mut r, n, m);
    let y = gaussian_vector(&mut r, n);
    let xt = gaussian_vector(&mut r, m) / (m as f64).sqrt();
    (DesignMatrix::new(x, y).unwrap(), xt, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penrose_conditions(seed in any::<u64>(), n in 1usize..12, m in 1usize..12, rank in 1usize..12) {
        let mut r = rng(seed);
        let x = if rank < n.min(m) { low_rank_matrix(&mut r, n, m, rank) } else { gaussian_matrix(&mut r, n, m) };
        let p = pseudo_inverse(&svd_decompose(&x, DEFAULT_RANK_TOL).unwrap());
        let a = p.matrix();
        let xax = &x * a * &x;
        let axa = a * &x * a;
        let xa = &x * a;
        let ax = a * &x;
        prop_assert!(rel_err_mat(&xax, &x) < 1e-8);
        prop_assert!(rel_err_mat(&axa, a) < 1e-8);
        prop_assert!(rel_err_mat(&xa.transpose(), &xa) < 1e-8);
        prop_assert!(rel_err_mat(&ax.transpose(), &ax) < 1e-8);
    }

    #[test]
    fn row_space_split_is_pythagorean(seed in any::<u64>(), n in 1usize..8, m in 1usize..16) {
        let mut r = rng(seed);
        let x = gaussian_matrix(&mut r, n, m);
        let v = gaussian_vector(&mut r, m);
        let p = pseudo_inverse(&svd_decompose(&x, DEFAULT_RANK_TOL).unwrap());
        let orth = orth_residual_sq(&p, &x, &v).unwrap();
        let inside = (p.matrix() * (&x * &v)).norm_squared();
        prop_assert!(rel_err(orth + inside, v.norm_squared()) < 1e-8);
    }

    #[test]
    fn ridge_is_continuous_and_tends_to_mn(seed in any::<u64>(), n in 1usize..8, extra in 1usize..10, log_l in -3.0f64..3.0) {
        let (d, _, _) = over_param(seed, n, extra);
        let lambda = 10f64.powf(log_l);
        let a = ridge_solve(d.features(), d.targets(), lambda).unwrap();
        let b = ridge_solve(d.features(), d.targets(), lambda * (1.0 + 1e-9)).unwrap();
        prop_assert!((a - b).norm() <= 1e-7 * (1.0 + d.targets().norm()));
        let tiny = ridge_solve(d.features(), d.targets(), 1e-10).unwrap();
        let smallest = d.svd().singular_values().min();
        prop_assume!(smallest > 1e-2);
        prop_assert!(rel_err_vec(&tiny, mn_solve(&d).theta()) < 1e-5);
    }

    #[test]
    fn mn_recursions_equal_batch(seed in any::<u64>(), n in 1usize..10, extra in 1usize..10) {
        let (d, xt, mut r) = over_param(seed, n, extra);
        let (_, orth) = d.orth_component(&xt).unwrap();
        prop_assume!(orth > 1e-6);
        let mn = mn_solve(&d);
        let yt = 3.0 * gaussian_vector(&mut r, 1)[0];
        let batch = mn_solve(&d.append(&xt, yt).unwrap());
        let rec = mn_update(&d, &mn, &xt, yt).unwrap();
        prop_assert!(rel_err_vec(rec.theta(), batch.theta()) < 1e-6);
        prop_assert!(rel_err(rec.theta_quad(), batch.theta_quad()) < 1e-6);
        let norm = mn_norm_after_update(&d, &mn, &xt, yt).unwrap();
        prop_assert!(rel_err(norm, batch.norm_sq()) < 1e-6);
    }

    #[test]
    fn updated_norm_grows_with_the_residual(seed in any::<u64>(), n in 1usize..8, extra in 1usize..8, a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (d, xt, _) = over_param(seed, n, extra);
        let (_, orth) = d.orth_component(&xt).unwrap();
        prop_assume!(orth > 1e-6 && (a - b).abs() > 1e-6);
        let mn = mn_solve(&d);
        let m = mn.predict(&xt);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let n_lo = mn_norm_after_update(&d, &mn, &xt, m - lo).unwrap();
        let n_hi = mn_norm_after_update(&d, &mn, &xt, m + hi).unwrap();
        prop_assert!(n_hi > n_lo);
    }

    #[test]
    fn genie_norm_is_non_increasing_in_lambda(seed in any::<u64>(), n in 1usize..8, extra in 1usize..10, yt in -4.0f64..4.0) {
        let (d, xt, _) = over_param(seed, n, extra);
        let mut prev = f64::INFINITY;
        for k in 0..=32 {
            let lambda = 10f64.powf(-8.0 + 0.5 * k as f64);
            let theta = ridge_solve(d.features(), d.targets(), lambda).unwrap();
            let norm = ridge_genie_fit(&d, &theta, &xt, yt, lambda).unwrap().theta.norm();
            prop_assert!(norm <= prev * (1.0 + 1e-10));
            prev = norm;
        }
    }

    #[test]
    fn lambda_grows_with_label_distance(seed in any::<u64>(), n in 1usize..8, extra in 1usize..8) {
        let (d, xt, _) = over_param(seed, n, extra);
        let mn = mn_solve(&d);
        prop_assume!(mn.norm_sq() > 1e-8);
        let m = mn.predict(&xt);
        for side in [-1.0, 1.0] {
            let mut prev = 0.0;
            for k in 0..12 {
                let y = m + side * 0.25 * k as f64;
                let fit = solve_lambda_for_label(&d, &mn, &xt, y, 1.0, 1e-10).unwrap();
                prop_assert!(fit.lambda_y >= prev * (1.0 - 1e-8));
                prop_assert!(fit.norm_gap.abs() <= 1e-6 * mn.norm_sq().sqrt());
                prev = fit.lambda_y;
            }
        }
    }

    #[test]
    fn lambda_bound_is_first_order_exact(seed in any::<u64>(), n in 1usize..8, extra in 1usize..8) {
        let (d, xt, _) = over_param(seed, n, extra);
        let mn = mn_solve(&d);
        let (_, orth) = d.orth_component(&xt).unwrap();
        prop_assume!(mn.norm_sq() > 1e-6 && orth > 1e-6);
        let m = mn.predict(&xt);
        let rel_err = |h: f64| {
            let y = m + h * mn.norm_sq().sqrt() * orth.sqrt();
            let fit = solve_lambda_for_label(&d, &mn, &xt, y, 1.0, 1e-12).unwrap();
            (lambda_lower_bound(&d, &mn, &xt, y).unwrap() / fit.lambda_y - 1.0).abs()
        };
        // How close the offset must be depends on ‖x_⊥‖², and very small λ hits
        // rounding, so look for the limit along a ladder of offsets.
        let best = (3..8).map(|k| rel_err(10f64.powi(-k))).fold(f64::INFINITY, f64::min);
        prop_assert!(best < 1e-2, "closest ratio error {}", best);
    }

    #[test]
    fn genie_envelope_dominates(seed in any::<u64>(), n in 1usize..8, extra in 1usize..10, offset in -5.0f64..5.0, log_s in -2.0f64..1.0) {
        let (d, xt, _) = over_param(seed, n, extra);
        let mn = mn_solve(&d);
        prop_assume!(mn.norm_sq() > 1e-8);
        let sigma_sq = 10f64.powf(log_s);
        let y = mn.predict(&xt) + offset;
        let fit = solve_lambda_for_label(&d, &mn, &xt, y, sigma_sq, 1e-10).unwrap();
        prop_assume!(fit.lambda_y > 0.0);
        let (k0, _) = under_param_regret(&d, &xt).unwrap();
        let (_, orth) = d.orth_component(&xt).unwrap();
        let envelope = genie_density_upper_bound(k0, orth, fit.lambda_y, fit.ridge_residual, sigma_sq).unwrap();
        prop_assert!(fit.density <= envelope * (1.0 + 1e-12));
        prop_assert!(fit.density <= 1.0 / (2.0 * std::f64::consts::PI * sigma_sq).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn bound_is_non_increasing_in_sigma(seed in any::<u64>(), n in 1usize..8, extra in 1usize..10) {
        let (d, xt, _) = over_param(seed, n, extra);
        let mn = mn_solve(&d);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let b = regret_upper_bound(&d, &mn, &xt, 10f64.powf(-3.0 + 0.3 * k as f64)).unwrap();
            prop_assert!(b <= prev);
            prev = b;
        }
    }
}

proptest! {
    // Each case runs a full quadrature, so keep the count modest.
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pnml_assignment_is_normalized_and_equalized(seed in any::<u64>(), n in 1usize..8, extra in 1usize..10, log_s in -1.5f64..0.5) {
        let (d, xt, _) = over_param(seed, n, extra);
        let mn = mn_solve(&d);
        let sigma_sq = 10f64.powf(log_s);
        let eval = pnml_evaluate(&d, &mn, &xt, sigma_sq, &QuadConfig::default()).unwrap();
        prop_assert!(eval.k_factor >= 1.0);
        prop_assert!(eval.regret >= 0.0);
        prop_assert!((eval.regret - eval.k_factor.ln()).abs() < 1e-14);
        prop_assert!((eval.grid_mass() - 1.0).abs() < 2e-3);
        prop_assert!(eval.regret <= eval.regret_bound + 5e-3);

        let step = (eval.density_grid.len() / 37).max(1);
        for &(y, q) in eval.density_grid.iter().step_by(step) {
            prop_assume!(q > 1e-250);
            let p = genie_density(&d, &mn, &xt, y, sigma_sq).unwrap();
            prop_assert!(((p / q).ln() - eval.regret).abs() < 1e-6);
        }

        // Neighbouring nodes can tie with the center to the last bit, so compare values.
        let center = eval.density_grid[eval.density_grid.len() / 2];
        prop_assert!((center.0 - eval.mn_prediction).abs() <= 1e-12 * (1.0 + eval.mn_prediction.abs()));
        prop_assert!(eval.density_grid.iter().all(|&(_, q)| q <= center.1));
    }

    #[test]
    fn forced_quadrature_reproduces_the_closed_form(seed in any::<u64>(), m in 1usize..6, extra in 1usize..20, log_s in -1.0f64..1.0) {
        let mut r = rng(seed);
        let n = m + extra;
        let d = DesignMatrix::new(gaussian_matrix(&mut r, n, m), gaussian_vector(&mut r, n)).unwrap();
        let mn = mn_solve(&d);
        let xt = gaussian_vector(&mut r, m);
        let cfg = QuadConfig { force_quadrature: true, ..QuadConfig::default() };
        let eval = pnml_evaluate(&d, &mn, &xt, 10f64.powf(log_s), &cfg).unwrap();
        let (k0, _) = under_param_regret(&d, &xt).unwrap();
        prop_assert!(rel_err(eval.k_factor, k0) < 1e-3);
    }
}
