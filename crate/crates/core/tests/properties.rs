use apfb_core::exponents::derive_exponents;
use apfb_core::field::ScalarField;
use apfb_core::grid::build_axisym_grid;
use apfb_core::stability::{dimension_interval, theta_window};
use apfb_core::variation::{det_expansion, fit_expansion};
use apfb_core::vector_field::poly_bump;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn exponent_identities(gamma in 0.0f64..2.0, n in 1usize..8) {
        let e = derive_exponents(gamma, n).unwrap();
        prop_assert!((e.beta * (2.0 - gamma) - 2.0).abs() <= 4.0 * f64::EPSILON);
        prop_assert!(((e.alpha + 2.0) - 2.0 * e.beta).abs() <= 4.0 * f64::EPSILON * e.beta);
        prop_assert!(e.alpha >= 0.0 && e.beta >= 1.0);
    }

    #[test]
    fn window_feasibility_matches_the_inequality(n in 3usize..40, alpha in 0.0f64..2.0) {
        let w = theta_window(n, alpha).unwrap();
        let m = n as f64 - 2.0;
        prop_assert_eq!(w.feasible, 2.0 * m.sqrt() > m + alpha);
        if let Some((lo, hi)) = dimension_interval(alpha) {
            let inside = (n as f64) > lo && (n as f64) < hi;
            // The interval endpoints are roots of the same inequality.
            if ((n as f64) - lo).abs() > 1e-9 && ((n as f64) - hi).abs() > 1e-9 {
                prop_assert_eq!(w.feasible, inside);
            }
        } else {
            prop_assert!(!w.feasible);
        }
    }

    #[test]
    fn two_by_two_determinant_expansion_is_exact(a in prop::array::uniform4(-1.0f64..1.0), eps in 1e-4f64..1e-1) {
        let m = DMatrix::from_row_slice(2, 2, &a);
        let c = det_expansion(&m, eps).unwrap();
        prop_assert!(c.error.abs() <= 1e-14);
    }

    #[test]
    fn fit_recovers_quadratic_coefficients(c in prop::array::uniform3(-5.0f64..5.0)) {
        let eps: Vec<f64> = (0..8).map(|k| 0.01 / f64::powi(2.0, k)).collect();
        let y: Vec<f64> = eps.iter().map(|e| c[0] + c[1] * e + c[2] * e * e).collect();
        let f = fit_expansion(&eps, &y, 5).unwrap();
        prop_assert!((f.e0 - c[0]).abs() <= 1e-12 * (1.0 + c[0].abs()));
        prop_assert!((f.e1 - c[1]).abs() <= 1e-8 * (1.0 + c[1].abs()));
        prop_assert!((f.e2 - c[2]).abs() <= 1e-4 * (1.0 + c[2].abs()));
    }

    #[test]
    fn bump_derivative_matches_differences(x in -0.9f64..0.9, p in 2i32..6) {
        let h = 1e-6;
        let (_, d) = poly_bump(x, -1.0, 1.0, p);
        let fd = (poly_bump(x + h, -1.0, 1.0, p).0 - poly_bump(x - h, -1.0, 1.0, p).0) / (2.0 * h);
        prop_assert!((d - fd).abs() <= 1e-6);
    }

    #[test]
    fn field_csv_round_trips(seed in any::<u64>()) {
        let grid = build_axisym_grid(1.0, -0.5, 0.5, 0.25, 3).unwrap();
        let f = ScalarField::from_fn(&grid, |t, z| ((seed % 97) as f64 * 0.01 + t - z).max(0.0)).unwrap();
        let back = ScalarField::from_csv(&grid, &f.to_csv()).unwrap();
        prop_assert_eq!(back.values, f.values);
        prop_assert_eq!(back.mask, f.mask);
    }
}
