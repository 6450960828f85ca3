//! Cross-checks against independent reference computations.

use std::sync::Arc;

use apfb_core::cone::cone_solve;
use apfb_core::distance::distance_to_fb;
use apfb_core::eigen::EigenOptions;
use apfb_core::energy::GeneralEnergySpec;
use apfb_core::exponents::exponents_from_alpha;
use apfb_core::field::ScalarField;
use apfb_core::grid::{build_axisym_grid, AxisymGrid};
use apfb_core::profiles::{radial_profile, u_from_v};
use apfb_core::stability::{
    assemble_discrete_form, build_theta_test, normal_variation_field, potential_u, potential_v, quad_form, rayleigh_min, split_potential_terms,
};
use apfb_core::variation::{shell_quadrature, verify_expansion_reference, CenteredRadial, VariationSpec};
use apfb_core::vector_field::{poly_bump, SupportBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Classical fixed-step RK4 for `y'' = f(x, y, y')`.
fn rk4(f: impl Fn(f64, f64, f64) -> f64, x0: f64, y0: [f64; 2], x1: f64, steps: usize) -> [f64; 2] {
    let h = (x1 - x0) / steps as f64;
    let (mut x, mut y) = (x0, y0);
    let g = |x: f64, y: [f64; 2]| [y[1], f(x, y[0], y[1])];
    for _ in 0..steps {
        let k1 = g(x, y);
        let k2 = g(x + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = g(x + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = g(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        y = [y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]), y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])];
        x += h;
    }
    y
}

#[test]
fn radial_profile_matches_rk4() {
    for (n, alpha) in [(3, 0.25), (4, 0.5), (5, 1.0)] {
        let e = exponents_from_alpha(alpha, n).unwrap();
        let p = radial_profile(&e, 1.0, 2.0, 1e-10).unwrap();
        let nm1 = (n - 1) as f64;
        let a = -nm1 / (2.0 * (1.0 + alpha));
        let s0 = 1e-3;
        let y = rk4(
            |r, v, dv| 0.5 * alpha * (1.0 - dv * dv) / v - nm1 * dv / r,
            1.0 + s0,
            [s0 + a * s0 * s0, 1.0 + 2.0 * a * s0],
            2.0,
            20_000,
        );
        let got = p.eval(2.0);
        assert!((got[0] - y[0]).abs() < 1e-6 * y[0], "n={n} a={alpha}: {} vs {}", got[0], y[0]);
        assert!((got[1] - y[1]).abs() < 1e-6, "n={n} a={alpha}: {} vs {}", got[1], y[1]);
    }
}

#[test]
fn cone_matches_rk4_away_from_the_free_boundary() {
    let (n, alpha) = (3, 0.25);
    let e = exponents_from_alpha(alpha, n).unwrap();
    let c = cone_solve(&e, (0.0725, 0.0726), 1e-10).unwrap();
    assert!((c.theta0 - 3.07541).abs() < 1e-4, "theta0 = {}", c.theta0);
    let nf = n as f64;
    let k = (0.5 * alpha * (1.0 - c.h0 * c.h0) / c.h0 - (nf - 1.0) * c.h0) / (nf - 1.0);
    let th0 = 1e-4;
    let y = rk4(
        |th, h, dh| 0.5 * alpha * (1.0 - h * h - dh * dh) / h - (nf - 2.0) * dh / th.tan() - (nf - 1.0) * h,
        th0,
        [c.h0 + 0.5 * k * th0 * th0, k * th0],
        2.0,
        40_000,
    );
    let got = c.eval(2.0);
    assert!((got[0] - y[0]).abs() < 1e-6 * y[0].abs().max(1e-3), "{} vs {}", got[0], y[0]);
    assert!((got[1] - y[1]).abs() < 1e-5, "{} vs {}", got[1], y[1]);
}

#[test]
fn distance_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = build_axisym_grid(1.0, -1.0, 1.0, 1.0 / 16.0, 3).unwrap();
    for _ in 0..5 {
        let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..3.0));
        let f = ScalarField::from_fn(&grid, |t, z| (a * t + b * z + (c * t).sin() * (c * z).cos()).max(0.0)).unwrap();
        let d = distance_to_fb(&f).field().expect("zero set present");
        let zeros: Vec<(f64, f64)> = (0..grid.len()).filter(|&k| !f.mask[k]).map(|k| grid.coords(k)).collect();
        for k in 0..grid.len() {
            let (t, z) = grid.coords(k);
            let brute = zeros.iter().map(|&(s, w)| (t - s).hypot(z - w)).fold(f64::INFINITY, f64::min);
            assert!((d.values[k] - brute).abs() < 1e-12, "node {k}: {} vs {brute}", d.values[k]);
        }
    }
}

fn radial_setup(alpha: f64, h: f64) -> (apfb_core::exponents::Exponents, AxisymGrid, ScalarField) {
    let e = exponents_from_alpha(alpha, 3).unwrap();
    let p = radial_profile(&e, 1.0, 3.0, 1e-10).unwrap();
    let grid = build_axisym_grid(2.0, -2.0, 2.0, h, 3).unwrap();
    let v = p.to_field(&grid, 0.0).unwrap();
    (e, grid, v)
}

fn centred_bump(grid: &AxisymGrid, r_in: f64, r_out: f64) -> ScalarField {
    let (values, grads): (Vec<f64>, Vec<[f64; 2]>) = (0..grid.len())
        .map(|k| {
            let (t, z) = grid.coords(k);
            let r = t.hypot(z);
            let (p, dp) = poly_bump(r, r_in, r_out, 3);
            (p, if r > 0.0 { [dp * t / r, dp * z / r] } else { [0.0; 2] })
        })
        .unzip();
    let mut f = ScalarField::from_parts(grid.clone(), values, vec![true; grid.len()]).unwrap();
    f.gradient = Some(grads);
    f
}

#[test]
fn potentials_of_the_two_forms_are_proportional() {
    let (e, _, v) = radial_setup(0.5, 1.0 / 32.0);
    let u = u_from_v(&v, &e).unwrap();
    let wv = potential_v(&v, &e).unwrap();
    let wu = potential_u(&u, &e).unwrap();
    let c = e.beta.powf(-e.alpha);
    let mut worst = 0.0f64;
    for k in 0..wv.len() {
        if v.mask[k] && wv[k] != 0.0 {
            worst = worst.max((wu[k] - c * wv[k]).abs() / (c * wv[k]).abs());
        }
    }
    assert!(worst < 1e-9, "worst relative mismatch {worst:e}");
}

#[test]
fn quadratic_form_is_gradient_minus_potential() {
    let (e, grid, v) = radial_setup(0.5, 1.0 / 32.0);
    let phi = centred_bump(&grid, 0.5, 1.8);
    let q = quad_form(&v, &e, &phi).unwrap();
    assert_eq!(q.q, q.gradient_term - q.potential_term);
    assert!(q.gradient_term > 0.0 && q.potential_term > 0.0);
}

#[test]
fn split_potential_pieces_diverge_while_the_combination_converges() {
    let mut firsts = Vec::new();
    let mut combined = Vec::new();
    for k in 4..=6 {
        let (e, grid, v) = radial_setup(0.5, 1.0 / f64::powi(2.0, k));
        let s = split_potential_terms(&v, &e, &centred_bump(&grid, 0.5, 1.8)).unwrap();
        firsts.push(s.first);
        combined.push(s.combined);
    }
    assert!(firsts[1] > 1.2 * firsts[0] && firsts[2] > 1.2 * firsts[1], "{firsts:?}");
    let drift = (combined[2] - combined[1]).abs() / combined[2].abs();
    assert!(drift < 0.1, "{combined:?}");
}

#[test]
fn smallest_eigenvalue_bounds_every_quotient() {
    let (e, _, v) = radial_setup(0.5, 1.0 / 16.0);
    let region = SupportBox { t0: 0.0, t1: 1.75, z0: -1.75, z1: 1.75 };
    let form = assemble_discrete_form(&v, &e, region).unwrap();
    let r = rayleigh_min(&v, &e, region, &EigenOptions::default()).unwrap();
    assert!((form.quotient(&r.vector) - r.lambda_min).abs() < 1e-6 * r.lambda_min.abs().max(1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let x: Vec<f64> = (0..v.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(form.quotient(&x) >= r.lambda_min - 1e-9 * r.lambda_min.abs());
    }
}

#[test]
fn quadratic_form_matches_second_inner_variation() {
    let alpha = 0.5;
    let e = exponents_from_alpha(alpha, 3).unwrap();
    let p = radial_profile(&e, 1.0, 3.0, 1e-10).unwrap();
    let phi_fn = |t: f64, z: f64| {
        let r = t.hypot(z);
        let (b, db) = poly_bump(r, 0.7, 1.6, 4);
        let c = if r > 0.0 { z / r } else { 0.0 };
        let ang = 1.0 + 0.3 * c;
        // d(z/r) = (-z t / r³, t² / r³)
        let (dct, dcz) = if r > 0.0 { (-z * t / r.powi(3), t * t / r.powi(3)) } else { (0.0, 0.0) };
        let dr = if r > 0.0 { [t / r, z / r] } else { [0.0; 2] };
        (b * ang, [db * dr[0] * ang + b * 0.3 * dct, db * dr[1] * ang + b * 0.3 * dcz])
    };
    let support = SupportBox { t0: 0.0, t1: 1.6, z0: -1.6, z1: 1.6 };
    let field = normal_variation_field(&p, 0.0, Arc::new(phi_fn), support);
    let spec = VariationSpec { phi: Arc::new(field), ladder: apfb_core::variation::default_ladder() };
    let pts = shell_quadrature(0.0, 1.0, 1.6, alpha, 3, 32, 32, 8);
    let u = CenteredRadial { profile: &p, zc: 0.0 };
    let reference = verify_expansion_reference(&u, &spec, &GeneralEnergySpec::modified(&e), 3, &pts, 5).unwrap();
    let e2 = reference.closed_form.E2;
    assert!(reference.rel_gap.E2 < 1e-5, "fit {} vs closed {e2}", reference.fitted.E2);

    let grid = build_axisym_grid(2.0, -2.0, 2.0, 1.0 / 64.0, 3).unwrap();
    let v = p.to_field(&grid, 0.0).unwrap();
    let (values, grads): (Vec<f64>, Vec<[f64; 2]>) = (0..grid.len())
        .map(|k| {
            let (t, z) = grid.coords(k);
            phi_fn(t, z)
        })
        .unzip();
    let mut phi = ScalarField::from_parts(grid.clone(), values, vec![true; grid.len()]).unwrap();
    phi.gradient = Some(grads);
    let q = quad_form(&v, &e, &phi).unwrap().q;
    assert_eq!(q.signum(), e2.signum());
    assert!((q - e2).abs() < 5e-3 * e2.abs(), "Q = {q}, E2 = {e2}");
}

#[test]
fn theta_zero_probe_is_the_cutoff() {
    let grid = build_axisym_grid(2.5, -2.5, 2.5, 1.0 / 16.0, 3).unwrap();
    let t = build_theta_test(&grid, 0.0, 0.05, 1.0, 0.0, 1.0).unwrap();
    for k in 0..grid.len() {
        let (tau, z) = grid.coords(k);
        let r = tau.hypot(z);
        let x = (r - 1.0).clamp(0.0, 1.0);
        let expected = 1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        assert!((t.field.values[k] - expected).abs() < 1e-15);
        assert_eq!(t.main_part[k], 0.0);
    }
    assert!(t.split_bound_excess() <= 1e-12);
}
