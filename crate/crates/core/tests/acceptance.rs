//! Acceptance gate: every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line. The process exits nonzero if any criterion fails.

use std::time::Instant;

use apfb_core::cone::{cone_scan, cone_shoot, ShotResult};
use apfb_core::eigen::EigenOptions;
use apfb_core::energy::{energy_ap, energy_mod, variation_integrals, GeneralEnergySpec};
use apfb_core::exponents::{derive_exponents, derive_exponents_rational, exponents_from_alpha};
use apfb_core::field::ScalarField;
use apfb_core::grid::{build_axisym_grid, AxisymGrid, Grid1d};
use apfb_core::profiles::{one_d_field, one_d_profile, radial_profile, v_from_u};
use apfb_core::quadrature::observed_orders;
use apfb_core::stability::{
    alpha_threshold, cancellation_slope, curvature_check, feasible_dimensions, limit_alpha_zero, probe_sweep, quad_form, rayleigh_min, theta_samples, theta_window,
    LimitFamily,
};
use apfb_core::variation::{truncation_study, verify_expansion, verify_expansion_analytic, PolynomialField, VariationSpec};
use apfb_core::vector_field::{poly_bump, BoxBumpField, RadialBumpField, SupportBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), apfb_core::Error>;

fn seed() -> u64 {
    std::env::var("APFB_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn exponent_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let g = rng.gen_range(0.0..2.0);
        let e = derive_exponents(g, 3)?;
        // alpha = 2 beta - 2 checked as alpha + 2 = 2 beta: evaluating 2 beta - 2 cancels for small gamma.
        worst = worst.max(rel(e.beta * (2.0 - g), 2.0)).max(rel(e.alpha + 2.0, 2.0 * e.beta));
    }
    let exact = derive_exponents_rational(2, 3, 3)?.alpha;
    let float = derive_exponents(2.0 / 3.0, 3)?.alpha;
    Ok((worst <= 1e-14 && exact == 1.0, format!("worst relative error {worst:.2e}; gamma = 2/3 gives alpha = {exact} (float input {float})")))
}

fn one_d_profiles() -> Outcome {
    let grid = Grid1d::new(0.0, 1.0, 1e-3)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for g in [0.2, 0.5, 1.0, 1.5] {
        let p = one_d_profile(&derive_exponents(g, 1)?, &grid)?;
        let (res, eq) = (p.ode_residual(1e-3), p.equipartition_error(1e-3));
        ok &= res <= 1e-10 && eq <= 1e-12;
        parts.push(format!("gamma {g}: {res:.1e}/{eq:.1e}"));
    }
    Ok((ok, format!("residual/equipartition {}", parts.join(", "))))
}

fn truncation_orders() -> Outcome {
    let rows = truncation_study(seed(), &[2, 3, 4, 5], 100)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &rows {
        if r.exact {
            parts.push(format!("{} {}x{} exact ({:.1e})", r.kind, r.size, r.size, r.max_error));
        } else {
            ok &= (2.7..=3.3).contains(&r.slope);
            parts.push(format!("{} {}x{} {:.3}", r.kind, r.size, r.size, r.slope));
        }
    }
    Ok((ok, format!("rms slopes: {}", parts.join(", "))))
}

fn expansion() -> Outcome {
    let e = exponents_from_alpha(0.5, 3)?;
    let energy = GeneralEnergySpec::modified(&e);
    let sb = SupportBox { t0: 0.0, t1: 1.0, z0: -0.5, z1: 0.75 };
    let spec = VariationSpec::new(BoxBumpField { support: sb, direction: [0.6, 0.8], power: 4 }, apfb_core::variation::default_ladder());
    let poly = PolynomialField { c: [1.0, 0.3, 0.1, 0.2, 0.05] };
    let a = verify_expansion_analytic(&poly, &spec, &energy, 3, 0.1, 6, 5)?;

    let p = radial_profile(&e, 1.0, 4.0, 1e-10)?;
    let grid = build_axisym_grid(2.5, -2.5, 2.5, 1.0 / 128.0, 3)?;
    let v = p.to_field(&grid, 0.0)?;
    let phi = RadialBumpField { zc: 0.0, r_in: 1.3, r_out: 2.0, amplitude: 1.0, power: 3 };
    let r = verify_expansion(&v, &VariationSpec::new(phi, apfb_core::variation::default_ladder()), &energy, 5)?;
    let ok = a.rel_gap.E1 <= 1e-6 && a.rel_gap.E2 <= 1e-6 && r.rel_gap.E1 <= 1e-3 && r.rel_gap.E2 <= 1e-3;
    Ok((
        ok,
        format!(
            "polynomial gaps E1 {:.1e} E2 {:.1e}; radial h=1/128 gaps E1 {:.1e} E2 {:.1e}",
            a.rel_gap.E1, a.rel_gap.E2, r.rel_gap.E1, r.rel_gap.E2
        ),
    ))
}

/// First variations at `h = 1/64, 1/128, 1/256` relative to the first-variation scale.
fn first_variation_ladder(make: &dyn Fn(&AxisymGrid) -> apfb_core::Result<ScalarField>, phi: &BoxBumpField, spec: &GeneralEnergySpec, bounds: [f64; 3]) -> apfb_core::Result<(Vec<f64>, f64)> {
    let mut vals = Vec::new();
    let mut scale = 0.0;
    for k in 6..=8 {
        let grid = build_axisym_grid(bounds[0], bounds[1], bounds[2], 1.0 / f64::powi(2.0, k), 3)?;
        let v = make(&grid)?;
        let r = variation_integrals(&v, spec, phi)?;
        vals.push(r.first.abs());
        scale = r.first_scale;
    }
    Ok((vals, scale))
}

fn criticality() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut judge = |name: String, vals: Vec<f64>, scale: f64| {
        let orders = observed_orders(&vals);
        let last = vals[2] / scale;
        ok &= orders.iter().all(|&o| o >= 2.0) && last <= 1e-5;
        parts.push(format!("{name}: orders {:.2}/{:.2}, final {last:.1e}", orders[0], orders[1]));
    };
    for alpha in [0.25, 0.5, 1.0] {
        let e = exponents_from_alpha(alpha, 3)?;
        let spec = GeneralEnergySpec::modified(&e);
        let phi_1d = BoxBumpField { support: SupportBox { t0: 0.3, t1: 1.2, z0: -0.5, z1: 0.5 }, direction: [0.6, 0.8], power: 4 };
        let (vals, scale) = first_variation_ladder(&|g| v_from_u(&one_d_field(&e, g, 0.0123)?, &e), &phi_1d, &spec, [1.5, -1.0, 1.0])?;
        judge(format!("1d a={alpha}"), vals, scale);

        let p = radial_profile(&e, 1.0, 4.0, 1e-10)?;
        let phi_r = BoxBumpField { support: SupportBox { t0: 0.4, t1: 1.4, z0: 0.1, z1: 1.1 }, direction: [0.6, 0.8], power: 4 };
        let (vals, scale) = first_variation_ladder(&|g| p.to_field(g, 0.0), &phi_r, &spec, [2.0, -2.0, 2.0])?;
        judge(format!("radial a={alpha}"), vals, scale);
    }
    Ok((ok, parts.join("; ")))
}

fn correspondence() -> Outcome {
    let e = exponents_from_alpha(0.5, 3)?;
    let mut gaps = Vec::new();
    for k in 6..=8 {
        let grid = build_axisym_grid(1.0, -1.0, 1.0, 1.0 / f64::powi(2.0, k), 3)?;
        let u = one_d_field(&e, &grid, 0.0123)?;
        let v = v_from_u(&u, &e)?;
        let ap = energy_ap(&u, &e)?.total;
        let md = energy_mod(&v, &e)?.total;
        gaps.push((ap - e.correspondence_factor() * md).abs() / ap.abs());
    }
    let orders = observed_orders(&gaps);
    let ok = gaps[2] <= 5e-4 && orders.iter().all(|o| (1.8..=2.2).contains(o));
    Ok((ok, format!("gaps {:.2e}, {:.2e}, {:.2e}; orders {:.2}, {:.2}", gaps[0], gaps[1], gaps[2], orders[0], orders[1])))
}

/// Sum of a few random radial bumps inside `region`.
fn random_probe(grid: &AxisymGrid, region: SupportBox, rng: &mut ChaCha8Rng) -> apfb_core::Result<ScalarField> {
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let rad = rng.gen_range(0.15..0.4);
            let tc = rng.gen_range(region.t0..region.t1 - rad);
            let zc = rng.gen_range(region.z0 + rad..region.z1 - rad);
            (tc, zc, rad, rng.gen_range(-1.0..1.0))
        })
        .collect();
    let (values, grads): (Vec<f64>, Vec<[f64; 2]>) = (0..grid.len())
        .map(|k| {
            let (t, z) = grid.coords(k);
            let mut val = 0.0;
            let mut g = [0.0; 2];
            // Bumps are even in tau about the axis so the probe stays smooth there.
            for &(tc, zc, rad, amp) in &bumps {
                for tm in [tc, -tc] {
                    let (dt, dz) = (t - tm, z - zc);
                    let r = dt.hypot(dz);
                    let (p, dp) = poly_bump(r, -rad, rad, 3);
                    val += amp * p;
                    if r > 0.0 {
                        g[0] += amp * dp * dt / r;
                        g[1] += amp * dp * dz / r;
                    }
                }
            }
            (val, g)
        })
        .unzip();
    let mut f = ScalarField::from_parts(grid.clone(), values, vec![true; grid.len()])?;
    f.gradient = Some(grads);
    Ok(f)
}

fn one_d_stability() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let grid = build_axisym_grid(1.5, -1.5, 1.5, 1.0 / 32.0, 3)?;
    let region = SupportBox { t0: 0.0, t1: 1.25, z0: -1.25, z1: 1.25 };
    for alpha in [0.25, 0.5, 1.0] {
        let e = exponents_from_alpha(alpha, 3)?;
        let v = v_from_u(&one_d_field(&e, &grid, 0.0123)?, &e)?;
        let r = rayleigh_min(&v, &e, region, &EigenOptions { seed: seed(), ..EigenOptions::default() })?;
        let mut q_min = f64::INFINITY;
        for _ in 0..50 {
            let phi = random_probe(&grid, region, &mut rng)?;
            q_min = q_min.min(quad_form(&v, &e, &phi)?.q);
        }
        ok &= r.lambda_min >= -1e-8 && q_min >= 0.0;
        parts.push(format!("a={alpha}: lambda_min {:.3e}, min Q {q_min:.3e}", r.lambda_min));
    }
    Ok((ok, parts.join("; ")))
}

const RADIAL_CASES: [(usize, f64); 9] = [(3, 0.25), (3, 0.5), (3, 1.0), (4, 0.25), (4, 0.5), (4, 1.0), (5, 0.25), (5, 0.5), (5, 1.0)];

fn cancellation() -> Outcome {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (n, alpha) in RADIAL_CASES {
        let p = radial_profile(&exponents_from_alpha(alpha, n)?, 1.0, 2.0, 1e-10)?;
        let s = cancellation_slope(&p, 1e-4, 1e-2, 20)?;
        lo = lo.min(s.defect_slope);
        hi = hi.max(s.defect_slope);
    }
    Ok(((0.95..=1.05).contains(&lo) && (0.95..=1.05).contains(&hi), format!("slopes in [{lo:.4}, {hi:.4}] over 9 profiles")))
}

fn curvature() -> Outcome {
    let (mut d2, mut lap) = (0.0f64, 0.0f64);
    let mut signs = true;
    for (n, alpha) in RADIAL_CASES {
        let p = radial_profile(&exponents_from_alpha(alpha, n)?, 1.0, 2.0, 1e-10)?;
        let c = curvature_check(&p)?;
        d2 = d2.max(c.second_derivative_gap);
        lap = lap.max(c.laplacian_rel_gap);
        signs &= c.sign_consistent;
    }
    Ok((d2 <= 1e-4 && lap <= 1e-3, format!("max |v'' - expected| {d2:.1e}, max Laplacian relative gap {lap:.1e}, signs consistent {signs}")))
}

fn figure1() -> Outcome {
    let (a4, a5) = (alpha_threshold(4), alpha_threshold(5));
    let f0 = feasible_dimensions(0.0, 12);
    let f1 = feasible_dimensions(1.0, 12);
    let ok = (a4 - 0.82842712474).abs() <= 1e-10 && (a5 - 0.46410161513).abs() <= 1e-10 && f0 == vec![3, 4, 5] && f1.is_empty();
    Ok((ok, format!("alpha*(4) = {a4:.11}, alpha*(5) = {a5:.11}, feasible at 0: {f0:?}, at 1: {f1:?}")))
}

fn alpha_limit() -> Outcome {
    let alphas = [0.5, 0.25, 0.125, 0.0625];
    let phi = |t: f64, z: f64| {
        let r2 = t * t + z * z;
        (1.0 - r2 / (1.8 * 1.8)).max(0.0).powi(3) * (1.0 + 0.3 * z)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [3, 4] {
        let t = limit_alpha_zero(LimitFamily::Radial { n, r0: 1.0, zc: 0.0, r_max: 2.0 }, &alphas, &phi)?;
        ok &= t.monotone;
        let gaps: Vec<String> = t.rows.iter().map(|r| format!("{:.3}", r.gap)).collect();
        parts.push(format!("n={n} gaps {}", gaps.join(" > ")));
    }
    Ok((ok, parts.join("; ")))
}

fn cone_sweep() -> Outcome {
    let (n, alpha) = (3, 0.25);
    let e = exponents_from_alpha(alpha, n)?;
    let w = theta_window(n, alpha)?;
    if !w.feasible {
        return Ok((false, format!("(n, alpha) = ({n}, {alpha}) is not feasible")));
    }
    let scan = cone_scan(&e, 1e-3, 1.5, 96, 1e-10)?;
    let cones: Vec<_> = scan.non_flat().collect();
    if cones.is_empty() {
        return Ok((true, format!("vacuous: {}", scan.verdict())));
    }
    let grid = build_axisym_grid(2.5, -2.5, 2.5, 1.0 / 128.0, n)?;
    let thetas = theta_samples(&w, 5);
    let mut ok = true;
    let mut parts = Vec::new();
    for c in cones {
        let ShotResult::Profile(p) = cone_shoot(&e, c.h0, 1e-13)? else {
            return Ok((false, format!("cone at h0 = {} has no free boundary on re-shooting", c.h0)));
        };
        let v = p.to_field(&grid, 0.0)?;
        let rows = probe_sweep(&v, &e, &thetas, 0.05, 1.0, 0.0)?;
        let hits = rows.iter().filter(|r| r.violated).count();
        ok &= hits > 0;
        parts.push(format!("cone h0 {:.6} theta0 {:.5}: {hits}/{} probes violate", c.h0, c.theta0, rows.len()));
    }
    Ok((ok, format!("window ({:.3}, {:.3}); {}", w.lower, w.upper, parts.join("; "))))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("exponent identities", exponent_identities),
        ("one-dimensional profile", one_d_profiles),
        ("matrix expansion truncation", truncation_orders),
        ("inner-variation expansion", expansion),
        ("criticality", criticality),
        ("energy correspondence", correspondence),
        ("one-dimensional stability", one_d_stability),
        ("cancellation exponent", cancellation),
        ("free-boundary curvature", curvature),
        ("feasible dimensions", figure1),
        ("small-alpha limit", alpha_limit),
        ("cone probe sweep", cone_sweep),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {:>2} {} {name} ({secs:.2} s): {detail}", k + 1, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
