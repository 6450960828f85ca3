//! One function per subcommand; each returns the files to emit.

use std::fmt::Write;

use apfb_core::cone::{cone_scan, cone_shoot, ConeProfile, ConeScan, ShotResult};
use apfb_core::eigen::EigenOptions;
use apfb_core::energy::{energy_ap, energy_mod, EnergyReport, GeneralEnergySpec};
use apfb_core::exponents::Exponents;
use apfb_core::field::{fmt17, ScalarField};
use apfb_core::grid::{AxisymGrid, Grid1d};
use apfb_core::profiles::{one_d_field, one_d_profile, radial_profile, u_from_v, v_from_u, RadialProfile};
use apfb_core::stability::{
    alpha_threshold, cancellation_slope, curvature_check, feasible_dimensions, figure1_csv, figure1_table, limit_alpha_zero, probe_csv, probe_sweep, quad_form,
    rayleigh_min, split_potential_terms, theta_samples, theta_window, LimitFamily,
};
use apfb_core::variation::{truncation_study, verify_expansion, verify_expansion_analytic, PolynomialField, VariationSpec};
use apfb_core::vector_field::SupportBox;
use serde::Serialize;
use serde_json::json;

use crate::config::{EnergyKind, FieldKind, RunConfig};
use crate::output::Artifact;
use crate::CliError;

/// Start of the one-dimensional range checked for residuals.
const PROFILE_T_MIN: f64 = 1e-3;
/// Gauss-Legendre order per cell for the analytic expansion check.
const ANALYTIC_ORDER: usize = 6;
/// Grid cells kept free between the spectrum region and the grid edge.
const REGION_MARGIN_CELLS: f64 = 4.0;

pub fn dispatch(command: &str, cfg: &RunConfig, seed: u64) -> Result<Vec<Artifact>, CliError> {
    match command {
        "profile-1d" => profile_1d(cfg),
        "profile-radial" => profile_radial(cfg),
        "cone-search" => cone_search(cfg),
        "energy" => energy(cfg),
        "verify-expansion" => verify(cfg),
        "lemma-a-tests" => lemma_a(cfg, seed),
        "quadform" => quadform(cfg),
        "spectrum" => spectrum(cfg, seed),
        "axisym-check" => axisym_check(cfg),
        "theta-window" => window(cfg),
        "figure1" => figure1(cfg),
        "curvature-check" => curvature(cfg),
        "alpha-limit" => alpha_limit(cfg),
        other => Err(CliError::Usage(format!("unknown subcommand {other:?}"))),
    }
}

fn csv_rows<const N: usize>(header: &str, rows: impl IntoIterator<Item = [f64; N]>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| fmt17(*x)).collect();
        writeln!(s, "{}", cells.join(",")).unwrap();
    }
    s
}

fn profile_1d(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let grid = Grid1d::new(0.0, cfg.length, cfg.grid.h)?;
    let p = one_d_profile(&e, &grid)?;
    let t_min = PROFILE_T_MIN.min(0.5 * cfg.length);
    let csv = csv_rows("t,u,du,ddu", (0..p.t.len()).map(|k| [p.t[k], p.u[k], p.du[k], p.ddu[k]]));
    let report = json!({
        "exponents": e,
        "length": cfg.length,
        "h": cfg.grid.h,
        "points": p.t.len(),
        "t_min": t_min,
        "ode_residual": p.ode_residual(t_min),
        "equipartition_error": p.equipartition_error(t_min),
    });
    Ok(vec![Artifact::text("profile_1d.csv", csv), Artifact::json("profile_1d.json", &report)])
}

fn radial(cfg: &RunConfig, e: &Exponents) -> Result<RadialProfile, CliError> {
    Ok(radial_profile(e, cfg.r0, cfg.r_max, cfg.tol)?)
}

fn profile_radial(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let p = radial(cfg, &e)?;
    let samples = p.samples(cfg.samples);
    let residual = samples
        .iter()
        .filter(|s| s[0] >= p.r0 + p.s_launch)
        .map(|s| p.ode_residual(s[0]))
        .fold(0.0f64, f64::max);
    let report = json!({
        "exponents": e,
        "r0": p.r0,
        "r_max": p.r_max,
        "tol": p.tol,
        "s_launch": p.s_launch,
        "series_coefficient": p.a,
        "max_ode_residual": residual,
    });
    Ok(vec![Artifact::text("profile_radial.csv", csv_rows("r,v,dv,ddv", samples)), Artifact::json("profile_radial.json", &report)])
}

fn scan(cfg: &RunConfig, e: &Exponents) -> Result<ConeScan, CliError> {
    Ok(cone_scan(e, cfg.scan.h0_min, cfg.scan.h0_max, cfg.scan.samples, cfg.tol)?)
}

fn shoot(e: &Exponents, h0: f64, tol: f64) -> Result<ConeProfile, CliError> {
    match cone_shoot(e, h0, (1e-3 * tol).clamp(1e-13, 1e-10))? {
        ShotResult::Profile(p) => Ok(*p),
        ShotResult::NoFreeBoundary { .. } => Err(CliError::Solver(format!("cone at h0 = {h0} lost its free boundary on re-shooting"))),
    }
}

fn cone_search(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let s = scan(cfg, &e)?;
    let mut out = Vec::new();
    for (k, c) in s.non_flat().enumerate() {
        let p = shoot(&e, c.h0, cfg.tol)?;
        out.push(Artifact::text(&format!("cone_{k}.csv"), csv_rows("theta,h,dh", p.samples(cfg.samples))));
    }
    let report = json!({ "verdict": s.verdict(), "scan": s });
    out.insert(0, Artifact::json("cone_search.json", &report));
    Ok(out)
}

/// `(u, v)` for the configured field kind, or the scan outcome when no
/// non-flat cone exists.
struct Fields {
    u: ScalarField,
    v: ScalarField,
}

fn fields(cfg: &RunConfig, e: &Exponents, grid: &AxisymGrid) -> Result<Result<Fields, String>, CliError> {
    match cfg.field {
        FieldKind::OneD => {
            let u = one_d_field(e, grid, cfg.z0)?;
            let v = v_from_u(&u, e)?;
            Ok(Ok(Fields { u, v }))
        }
        FieldKind::Radial => {
            let p = radial(cfg, e)?;
            let v = p.to_field(grid, cfg.zc)?;
            let u = u_from_v(&v, e)?;
            Ok(Ok(Fields { u, v }))
        }
        FieldKind::Cone => {
            let s = scan(cfg, e)?;
            let Some(c) = s.non_flat().next() else {
                return Ok(Err(s.verdict()));
            };
            let v = shoot(e, c.h0, cfg.tol)?.to_field(grid, cfg.zc)?;
            let u = u_from_v(&v, e)?;
            Ok(Ok(Fields { u, v }))
        }
        FieldKind::Polynomial => Err(CliError::Validation("the polynomial field is only available to verify-expansion".into())),
    }
}

fn require(f: Result<Fields, String>) -> Result<Fields, CliError> {
    f.map_err(|verdict| CliError::Solver(format!("no field to evaluate: {verdict}")))
}

#[derive(Serialize)]
struct EnergyOut {
    exponents: Exponents,
    alt_phillips: EnergyReport,
    modified: EnergyReport,
    correspondence_factor: f64,
    /// `|E_ap - factor * E_mod| / E_ap`.
    relative_gap: f64,
}

fn energy(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let grid = cfg.axisym_grid()?;
    let f = require(fields(cfg, &e, &grid)?)?;
    let ap = energy_ap(&f.u, &e)?;
    let md = energy_mod(&f.v, &e)?;
    let c = e.correspondence_factor();
    let out = EnergyOut { exponents: e, alt_phillips: ap, modified: md, correspondence_factor: c, relative_gap: (ap.total - c * md.total).abs() / ap.total.abs() };
    Ok(vec![Artifact::json("energy.json", &out)])
}

fn energy_spec(cfg: &RunConfig, e: &Exponents) -> GeneralEnergySpec {
    match cfg.energy {
        EnergyKind::Modified => GeneralEnergySpec::modified(e),
        EnergyKind::AltPhillips => GeneralEnergySpec::alt_phillips(e),
    }
}

fn verify(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let spec = VariationSpec { phi: cfg.phi.vector(cfg.zc), ladder: cfg.ladder.clone() };
    let energy = energy_spec(cfg, &e);
    let report = if cfg.field == FieldKind::Polynomial {
        let u = PolynomialField { c: cfg.poly };
        verify_expansion_analytic(&u, &spec, &energy, cfg.n, cfg.grid.h, ANALYTIC_ORDER, cfg.fit_degree)?
    } else {
        let grid = cfg.axisym_grid()?;
        let f = require(fields(cfg, &e, &grid)?)?;
        let field = match cfg.energy {
            EnergyKind::Modified => f.v,
            EnergyKind::AltPhillips => f.u,
        };
        verify_expansion(&field, &spec, &energy, cfg.fit_degree)?
    };
    let csv = csv_rows("eps,energy", report.ladder.iter().zip(&report.energies).map(|(a, b)| [*a, *b]));
    Ok(vec![Artifact::json("expansion.json", &report), Artifact::text("expansion.csv", csv)])
}

fn lemma_a(cfg: &RunConfig, seed: u64) -> Result<Vec<Artifact>, CliError> {
    let rows = truncation_study(seed, &[2, 3, 4, 5], cfg.trials)?;
    let mut csv = String::from("size,kind,slope,slope_min,slope_max,exact,max_error\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{},{},{},{}", r.size, r.kind, fmt17(r.slope), fmt17(r.slope_min), fmt17(r.slope_max), r.exact, fmt17(r.max_error)).unwrap();
    }
    Ok(vec![Artifact::json("lemma_a.json", &json!({ "seed": seed, "rows": rows })), Artifact::text("lemma_a.csv", csv)])
}

fn test_function(cfg: &RunConfig, grid: &AxisymGrid) -> Result<ScalarField, CliError> {
    let phi = cfg.phi;
    let zc = cfg.zc;
    let (values, grads): (Vec<f64>, Vec<[f64; 2]>) = (0..grid.len())
        .map(|k| {
            let (t, z) = grid.coords(k);
            phi.scalar(zc, t, z)
        })
        .unzip();
    let mut f = ScalarField::from_parts(grid.clone(), values, vec![true; grid.len()])?;
    f.gradient = Some(grads);
    Ok(f)
}

fn quadform(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let grid = cfg.axisym_grid()?;
    let f = require(fields(cfg, &e, &grid)?)?;
    let phi = test_function(cfg, &grid)?;
    let q = quad_form(&f.v, &e, &phi)?;
    let split = split_potential_terms(&f.v, &e, &phi)?;
    Ok(vec![Artifact::json("quadform.json", &json!({ "exponents": e, "h": grid.h, "form": q, "split_potential": split }))])
}

fn default_region(cfg: &RunConfig) -> SupportBox {
    let g = cfg.grid;
    let m = REGION_MARGIN_CELLS * g.h;
    SupportBox { t0: 0.0, t1: g.tau_max - m, z0: g.z_min + m, z1: g.z_max - m }
}

fn spectrum(cfg: &RunConfig, seed: u64) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let grid = cfg.axisym_grid()?;
    let f = require(fields(cfg, &e, &grid)?)?;
    let region = cfg.region.unwrap_or_else(|| default_region(cfg));
    let opts = EigenOptions { tol: cfg.eigen_tol, seed, ..EigenOptions::default() };
    let r = rayleigh_min(&f.v, &e, region, &opts)?;
    let csv = csv_rows("tau,z,value", (0..grid.len()).map(|k| {
        let (t, z) = grid.coords(k);
        [t, z, r.vector[k]]
    }));
    let report = json!({
        "exponents": e,
        "h": grid.h,
        "region": region,
        "lambda_min": r.lambda_min,
        "unknowns": r.unknowns,
        "iterations": r.iterations,
        "residual": r.residual,
        "initial_shift": r.initial_shift,
    });
    Ok(vec![Artifact::json("spectrum.json", &report), Artifact::text("eigenvector.csv", csv)])
}

fn axisym_check(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let w = theta_window(cfg.n, e.alpha)?;
    let grid = cfg.axisym_grid()?;
    let f = match fields(cfg, &e, &grid)? {
        Ok(f) => f,
        Err(verdict) => {
            let report = json!({ "window": w, "field": cfg.field, "outcome": verdict, "probes": 0, "violated": false, "vacuous": true });
            return Ok(vec![Artifact::json("axisym.json", &report)]);
        }
    };
    let thetas = cfg.probes.thetas.clone().unwrap_or_else(|| theta_samples(&w, cfg.probes.count));
    let rows = probe_sweep(&f.v, &e, &thetas, cfg.probes.eps, cfg.probes.radius, cfg.zc)?;
    let violated = rows.iter().filter(|r| r.violated).count();
    let outcome = if rows.is_empty() {
        "no probes: the theta window is empty".to_string()
    } else {
        format!("{violated} of {} probes violate the axisymmetric inequality", rows.len())
    };
    let report = json!({
        "window": w,
        "field": cfg.field,
        "h": grid.h,
        "outcome": outcome,
        "probes": rows.len(),
        "violated": violated > 0,
        "vacuous": false,
        "rows": rows,
    });
    Ok(vec![Artifact::json("axisym.json", &report), Artifact::text("probes.csv", probe_csv(&rows))])
}

fn window(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let w = theta_window(cfg.n, e.alpha)?;
    Ok(vec![Artifact::json("theta_window.json", &w)])
}

/// Largest dimension listed in the feasibility summary.
const FIGURE_N_MAX: usize = 12;

fn figure1(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let rows = figure1_table(cfg.points);
    let report = json!({
        "alpha_star": (3..=FIGURE_N_MAX).map(|n| json!({ "n": n, "alpha": alpha_threshold(n) })).collect::<Vec<_>>(),
        "feasible_at_alpha_0": feasible_dimensions(0.0, FIGURE_N_MAX),
        "feasible_at_alpha_1": feasible_dimensions(1.0, FIGURE_N_MAX),
        "points": rows.len(),
    });
    Ok(vec![Artifact::text("figure1.csv", figure1_csv(&rows)), Artifact::json("figure1.json", &report)])
}

/// Distance range of the cancellation fit, relative to `r0`.
const SLOPE_RANGE: (f64, f64) = (1e-4, 1e-2);
const SLOPE_POINTS: usize = 20;

fn curvature(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let e = cfg.exponents()?;
    let p = radial(cfg, &e)?;
    let c = curvature_check(&p)?;
    let s = cancellation_slope(&p, SLOPE_RANGE.0 * p.r0, SLOPE_RANGE.1 * p.r0, SLOPE_POINTS)?;
    Ok(vec![Artifact::json("curvature.json", &json!({ "curvature": c, "cancellation": s }))])
}

fn alpha_limit(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let family = LimitFamily::Radial { n: cfg.n, r0: cfg.r0, zc: cfg.zc, r_max: cfg.r_max };
    let phi = cfg.limit_phi;
    let zc = cfg.zc;
    let table = limit_alpha_zero(family, &cfg.alphas, &|t, z| phi.scalar(zc, t, z).0)?;
    let csv = csv_rows("alpha,potential,target,gap", table.rows.iter().map(|r| [r.alpha, r.potential, r.target, r.gap]));
    Ok(vec![Artifact::json("alpha_limit.json", &table), Artifact::text("alpha_limit.csv", csv)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_field_needs_the_expansion_command() {
        let cfg = RunConfig { field: FieldKind::Polynomial, gamma: Some(0.5), ..RunConfig::default() };
        let e = cfg.exponents().unwrap();
        let grid = cfg.axisym_grid().unwrap();
        assert!(matches!(fields(&cfg, &e, &grid), Err(CliError::Validation(_))));
    }
}
