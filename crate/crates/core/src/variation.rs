//! Inner variations `u_ε = u ∘ T_ε^(-1)`, `T_ε = id + εΦ`: numerical
//! pullback, polynomial fits of `E(u_ε)` in ε, comparison with the closed-form
//! coefficients, and the determinant / norm expansions of `I + εA`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{general_energy_on, variation_integrals, variation_integrands, AxisymJacobian, GeneralEnergySpec};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::profiles::RadialProfile;
use crate::grid::axial_weight;
use crate::quadrature::{gauss_legendre, loglog_slope};
use crate::vector_field::{SupportBox, VectorField};

/// Default ladder: eight values from 1e-2 halving.
pub fn default_ladder() -> Vec<f64> {
    (0..8).map(|k| 1e-2 / f64::powi(2.0, k)).collect()
}

#[derive(Clone)]
pub struct VariationSpec {
    pub phi: Arc<dyn VectorField>,
    pub ladder: Vec<f64>,
}

impl VariationSpec {
    pub fn new(phi: impl VectorField + 'static, ladder: Vec<f64>) -> Self {
        VariationSpec { phi: Arc::new(phi), ladder }
    }

    pub fn support(&self) -> SupportBox {
        self.phi.support()
    }

    /// Largest Frobenius norm of `DΦ` over an `m x m` sample of the support box.
    pub fn jacobian_bound(&self, m: usize) -> f64 {
        let sb = self.support();
        let mut best: f64 = 0.0;
        for a in 0..=m {
            for b in 0..=m {
                let t = sb.t0 + (sb.t1 - sb.t0) * a as f64 / m as f64;
                let z = sb.z0 + (sb.z1 - sb.z0) * b as f64 / m as f64;
                let j = self.phi.jacobian(t, z);
                let fro = (j[0][0].powi(2) + j[0][1].powi(2) + j[1][0].powi(2) + j[1][1].powi(2)).sqrt();
                best = best.max(fro);
            }
        }
        best
    }

    /// Every ladder value must satisfy `ε ‖DΦ‖ < 1/2`.
    pub fn check_ladder(&self) -> Result<()> {
        let bound = self.jacobian_bound(64);
        match self.ladder.iter().find(|&&e| !(e > 0.0) || e * bound >= 0.5) {
            Some(e) => Err(Error::Invertibility(format!("ε = {e} with ‖DΦ‖ ≈ {bound} violates ε‖DΦ‖ < 1/2"))),
            None => Ok(()),
        }
    }
}

/// `T_ε^(-1)(y)` by the fixed-point iteration `x ← y - εΦ(x)`.
pub fn inverse_map(phi: &dyn VectorField, eps: f64, y: [f64; 2]) -> Result<[f64; 2]> {
    let mut x = y;
    for _ in 0..200 {
        let p = phi.value(x[0], x[1]);
        let nx = [y[0] - eps * p[0], y[1] - eps * p[1]];
        let dx = (nx[0] - x[0]).abs().max((nx[1] - x[1]).abs());
        x = nx;
        if dx <= 4.0 * f64::EPSILON * (1.0 + y[0].abs().max(y[1].abs())) {
            return Ok(x);
        }
    }
    Err(Error::Invertibility(format!("fixed-point iteration for T^-1 did not contract at y = {y:?}, ε = {eps}")))
}

/// Second-order series `y - εΦ(y) + ε² DΦ(y)Φ(y)` for the inverse map.
pub fn inverse_map_series(phi: &dyn VectorField, eps: f64, y: [f64; 2]) -> [f64; 2] {
    let p = phi.value(y[0], y[1]);
    let j = phi.jacobian(y[0], y[1]);
    let jp = [j[0][0] * p[0] + j[0][1] * p[1], j[1][0] * p[0] + j[1][1] * p[1]];
    [y[0] - eps * p[0] + eps * eps * jp[0], y[1] - eps * p[1] + eps * eps * jp[1]]
}

fn lagrange4(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// Interpolation stencil at one point of the grid rectangle.
///
/// Tensor cubic Lagrange on a 4x4 stencil, clamped to the stencil's range.
/// Stencils touching nodes outside the mask fall back to bilinear
/// interpolation with the field extended by zero. Nodes at `tau < 0` are
/// mirrored across the axis, with a sign flip for quantities odd in `tau`.
struct Stencil {
    nodes: Vec<(usize, f64, bool)>,
    cubic: bool,
}

impl Stencil {
    fn new(field: &ScalarField, t: f64, z: f64) -> Stencil {
        let g = &field.grid;
        let h = g.h;
        let snap = |x: f64| if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
        let ft = snap(t.abs() / h).clamp(0.0, (g.nt - 1) as f64);
        let fz = snap((z - g.z_min) / h).clamp(0.0, (g.nz - 1) as f64);
        let i = (ft.floor() as usize).min(g.nt - 2);
        let j = (fz.floor() as usize).min(g.nz - 2);
        let (st, sz) = (ft - i as f64, fz - j as f64);
        let node = |a: i64, b: i64| -> Option<(usize, bool)> {
            let m = a.unsigned_abs() as usize;
            (m < g.nt && b >= 0 && (b as usize) < g.nz).then(|| (g.idx(m, b as usize), a < 0))
        };
        let (wt, wz) = (lagrange4(st), lagrange4(sz));
        let mut nodes = Vec::with_capacity(16);
        for (da, wa) in wt.iter().enumerate() {
            for (db, wb) in wz.iter().enumerate() {
                match node(i as i64 + da as i64 - 1, j as i64 + db as i64 - 1) {
                    Some((k, mirrored)) if field.mask[k] => nodes.push((k, wa * wb, mirrored)),
                    _ => {
                        let bil = [(i, j, (1.0 - st) * (1.0 - sz)), (i, j + 1, (1.0 - st) * sz), (i + 1, j, st * (1.0 - sz)), (i + 1, j + 1, st * sz)];
                        let nodes = bil.iter().map(|&(a, b, w)| (g.idx(a, b), w, false)).collect();
                        return Stencil { nodes, cubic: false };
                    }
                }
            }
        }
        Stencil { nodes, cubic: true }
    }

    /// Apply to nodal data; `odd` marks data odd in `tau`. Data off the mask
    /// is treated as zero.
    fn apply(&self, mask: &[bool], data: impl Fn(usize) -> f64, odd: bool, t: f64) -> f64 {
        let sign = |mirrored: bool| if odd && mirrored { -1.0 } else { 1.0 };
        let mut acc = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(k, w, mirrored) in &self.nodes {
            let v = if mask[k] { sign(mirrored) * data(k) } else { 0.0 };
            acc += w * v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let v = if self.cubic { acc.clamp(lo, hi) } else { acc };
        if odd && t < 0.0 {
            -v
        } else {
            v
        }
    }
}

/// Value of `field` at an arbitrary point of the grid rectangle; the axis is
/// an even symmetry line.
pub fn interpolate(field: &ScalarField, t: f64, z: f64) -> f64 {
    Stencil::new(field, t, z).apply(&field.mask, |k| field.values[k], false, t)
}

/// `u_ε(y) = u(T_ε^(-1)(y))` at every node; unchanged outside the support box.
///
/// The result carries a gradient: inside the box the interpolated gradient
/// of `u` (attached or differenced) mapped by `(I + ε DΦ(x))^(-T)`, outside
/// it the gradient of `u` itself.
pub fn pullback(field: &ScalarField, phi: &dyn VectorField, eps: f64) -> Result<ScalarField> {
    let g = &field.grid;
    let sb = phi.support();
    sb.check_inside(g)?;
    let grad = field.gradient_or_fd();
    let mut values = field.values.clone();
    let mut pulled_grad = grad.clone();
    let (ri, rj) = g.node_range(sb.t0, sb.t1, sb.z0, sb.z1);
    for i in ri {
        for j in rj.clone() {
            let y = [g.tau(i), g.z(j)];
            let x = inverse_map(phi, eps, y)?;
            let st = Stencil::new(field, x[0], x[1]);
            let k = g.idx(i, j);
            values[k] = st.apply(&field.mask, |m| field.values[m], false, x[0]).max(0.0);
            if values[k] == 0.0 {
                pulled_grad[k] = [0.0; 2];
                continue;
            }
            let q = [st.apply(&field.mask, |m| grad[m][0], true, x[0]), st.apply(&field.mask, |m| grad[m][1], false, x[0])];
            let d = phi.jacobian(x[0], x[1]);
            let m = [[1.0 + eps * d[0][0], eps * d[0][1]], [eps * d[1][0], 1.0 + eps * d[1][1]]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            pulled_grad[k] = [(m[1][1] * q[0] - m[1][0] * q[1]) / det, (-m[0][1] * q[0] + m[0][0] * q[1]) / det];
        }
    }
    let mut out = ScalarField::from_values(g.clone(), values)?;
    for (k, q) in pulled_grad.iter_mut().enumerate() {
        if !out.mask[k] {
            *q = [0.0; 2];
        }
    }
    out.gradient = Some(pulled_grad);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    /// All fitted coefficients, lowest power first.
    pub coefficients: Vec<f64>,
    /// RMS of the data minus `E0 + E1 ε + E2 ε²`.
    pub residual: f64,
    /// Ratio of extreme singular values of the column-scaled design matrix.
    pub condition: f64,
}

/// Least-squares fit of `energies` by a polynomial of `degree` (>= 2) in ε.
pub fn fit_expansion(eps: &[f64], energies: &[f64], degree: usize) -> Result<ExpansionFit> {
    if eps.len() != energies.len() {
        return Err(Error::Fit("ladder and energy lengths differ".into()));
    }
    if eps.len() < 5 || eps.len() < degree + 1 || degree < 2 {
        return Err(Error::Fit(format!("{} ladder points cannot determine a degree-{degree} fit (need >= 5)", eps.len())));
    }
    let scale = eps.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if !(scale > 0.0) {
        return Err(Error::Fit("ladder must contain a nonzero ε".into()));
    }
    let m = eps.len();
    let a = DMatrix::from_fn(m, degree + 1, |r, c| (eps[r] / scale).powi(c as i32));
    let b = DVector::from_column_slice(energies);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::Fit(format!("rank-deficient design (singular values {smin:e} / {smax:e})")));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    let coefficients: Vec<f64> = (0..=degree).map(|c| x[c] / scale.powi(c as i32)).collect();
    let (e0, e1, e2) = (coefficients[0], coefficients[1], coefficients[2]);
    let residual = (eps
        .iter()
        .zip(energies)
        .map(|(&e, &y)| (y - (e0 + e1 * e + e2 * e * e)).powi(2))
        .sum::<f64>()
        / m as f64)
        .sqrt();
    Ok(ExpansionFit { e0, e1, e2, coefficients, residual, condition: smax / smin })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Coefficients {
    pub E0: f64,
    pub E1: f64,
    pub E2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PairE12 {
    pub E1: f64,
    pub E2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub fitted: Coefficients,
    pub closed_form: PairE12,
    /// `|fitted - closed|` over `max(|closed|, scale)`, where the E1 scale is
    /// the absolute first-variation integral and the E2 scale is zero.
    pub rel_gap: PairE12,
    pub ladder: Vec<f64>,
    pub energies: Vec<f64>,
    pub h: f64,
    pub fit_degree: usize,
    pub fit_residual: f64,
    pub first_scale: f64,
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / b.abs().max(scale)
    }
}

/// Fit the energies of sampled pullbacks over the ladder and compare with
/// the closed-form integrals on the same grid. Energies are summed over the
/// support box only, where they differ from `E(u)`.
pub fn verify_expansion(field: &ScalarField, spec: &VariationSpec, energy: &GeneralEnergySpec, degree: usize) -> Result<ExpansionReport> {
    spec.support().check_inside(&field.grid)?;
    spec.check_ladder()?;
    let sb = spec.support();
    let energies: Vec<f64> = spec
        .ladder
        .par_iter()
        .map(|&eps| {
            let pulled = pullback(field, spec.phi.as_ref(), eps)?;
            Ok(general_energy_on(&pulled, energy, Some(sb))?.total)
        })
        .collect::<Result<Vec<f64>>>()?;
        let closed = variation_integrals(field, energy, spec.phi.as_ref())?;
    let e0 = general_energy_on(field, energy, Some(sb))?.total;
    finish_report(&spec.ladder, energies, e0, closed.first, closed.second, closed.first_scale, field.grid.h, degree)
}

#[allow(clippy::too_many_arguments)]
fn finish_report(ladder: &[f64], energies: Vec<f64>, e0: f64, c1: f64, c2: f64, scale: f64, h: f64, degree: usize) -> Result<ExpansionReport> {
    // Fit the increments E(ε) - E(0) so that E0 does not swamp the rounding budget.
    let increments: Vec<f64> = energies.iter().map(|e| e - e0).collect();
    let fit = fit_expansion(ladder, &increments, degree)?;
    Ok(ExpansionReport {
        fitted: Coefficients { E0: e0 + fit.e0, E1: fit.e1, E2: fit.e2 },
        closed_form: PairE12 { E1: c1, E2: c2 },
        rel_gap: PairE12 { E1: rel(fit.e1, c1, scale), E2: rel(fit.e2, c2, 0.0) },
        ladder: ladder.to_vec(),
        energies,
        h,
        fit_degree: degree,
        fit_residual: fit.residual,
        first_scale: scale,
    })
}

/// A field known in closed form together with its gradient.
pub trait AnalyticField: Send + Sync {
    fn value(&self, t: f64, z: f64) -> f64;
    fn gradient(&self, t: f64, z: f64) -> [f64; 2];
}

/// Tensor Gauss-Legendre points and weights over the support box with
/// cells of size about `h`, including the `tau^(n-2)` factor.
fn box_quadrature(sb: SupportBox, h: f64, order: usize, n: usize) -> Vec<(f64, f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let ct = ((sb.t1 - sb.t0) / h).round().max(1.0) as usize;
    let cz = ((sb.z1 - sb.z0) / h).round().max(1.0) as usize;
    let (ht, hz) = ((sb.t1 - sb.t0) / ct as f64, (sb.z1 - sb.z0) / cz as f64);
    let mut pts = Vec::with_capacity(ct * cz * order * order);
    for a in 0..ct {
        for b in 0..cz {
            let (tc, zc) = (sb.t0 + (a as f64 + 0.5) * ht, sb.z0 + (b as f64 + 0.5) * hz);
            for (xi, wi) in x.iter().zip(&w) {
                for (xj, wj) in x.iter().zip(&w) {
                    let t = tc + 0.5 * ht * xi;
                    let z = zc + 0.5 * hz * xj;
                    pts.push((t, z, 0.25 * ht * hz * wi * wj * axial_weight(t, n)));
                }
            }
        }
    }
    pts
}

/// Energy of `u ∘ T_ε^(-1)` over the support box computed in the deformed
/// coordinates: `∇u_ε(y) = (I + ε DΦ(x))^(-T) ∇u(x)` with `x = T_ε^(-1)(y)`.
fn analytic_pullback_energy(u: &dyn AnalyticField, phi: &dyn VectorField, energy: &GeneralEnergySpec, eps: f64, pts: &[(f64, f64, f64)]) -> Result<f64> {
    let mut acc = 0.0;
    for &(t, z, w) in pts {
        let x = inverse_map(phi, eps, [t, z])?;
        let val = u.value(x[0], x[1]);
        if !(val > 0.0) {
            continue;
        }
        let q = u.gradient(x[0], x[1]);
        let j = phi.jacobian(x[0], x[1]);
        let m = [[1.0 + eps * j[0][0], eps * j[0][1]], [eps * j[1][0], 1.0 + eps * j[1][1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        // Solve M^T p = q.
        let p = [(m[1][1] * q[0] - m[1][0] * q[1]) / det, (-m[0][1] * q[0] + m[0][0] * q[1]) / det];
        let (gw, fw) = ((energy.weight)(val), (energy.potential)(val));
        acc += w * gw * (p[0] * p[0] + p[1] * p[1] + fw);
    }
    Ok(acc)
}

/// Fully analytic variant of [`verify_expansion`]: Gauss-Legendre quadrature
/// of order `order` on cells of size `h` in the support box, exact
/// gradients and exact Jacobian of the deformation.
pub fn verify_expansion_analytic(
    u: &dyn AnalyticField,
    spec: &VariationSpec,
    energy: &GeneralEnergySpec,
    n: usize,
    h: f64,
    order: usize,
    degree: usize,
) -> Result<ExpansionReport> {
    spec.check_ladder()?;
    let sb = spec.support();
    let pts = box_quadrature(sb, h, order, n);
    let phi = spec.phi.as_ref();
    let energies: Vec<f64> = spec
        .ladder
        .par_iter()
        .map(|&eps| analytic_pullback_energy(u, phi, energy, eps, &pts))
        .collect::<Result<Vec<f64>>>()?;
    let e0 = analytic_pullback_energy(u, phi, energy, 0.0, &pts)?;
    let (mut c1, mut c2, mut scale) = (0.0, 0.0, 0.0);
    for &(t, z, w) in &pts {
        let val = u.value(t, z);
        if !(val > 0.0) {
            continue;
        }
        let jac = AxisymJacobian::of(phi, t, z, n);
        let (e1, e2, s1) = variation_integrands((energy.weight)(val), (energy.potential)(val), u.gradient(t, z), &jac);
        c1 += w * e1;
        c2 += w * e2;
        scale += w * s1;
    }
    finish_report(&spec.ladder, energies, e0, c1, c2, scale, h, degree)
}

/// Energy of `u ∘ T_ε^(-1)` written on the undeformed domain:
/// `∫_{u>0} G(u)(|(I + ε DΦ)^(-T) ∇u|² + F(u)) det(I + ε DΦ)(1 + ε Φ^tau/tau)^(n-2)`.
/// No interpolation and no moving boundary; `pts` carry the `tau^(n-2)` weight.
fn reference_energy(u: &dyn AnalyticField, phi: &dyn VectorField, energy: &GeneralEnergySpec, eps: f64, n: usize, pts: &[(f64, f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for &(t, z, w) in pts {
        let val = u.value(t, z);
        if !(val > 0.0) {
            continue;
        }
        let q = u.gradient(t, z);
        let j = phi.jacobian(t, z);
        let m = [[1.0 + eps * j[0][0], eps * j[0][1]], [eps * j[1][0], 1.0 + eps * j[1][1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let p = [(m[1][1] * q[0] - m[1][0] * q[1]) / det, (-m[0][1] * q[0] + m[0][0] * q[1]) / det];
        let hoop = (1.0 + eps * phi.hoop(t, z)).powi(n as i32 - 2);
        let (gw, fw) = ((energy.weight)(val), (energy.potential)(val));
        acc += w * gw * (p[0] * p[0] + p[1] * p[1] + fw) * det * hoop;
    }
    acc
}

/// Expansion check on the undeformed domain with a caller-supplied point rule
/// `(tau, z, weight)` covering the positivity set inside the support of Φ.
/// The fields `h` of the report is 0.
pub fn verify_expansion_reference(u: &dyn AnalyticField, spec: &VariationSpec, energy: &GeneralEnergySpec, n: usize, pts: &[(f64, f64, f64)], degree: usize) -> Result<ExpansionReport> {
    spec.check_ladder()?;
    let phi = spec.phi.as_ref();
    let energies: Vec<f64> = spec.ladder.par_iter().map(|&eps| reference_energy(u, phi, energy, eps, n, pts)).collect();
    let e0 = reference_energy(u, phi, energy, 0.0, n, pts);
    let (mut c1, mut c2, mut scale) = (0.0, 0.0, 0.0);
    for &(t, z, w) in pts {
        let val = u.value(t, z);
        if !(val > 0.0) {
            continue;
        }
        let jac = AxisymJacobian::of(phi, t, z, n);
        let (e1, e2, s1) = variation_integrands((energy.weight)(val), (energy.potential)(val), u.gradient(t, z), &jac);
        c1 += w * e1;
        c2 += w * e2;
        scale += w * s1;
    }
    finish_report(&spec.ladder, energies, e0, c1, c2, scale, 0.0, degree)
}

/// A radial profile centred at `(0, zc)` on the axial plane.
#[derive(Debug, Clone, Copy)]
pub struct CenteredRadial<'a> {
    pub profile: &'a RadialProfile,
    pub zc: f64,
}

impl AnalyticField for CenteredRadial<'_> {
    fn value(&self, t: f64, z: f64) -> f64 {
        self.profile.eval(t.hypot(z - self.zc))[0]
    }
    fn gradient(&self, t: f64, z: f64) -> [f64; 2] {
        let r = t.hypot(z - self.zc);
        let dv = self.profile.eval(r)[1];
        if r == 0.0 {
            [0.0; 2]
        } else {
            [dv * t / r, dv * (z - self.zc) / r]
        }
    }
}

/// `c0 + c1 z + c2 z² + c3 tau² + c4 tau² z`, smooth across the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialField {
    pub c: [f64; 5],
}

impl AnalyticField for PolynomialField {
    fn value(&self, t: f64, z: f64) -> f64 {
        let c = &self.c;
        c[0] + c[1] * z + c[2] * z * z + c[3] * t * t + c[4] * t * t * z
    }
    fn gradient(&self, t: f64, z: f64) -> [f64; 2] {
        let c = &self.c;
        [2.0 * t * (c[3] + c[4] * z), c[1] + 2.0 * c[2] * z + c[4] * t * t]
    }
}

/// Polar point rule on the shell `r0 <= r <= r_out` about `(0, zc)`, with
/// `tau^(n-2) r` included. The radial variable is `w = (r - r0)^(1+alpha)`,
/// which absorbs a `(r - r0)^alpha` factor of the integrand.
#[allow(clippy::too_many_arguments)]
pub fn shell_quadrature(zc: f64, r0: f64, r_out: f64, alpha: f64, n: usize, radial_panels: usize, angular_panels: usize, order: usize) -> Vec<(f64, f64, f64)> {
    let (x, wts) = gauss_legendre(order);
    let p = 1.0 + alpha;
    let w_max = (r_out - r0).powf(p);
    let (hw, ht) = (w_max / radial_panels as f64, std::f64::consts::PI / angular_panels as f64);
    let mut pts = Vec::with_capacity(radial_panels * angular_panels * order * order);
    for a in 0..radial_panels {
        for (xi, wi) in x.iter().zip(&wts) {
            let w = (a as f64 + 0.5 + 0.5 * xi) * hw;
            let s = w.powf(1.0 / p);
            // ds = s^(-alpha) dw / (1 + alpha)
            let ds = if s > 0.0 { s.powf(-alpha) / p } else { 0.0 };
            let r = r0 + s;
            for b in 0..angular_panels {
                for (xj, wj) in x.iter().zip(&wts) {
                    let th = (b as f64 + 0.5 + 0.5 * xj) * ht;
                    let (t, z) = (r * th.sin(), zc + r * th.cos());
                    pts.push((t, z, 0.25 * hw * ht * wi * wj * ds * r * axial_weight(t, n)));
                }
            }
        }
    }
    pts
}

/// Exact value, truncated expansion and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub exact: f64,
    pub truncated: f64,
    pub error: f64,
}

/// `det(I + εA)` against `1 + ε tr A + ε² ((tr A)² - tr(A²))/2`.
pub fn det_expansion(a: &DMatrix<f64>, eps: f64) -> Result<ExpansionCheck> {
    let n = a.nrows();
    if n != a.ncols() || n == 0 || n > 6 {
        return Err(Error::Domain(format!("det_expansion needs a square matrix of size 1..=6, got {}x{}", a.nrows(), a.ncols())));
    }
    let m = DMatrix::identity(n, n) + a * eps;
    let exact = m.determinant();
    let tr = a.trace();
    let tr2 = (a * a).trace();
    let truncated = 1.0 + eps * tr + eps * eps * 0.5 * (tr * tr - tr2);
    Ok(ExpansionCheck { exact, truncated, error: exact - truncated })
}

/// `|M_εᵀ q|²` with `M_ε = I + εA + ε²B` against
/// `|q|² + 2ε q·Aq + ε² (|Aᵀq|² + 2 q·Bq)`.
pub fn normsq_expansion(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DVector<f64>, eps: f64) -> Result<ExpansionCheck> {
    let n = q.len();
    if a.shape() != (n, n) || b.shape() != (n, n) {
        return Err(Error::Domain("normsq_expansion needs square A, B matching q".into()));
    }
    let m = DMatrix::identity(n, n) + a * eps + b * (eps * eps);
    let exact = (m.transpose() * q).norm_squared();
    let truncated = q.norm_squared() + 2.0 * eps * q.dot(&(a * q)) + eps * eps * ((a.transpose() * q).norm_squared() + 2.0 * q.dot(&(b * q)));
    Ok(ExpansionCheck { exact, truncated, error: exact - truncated })
}

/// Truncation behaviour of one expansion over random matrices of one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub size: usize,
    /// `"det"` or `"normsq"`.
    pub kind: String,
    pub trials: usize,
    /// Log-log slope of the root-mean-square error over the trials against ε.
    pub slope: f64,
    /// Range of per-trial slopes; trials whose ε³ coefficient nearly
    /// vanishes show the ε⁴ slope.
    pub slope_min: f64,
    pub slope_max: f64,
    /// Every error is at rounding level, so no slope is meaningful.
    pub exact: bool,
    pub max_error: f64,
}

/// ε values used by [`truncation_study`]: `0.01 * 2^-k`, `k = 0..6`.
pub fn truncation_ladder() -> Vec<f64> {
    (0..6).map(|k| 0.01 / f64::powi(2.0, k)).collect()
}

/// Slopes of the truncation errors of [`det_expansion`] and
/// [`normsq_expansion`] for `trials` random matrices with entries uniform in
/// `[-1, 1]`, seeded by `seed`.
pub fn truncation_study(seed: u64, sizes: &[usize], trials: usize) -> Result<Vec<TruncationRow>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let eps = truncation_ladder();
    let mut rows = Vec::new();
    for &size in sizes {
        let mut slopes = [Vec::new(), Vec::new()];
        let mut max_err = [0.0f64; 2];
        let mut scale = [0.0f64; 2];
        let mut sq = [vec![0.0; eps.len()], vec![0.0; eps.len()]];
        for _ in 0..trials {
            let a = DMatrix::from_fn(size, size, |_, _| rng.gen_range(-1.0..1.0));
            let b = DMatrix::from_fn(size, size, |_, _| rng.gen_range(-1.0..1.0));
            let q = DVector::from_fn(size, |_, _| rng.gen_range(-1.0..1.0));
            let mut errs = [Vec::new(), Vec::new()];
            for &e in &eps {
                let d = det_expansion(&a, e)?;
                let m = normsq_expansion(&a, &b, &q, e)?;
                for (k, c) in [d, m].iter().enumerate() {
                    errs[k].push(c.error.abs());
                    max_err[k] = max_err[k].max(c.error.abs());
                    scale[k] = scale[k].max(c.exact.abs());
                }
            }
            for k in 0..2 {
                for (acc, e) in sq[k].iter_mut().zip(&errs[k]) {
                    *acc += e * e;
                }
                if errs[k].iter().all(|&x| x > 0.0) {
                    slopes[k].push(loglog_slope(&eps, &errs[k]));
                }
            }
        }
        for (k, kind) in ["det", "normsq"].iter().enumerate() {
            let exact = max_err[k] <= 64.0 * f64::EPSILON * scale[k].max(1.0);
            let rms: Vec<f64> = sq[k].iter().map(|s| (s / trials as f64).sqrt()).collect();
            let slope = if exact { f64::NAN } else { loglog_slope(&eps, &rms) };
            let (lo, hi) = if exact || slopes[k].is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (slopes[k].iter().copied().fold(f64::INFINITY, f64::min), slopes[k].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            };
            rows.push(TruncationRow { size, kind: kind.to_string(), trials, slope, slope_min: lo, slope_max: hi, exact, max_error: max_err[k] });
        }
    }
    Ok(rows)
}
