//! Second-variation quadratic forms, their discrete spectrum, the
//! axisymmetric cone criterion and the curvature identities at a smooth free
//! boundary.
//!
//! The potential of the modified form is
//! `W_v = (alpha/2) v^(alpha-2) (1 - |∇v|²)`, evaluated with the defect
//! `1 - |∇v|²` kept as one factor. Within `2h` of the free boundary the
//! quotient `(1 - |∇v|²)/v` is replaced by a local linear fit.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cell_quadrature::{cell_integrals, Singularity};
use crate::distance::distance_to_fb;
use crate::eigen::{min_eigenpair, EigenOptions, GeneralizedProblem};
use crate::energy::FB_BAND;
use crate::error::{Error, Result};
use crate::exponents::{exponents_from_alpha, Exponents};
use crate::field::{fmt17, ScalarField};
use crate::grid::{axial_weight, AxisymGrid};
use crate::profiles::{radial_profile, RadialProfile};
use crate::quadrature::{composite_gl, loglog_slope};
use crate::vector_field::{smoothstep, FnField, SupportBox};

/// Nodes closer than this many cells to the free boundary get an extrapolated potential.
pub const CUTOFF_CELLS: f64 = 2.0;
/// Donor nodes for the extrapolation lie in `[CUTOFF_CELLS, DONOR_CELLS)` cells.
pub const DONOR_CELLS: f64 = 5.0;

/// Replace `q` at masked nodes with `d < 2h` by a linear fit of `q` against
/// `v` over nearby donors with `2h <= d < 5h`.
fn extrapolate_near_fb(v: &ScalarField, q: &mut [f64]) {
    let g = &v.grid;
    let Some(dist) = distance_to_fb(v).field() else {
        return;
    };
    let (cut, donor) = (CUTOFF_CELLS * g.h, DONOR_CELLS * g.h);
    let reach = DONOR_CELLS.ceil() as i64 + 1;
    let original = q.to_vec();
    for k in 0..g.len() {
        if !v.mask[k] || dist.values[k] >= cut {
            continue;
        }
        let (i, j) = g.ij(k);
        let (mut s0, mut s1, mut s2, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for di in -reach..=reach {
            for dj in -reach..=reach {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii < 0 || jj < 0 || ii >= g.nt as i64 || jj >= g.nz as i64 {
                    continue;
                }
                let m = g.idx(ii as usize, jj as usize);
                let d = dist.values[m];
                if v.mask[m] && d >= cut && d < donor {
                    let x = v.values[m];
                    s0 += 1.0;
                    s1 += x;
                    s2 += x * x;
                    sy += original[m];
                    sxy += x * original[m];
                }
            }
        }
        if s0 == 0.0 {
            continue;
        }
        let det = s0 * s2 - s1 * s1;
        q[k] = if s0 >= 2.0 && det > 1e-12 * s2 * s0 {
            let slope = (s0 * sxy - s1 * sy) / det;
            let icpt = (sy - slope * s1) / s0;
            icpt + slope * v.values[k]
        } else {
            sy / s0
        };
    }
}

fn check_alpha(e: &Exponents) -> Result<()> {
    if !(e.alpha >= 0.0) || !e.alpha.is_finite() {
        return Err(Error::Domain(format!("alpha = {} must be nonnegative", e.alpha)));
    }
    Ok(())
}

/// `(1 - |∇v|²)/v` on the mask, extrapolated near the free boundary.
pub fn defect_quotient(v: &ScalarField) -> Vec<f64> {
    let grad = v.gradient_or_fd();
    let mut q: Vec<f64> = (0..v.grid.len())
        .map(|k| {
            if v.mask[k] {
                let g2 = grad[k][0] * grad[k][0] + grad[k][1] * grad[k][1];
                (1.0 - g2) / v.values[k]
            } else {
                0.0
            }
        })
        .collect();
    extrapolate_near_fb(v, &mut q);
    q
}

/// `W_v = (alpha/2) v^(alpha-2) (1 - |∇v|²)` on the mask, zero elsewhere.
pub fn potential_v(v: &ScalarField, e: &Exponents) -> Result<Vec<f64>> {
    check_alpha(e)?;
    if e.alpha == 0.0 {
        return Ok(vec![0.0; v.grid.len()]);
    }
    let q = defect_quotient(v);
    Ok((0..v.grid.len()).map(|k| if v.mask[k] { 0.5 * e.alpha * v.values[k].powf(e.alpha - 1.0) * q[k] } else { 0.0 }).collect())
}

/// Potential of the original form,
/// `W_u = ((2-gamma)/2)(gamma/2) u^(gamma-2) (u^gamma - |∇u|²)`, with
/// `(u^gamma - |∇u|²)/(u^gamma ℓ)`, `ℓ = u^(1/beta)`, extrapolated near the
/// free boundary.
pub fn potential_u(u: &ScalarField, e: &Exponents) -> Result<Vec<f64>> {
    check_alpha(e)?;
    if e.gamma == 0.0 {
        return Ok(vec![0.0; u.grid.len()]);
    }
    let grad = u.gradient_or_fd();
    let len = u.grid.len();
    let mut r = vec![0.0; len];
    let mut level_vals = vec![0.0; len];
    for k in 0..len {
        if u.mask[k] {
            let w = u.values[k];
            let ug = w.powf(e.gamma);
            let l = w.powf(1.0 / e.beta);
            level_vals[k] = l;
            r[k] = (ug - grad[k][0] * grad[k][0] - grad[k][1] * grad[k][1]) / (ug * l);
        }
    }
    let level = ScalarField { grid: u.grid.clone(), values: level_vals, mask: u.mask.clone(), gradient: None };
    extrapolate_near_fb(&level, &mut r);
    let c = 0.5 * (2.0 - e.gamma) * 0.5 * e.gamma;
    Ok((0..len)
        .map(|k| {
            if u.mask[k] {
                let w = u.values[k];
                c * w.powf(2.0 * e.gamma - 2.0) * level.values[k] * r[k]
            } else {
                0.0
            }
        })
        .collect())
}

/// Gradient of a test function: attached, else centred differences on the full grid.
fn test_gradient(phi: &ScalarField) -> Vec<[f64; 2]> {
    match &phi.gradient {
        Some(g) => g.clone(),
        None => ScalarField { mask: vec![true; phi.grid.len()], gradient: None, ..phi.clone() }.fd_gradient(),
    }
}

fn check_same_grid(a: &AxisymGrid, b: &AxisymGrid) -> Result<()> {
    if a != b {
        return Err(Error::Domain("fields live on different grids".into()));
    }
    Ok(())
}

/// Test functions must vanish on the two outermost node layers.
fn check_test_support(phi: &ScalarField) -> Result<()> {
    let g = &phi.grid;
    for k in 0..g.len() {
        let (i, j) = g.ij(k);
        let edge = i + 2 >= g.nt || j < 2 || j + 2 >= g.nz;
        if edge && phi.values[k] != 0.0 {
            let (t, z) = g.coords(k);
            return Err(Error::Support(format!("test function is nonzero at ({t}, {z}), within two cells of the grid edge")));
        }
    }
    Ok(())
}

fn count_cut_cells(v: &ScalarField) -> usize {
    let g = &v.grid;
    let mut count = 0;
    for i in 0..g.nt - 1 {
        for j in 0..g.nz - 1 {
            let m = [g.idx(i, j), g.idx(i + 1, j), g.idx(i, j + 1), g.idx(i + 1, j + 1)].map(|k| v.mask[k]);
            if m.iter().any(|&x| x) && !m.iter().all(|&x| x) {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadFormReport {
    pub gradient_term: f64,
    pub potential_term: f64,
    pub q: f64,
    pub fb_cut_cells: usize,
    /// Distance below which the potential is extrapolated.
    pub cutoff: f64,
}

/// `Q(phi) = ∫ v^alpha |∇phi|² - ∫ W_v phi²` over the positivity set.
pub fn quad_form(v: &ScalarField, e: &Exponents, phi: &ScalarField) -> Result<QuadFormReport> {
    check_alpha(e)?;
    check_same_grid(&v.grid, &phi.grid)?;
    check_test_support(phi)?;
    let len = v.grid.len();
    let gv = v.gradient_or_fd();
    let gp = test_gradient(phi);
    let mut grad_term = vec![0.0; len];
    let mut pot_term = vec![0.0; len];
    let w = potential_v(v, e)?;
    for k in 0..len {
        if v.mask[k] {
            let va = if e.alpha == 0.0 { 1.0 } else { v.values[k].powf(e.alpha) };
            grad_term[k] = va * (gp[k][0] * gp[k][0] + gp[k][1] * gp[k][1]);
            pot_term[k] = w[k] * phi.values[k] * phi.values[k];
        }
    }
    let sg = Singularity { root: 1.0, power: e.alpha, band: FB_BAND };
    let gradient_term = cell_integrals(v, &gv, Some(&sg), None, &[&grad_term])[0];
    let potential_term = if e.alpha == 0.0 {
        0.0
    } else {
        let sp = Singularity { power: e.alpha - 1.0, ..sg };
        cell_integrals(v, &gv, Some(&sp), None, &[&pot_term])[0]
    };
    Ok(QuadFormReport {
        gradient_term,
        potential_term,
        q: gradient_term - potential_term,
        fb_cut_cells: count_cut_cells(v),
        cutoff: CUTOFF_CELLS * v.grid.h,
    })
}

/// Nodal sums of the two pieces `(alpha/2) v^(alpha-2) phi²` and
/// `(alpha/2) v^(alpha-2) |∇v|² phi²` of the potential term, and of their
/// difference. The pieces diverge under refinement when `alpha < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPotential {
    pub first: f64,
    pub second: f64,
    pub combined: f64,
}

pub fn split_potential_terms(v: &ScalarField, e: &Exponents, phi: &ScalarField) -> Result<SplitPotential> {
    check_alpha(e)?;
    check_same_grid(&v.grid, &phi.grid)?;
    let g = &v.grid;
    let grad = v.gradient_or_fd();
    let (mut first, mut second, mut combined) = (0.0, 0.0, 0.0);
    for k in 0..g.len() {
        if !v.mask[k] {
            continue;
        }
        let (i, j) = g.ij(k);
        let c = g.weight(i, j) * 0.5 * e.alpha * v.values[k].powf(e.alpha - 2.0) * phi.values[k] * phi.values[k];
        let g2 = grad[k][0] * grad[k][0] + grad[k][1] * grad[k][1];
        first += c;
        second += c * g2;
        combined += c * ((1.0 - grad[k][0]) * (1.0 + grad[k][0]) - grad[k][1] * grad[k][1]);
    }
    Ok(SplitPotential { first, second, combined })
}

/// Lumped `tau^(n-2)` weight of column `i`, over the half cells on either side.
fn column_weight(g: &AxisymGrid, i: usize) -> f64 {
    let h = g.h;
    let t = g.tau(i);
    let left = if i == 0 { 0.0 } else { 0.5 * axial_weight(t - 0.5 * h, g.n) };
    let right = if i + 1 == g.nt { 0.0 } else { 0.5 * axial_weight(t + 0.5 * h, g.n) };
    left + right
}

/// Finite-difference discretization of `Q` on the masked nodes inside a box:
/// zero Dirichlet data on the box boundary, natural conditions on the free
/// boundary, `v^alpha`-weighted mass.
#[derive(Debug, Clone)]
pub struct DiscreteForm {
    pub problem: GeneralizedProblem,
    /// Grid node of each unknown.
    pub nodes: Vec<usize>,
    /// `max W_v / v^alpha` over the unknowns; minus it bounds the spectrum below.
    pub potential_ceiling: f64,
}

pub fn assemble_discrete_form(v: &ScalarField, e: &Exponents, region: SupportBox) -> Result<DiscreteForm> {
    check_alpha(e)?;
    let g = &v.grid;
    region.check_inside(g)?;
    let slack = 1e-9 * g.h;
    let interior = |t: f64, z: f64| {
        let t_ok = if region.t0 == 0.0 { t < region.t1 - slack } else { t > region.t0 + slack && t < region.t1 - slack };
        t_ok && z > region.z0 + slack && z < region.z1 - slack
    };
    let mut index = vec![usize::MAX; g.len()];
    let mut nodes = Vec::new();
    for k in 0..g.len() {
        let (t, z) = g.coords(k);
        if v.mask[k] && interior(t, z) {
            index[k] = nodes.len();
            nodes.push(k);
        }
    }
    if nodes.is_empty() {
        return Err(Error::Domain("no positive nodes inside the region".into()));
    }
    let w = potential_v(v, e)?;
    let pow = |k: usize| if e.alpha == 0.0 { 1.0 } else { v.values[k].powf(e.alpha) };
    let h2 = g.h * g.h;
    let mut trip = Vec::new();
    let mut mass = vec![0.0; nodes.len()];
    let mut ceiling = f64::NEG_INFINITY;
    let edge = |a: usize, b: usize, wt: f64, trip: &mut Vec<(usize, usize, f64)>| {
        if !v.mask[a] || !v.mask[b] {
            return;
        }
        let c = wt * 0.5 * (pow(a) + pow(b));
        match (index[a], index[b]) {
            (usize::MAX, usize::MAX) => {}
            (ia, usize::MAX) => trip.push((ia, ia, c)),
            (usize::MAX, ib) => trip.push((ib, ib, c)),
            (ia, ib) => {
                trip.push((ia, ia, c));
                trip.push((ib, ib, c));
                trip.push((ia, ib, -c));
                trip.push((ib, ia, -c));
            }
        }
    };
    for i in 0..g.nt {
        let cw = column_weight(g, i);
        for j in 0..g.nz {
            let k = g.idx(i, j);
            if i + 1 < g.nt {
                let tm = g.tau(i) + 0.5 * g.h;
                edge(k, g.idx(i + 1, j), axial_weight(tm, g.n), &mut trip);
            }
            if j + 1 < g.nz {
                edge(k, g.idx(i, j + 1), cw, &mut trip);
            }
            if index[k] != usize::MAX {
                let lumped = h2 * cw;
                mass[index[k]] = pow(k) * lumped;
                trip.push((index[k], index[k], -w[k] * lumped));
                ceiling = ceiling.max(w[k] / pow(k));
            }
        }
    }
    let problem = GeneralizedProblem::from_triplets(nodes.len(), &trip, mass)?;
    Ok(DiscreteForm { problem, nodes, potential_ceiling: ceiling })
}

impl DiscreteForm {
    /// Restrict grid samples to the unknowns.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&k| values[k]).collect()
    }

    /// Discrete Rayleigh quotient of grid samples.
    pub fn quotient(&self, values: &[f64]) -> f64 {
        self.problem.rayleigh_quotient(&self.restrict(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighReport {
    pub lambda_min: f64,
    /// Minimizer sampled on the whole grid, zero off the unknowns.
    pub vector: Vec<f64>,
    pub unknowns: usize,
    pub iterations: usize,
    pub residual: f64,
    pub initial_shift: f64,
}

/// Smallest generalized eigenvalue of the discrete form on `region`.
pub fn rayleigh_min(v: &ScalarField, e: &Exponents, region: SupportBox, opts: &EigenOptions) -> Result<RayleighReport> {
    let form = assemble_discrete_form(v, e, region)?;
    let shift = -form.potential_ceiling.max(0.0) - 1.0;
    let r = min_eigenpair(&form.problem, &EigenOptions { shift: shift.min(opts.shift), ..*opts })?;
    let mut vector = vec![0.0; v.grid.len()];
    for (x, &k) in r.vector.iter().zip(&form.nodes) {
        vector[k] = *x;
    }
    Ok(RayleighReport {
        lambda_min: r.lambda_min,
        vector,
        unknowns: form.nodes.len(),
        iterations: r.iterations,
        residual: r.residual,
        initial_shift: shift.min(opts.shift),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisymReport {
    /// `(n-2) ∫ v^alpha (v_tau/tau)² eta²`.
    pub lhs: f64,
    /// `∫ v^alpha v_tau² |∇eta|²`.
    pub rhs: f64,
    pub violated: bool,
}

/// Relative slack in the comparison `lhs <= rhs`.
pub const AXISYM_TOL: f64 = 1e-9;

/// Both sides of the axisymmetric stability inequality for a test function `eta`.
pub fn axisym_quad_form(v: &ScalarField, e: &Exponents, eta: &ScalarField) -> Result<AxisymReport> {
    check_alpha(e)?;
    check_same_grid(&v.grid, &eta.grid)?;
    check_test_support(eta)?;
    let g = &v.grid;
    let gv = v.gradient_or_fd();
    let ge = test_gradient(eta);
    let len = g.len();
    let (mut lhs_f, mut rhs_f) = (vec![0.0; len], vec![0.0; len]);
    let nm2 = g.n as f64 - 2.0;
    for k in 0..len {
        if !v.mask[k] {
            continue;
        }
        let (t, _) = g.coords(k);
        let va = if e.alpha == 0.0 { 1.0 } else { v.values[k].powf(e.alpha) };
        let vt = gv[k][0];
        let et = eta.values[k];
        // The tau^(n-2) weight removes axis nodes for n >= 3; for n = 2 the factor n-2 does.
        lhs_f[k] = if t > 0.0 { nm2 * va * (vt / t).powi(2) * et * et } else { 0.0 };
        rhs_f[k] = va * vt * vt * (ge[k][0] * ge[k][0] + ge[k][1] * ge[k][1]);
    }
    let sg = Singularity { root: 1.0, power: e.alpha, band: FB_BAND };
    let r = cell_integrals(v, &gv, Some(&sg), None, &[&lhs_f, &rhs_f]);
    let (lhs, rhs) = (r[0], r[1]);
    let violated = lhs > rhs + AXISYM_TOL * (lhs.abs() + rhs.abs());
    Ok(AxisymReport { lhs, rhs, violated })
}

/// Interval of exponents `theta` for which `tau^(-theta/2)` probes can
/// destabilize an axisymmetric cone: `(n + alpha - 2, 2 sqrt(n-2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaWindow {
    pub n: usize,
    pub alpha: f64,
    /// `sqrt(n-2)`.
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub feasible: bool,
    /// Real dimensions `n` with a nonempty window, when `alpha <= 1`.
    pub n_interval: Option<(f64, f64)>,
    pub note: Option<String>,
}

pub fn theta_window(n: usize, alpha: f64) -> Result<ThetaWindow> {
    if n < 3 {
        return Err(Error::Domain(format!("the theta window needs n >= 3, got {n}")));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha = {alpha} must be nonnegative")));
    }
    let nf = n as f64;
    let lower = nf + alpha - 2.0;
    let upper = 2.0 * (nf - 2.0).sqrt();
    let (n_interval, note) = match dimension_interval(alpha) {
        Some(iv) => (Some(iv), None),
        None => (None, Some("no real roots: the window is empty in every dimension".to_string())),
    };
    Ok(ThetaWindow { n, alpha, lambda: (nf - 2.0).sqrt(), lower, upper, feasible: lower < upper, n_interval, note })
}

/// `(2 + (1 - sqrt(1-alpha))², 2 + (1 + sqrt(1-alpha))²)`, or `None` for `alpha > 1`.
pub fn dimension_interval(alpha: f64) -> Option<(f64, f64)> {
    if alpha > 1.0 {
        return None;
    }
    let s = (1.0 - alpha).sqrt();
    Some((2.0 + (1.0 - s).powi(2), 2.0 + (1.0 + s).powi(2)))
}

/// Largest `alpha` with a nonempty window in dimension `n`: `2 sqrt(n-2) - (n-2)`.
pub fn alpha_threshold(n: usize) -> f64 {
    let m = n as f64 - 2.0;
    2.0 * m.sqrt() - m
}

/// Integer dimensions `3..=n_max` with a nonempty window.
pub fn feasible_dimensions(alpha: f64, n_max: usize) -> Vec<usize> {
    (3..=n_max).filter(|&n| theta_window(n, alpha).map(|w| w.feasible).unwrap_or(false)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub alpha: f64,
    pub n_lower: f64,
    pub n_upper: f64,
}

/// Boundary curves of the feasible region in the `(alpha, n)` plane on `points` equispaced `alpha` in `[0, 1]`.
pub fn figure1_table(points: usize) -> Vec<Figure1Row> {
    let points = points.max(2);
    (0..points)
        .map(|k| {
            let alpha = k as f64 / (points - 1) as f64;
            let (n_lower, n_upper) = dimension_interval(alpha).expect("alpha <= 1");
            Figure1Row { alpha, n_lower, n_upper }
        })
        .collect()
}

pub fn figure1_csv(rows: &[Figure1Row]) -> String {
    let mut s = String::from("alpha,n_lower,n_upper\n");
    for r in rows {
        writeln!(s, "{},{},{}", fmt17(r.alpha), fmt17(r.n_lower), fmt17(r.n_upper)).unwrap();
    }
    s
}

/// `eta = p(tau) zeta_R(r)` about the vertex `(0, zc)`, with
/// `p = tau^(-theta/2)` for `tau > eps` and `eps^(-theta/2)` below, and
/// `zeta_R = 1 - smoothstep((r - R)/R)`.
///
/// `|∇eta|² <= (1 + delta) main_part + (1 + 1/delta) cutoff_part` pointwise,
/// with `main_part = |p'|² zeta²` and `cutoff_part = p² |∇zeta|²`.
#[derive(Debug, Clone)]
pub struct ThetaTestFunction {
    pub theta: f64,
    pub eps: f64,
    pub radius: f64,
    pub zc: f64,
    pub delta: f64,
    pub field: ScalarField,
    pub main_part: Vec<f64>,
    pub cutoff_part: Vec<f64>,
}

pub fn build_theta_test(grid: &AxisymGrid, theta: f64, eps: f64, radius: f64, zc: f64, delta: f64) -> Result<ThetaTestFunction> {
    if !(eps > 0.0 && eps < 1.0 && radius >= 1.0) {
        return Err(Error::Domain(format!("theta test function needs 0 < eps < 1 <= R, got eps = {eps}, R = {radius}")));
    }
    if !(theta >= 0.0) || !(delta > 0.0) {
        return Err(Error::Domain("theta must be nonnegative and delta positive".into()));
    }
    let reach = 2.0 * radius + 2.0 * grid.h;
    if reach > grid.tau_max || zc - reach < grid.z_min || zc + reach > grid.z_max {
        return Err(Error::Support(format!("the ball of radius 2R = {} about (0, {zc}) leaves the grid", 2.0 * radius)));
    }
    let len = grid.len();
    let (mut main_part, mut cutoff_part) = (vec![0.0; len], vec![0.0; len]);
    let mut values = vec![0.0; len];
    let mut gradient = vec![[0.0; 2]; len];
    for k in 0..len {
        let (t, z) = grid.coords(k);
        let zz = z - zc;
        let r = t.hypot(zz);
        let (s, ds) = smoothstep((r - radius) / radius);
        let zeta = 1.0 - s;
        let dzeta = if r > 0.0 { [-ds / radius * t / r, -ds / radius * zz / r] } else { [0.0; 2] };
        let (p, dp) = if t > eps { (t.powf(-0.5 * theta), -0.5 * theta * t.powf(-0.5 * theta - 1.0)) } else { (eps.powf(-0.5 * theta), 0.0) };
        values[k] = p * zeta;
        gradient[k] = [dp * zeta + p * dzeta[0], p * dzeta[1]];
        main_part[k] = dp * dp * zeta * zeta;
        cutoff_part[k] = p * p * (dzeta[0] * dzeta[0] + dzeta[1] * dzeta[1]);
    }
    let field = ScalarField { grid: grid.clone(), values, mask: vec![true; len], gradient: Some(gradient) };
    Ok(ThetaTestFunction { theta, eps, radius, zc, delta, field, main_part, cutoff_part })
}

impl ThetaTestFunction {
    /// Largest violation of the split bound `|∇eta|² <= (1+delta) main + (1+1/delta) cutoff` over the nodes.
    pub fn split_bound_excess(&self) -> f64 {
        let g = self.field.gradient.as_ref().expect("theta test functions carry gradients");
        (0..g.len())
            .map(|k| {
                let lhs = g[k][0] * g[k][0] + g[k][1] * g[k][1];
                let rhs = (1.0 + self.delta) * self.main_part[k] + (1.0 + 1.0 / self.delta) * self.cutoff_part[k];
                lhs - rhs
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub theta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub violated: bool,
}

/// `count` equispaced interior points of the window.
pub fn theta_samples(w: &ThetaWindow, count: usize) -> Vec<f64> {
    if !w.feasible {
        return Vec::new();
    }
    (1..=count).map(|k| w.lower + (w.upper - w.lower) * k as f64 / (count + 1) as f64).collect()
}

/// Evaluate the axisymmetric inequality on `tau^(-theta/2)` probes.
pub fn probe_sweep(v: &ScalarField, e: &Exponents, thetas: &[f64], eps: f64, radius: f64, zc: f64) -> Result<Vec<ProbeRow>> {
    thetas
        .iter()
        .map(|&theta| {
            let eta = build_theta_test(&v.grid, theta, eps, radius, zc, 1.0)?;
            let r = axisym_quad_form(v, e, &eta.field)?;
            Ok(ProbeRow { theta, lhs: r.lhs, rhs: r.rhs, violated: r.violated })
        })
        .collect()
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("theta,lhs,rhs,violated\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", fmt17(r.theta), fmt17(r.lhs), fmt17(r.rhs), r.violated).unwrap();
    }
    s
}

/// Value at zero of the interpolating polynomial through `(x_k, y_k)` (Neville).
pub fn neville_at_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let m = x.len();
    for level in 1..m {
        for i in 0..m - level {
            p[i] = (x[i + level] * p[i] - x[i] * p[i + 1]) / (x[i + level] - x[i]);
        }
    }
    p[0]
}

fn relative(x: f64, expected: f64) -> f64 {
    let d = (x - expected).abs();
    if expected == 0.0 {
        d
    } else {
        d / expected.abs()
    }
}

fn monotone(y: &[f64]) -> bool {
    let up = y.windows(2).all(|w| w[1] >= w[0]);
    let down = y.windows(2).all(|w| w[1] <= w[0]);
    up || down
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub n: usize,
    pub alpha: f64,
    pub r0: f64,
    /// Distances from the free boundary used for extrapolation.
    pub offsets: Vec<f64>,
    pub second_derivative_samples: Vec<f64>,
    /// `v''` at the free boundary, extrapolated.
    pub second_derivative: f64,
    /// `-(n-1)/((1+alpha) r0)`.
    pub second_derivative_expected: f64,
    pub second_derivative_gap: f64,
    /// `Δv` at the free boundary, extrapolated.
    pub laplacian: f64,
    /// `-alpha v''`.
    pub laplacian_expected: f64,
    pub laplacian_gap: f64,
    /// Gaps relative to the expected values (absolute when that value is 0).
    pub second_derivative_rel_gap: f64,
    pub laplacian_rel_gap: f64,
    /// `div(∇v/|∇v|)` at the free boundary.
    pub mean_curvature: f64,
    /// `-(1+alpha) v''`.
    pub mean_curvature_from_profile: f64,
    pub sign_consistent: bool,
}

/// Extrapolate `v''` and `Δv` to the free boundary of a radial profile
/// from offsets `0.02 r0 2^-k`, `k = 0..5`.
pub fn curvature_check(p: &RadialProfile) -> Result<CurvatureReport> {
    let (n, alpha, r0) = (p.exponents.n, p.exponents.alpha, p.r0);
    let nm1 = n as f64 - 1.0;
    let offsets: Vec<f64> = (0..6).map(|k| 0.02 * r0 * 0.5f64.powi(k)).collect();
    if r0 + offsets[0] > p.r_max {
        return Err(Error::Domain("profile too short for the curvature extrapolation".into()));
    }
    let mut d2 = Vec::new();
    let mut lap = Vec::new();
    let mut curv = Vec::new();
    for &s in &offsets {
        let r = r0 + s;
        let [_, dv, ddv] = p.eval(r);
        d2.push(ddv);
        lap.push(ddv + nm1 * dv / r);
        // div(∇v/|∇v|) for v radial and increasing.
        curv.push(nm1 / r);
    }
    if !monotone(&d2) || !monotone(&lap) {
        return Err(Error::Extrapolation("samples near the free boundary are not monotone".into()));
    }
    let second_derivative = neville_at_zero(&offsets, &d2);
    let laplacian = neville_at_zero(&offsets, &lap);
    let mean_curvature = neville_at_zero(&offsets, &curv);
    let expected = -nm1 / ((1.0 + alpha) * r0);
    let laplacian_expected = -alpha * second_derivative;
    let mean_curvature_from_profile = -(1.0 + alpha) * second_derivative;
    let sign_consistent = (mean_curvature > 0.0) == (second_derivative < 0.0) && (mean_curvature_from_profile > 0.0) == (mean_curvature > 0.0);
    Ok(CurvatureReport {
        n,
        alpha,
        r0,
        offsets,
        second_derivative_samples: d2,
        second_derivative,
        second_derivative_expected: expected,
        second_derivative_gap: (second_derivative - expected).abs(),
        second_derivative_rel_gap: relative(second_derivative, expected),
        laplacian_rel_gap: relative(laplacian, laplacian_expected),
        laplacian,
        laplacian_expected,
        laplacian_gap: (laplacian - laplacian_expected).abs(),
        mean_curvature,
        mean_curvature_from_profile,
        sign_consistent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub distances: Vec<f64>,
    pub defects: Vec<f64>,
    /// Log-log slope of `1 - v'²` against the distance; expected 1.
    pub defect_slope: f64,
    /// Log-log slope of `W_v`; expected `alpha - 1`.
    pub potential_slope: f64,
}

/// Slopes of the gradient defect and of the potential near the free boundary
/// of a radial profile, over `count` log-spaced distances in `[d_min, d_max]`.
pub fn cancellation_slope(p: &RadialProfile, d_min: f64, d_max: f64, count: usize) -> Result<SlopeReport> {
    if !(d_min > 0.0 && d_max > d_min) || count < 2 || p.r0 + d_max > p.r_max {
        return Err(Error::Domain(format!("bad distance range [{d_min}, {d_max}]")));
    }
    let distances: Vec<f64> = (0..count).map(|k| d_min * (d_max / d_min).powf(k as f64 / (count - 1) as f64)).collect();
    let defects: Vec<f64> = distances.iter().map(|&d| p.gradient_defect(d)).collect();
    let alpha = p.exponents.alpha;
    let pots: Vec<f64> = distances
        .iter()
        .zip(&defects)
        .map(|(&d, &q)| {
            let v = p.eval(p.r0 + d)[0];
            0.5 * alpha * v.powf(alpha - 2.0) * q
        })
        .collect();
    Ok(SlopeReport {
        defect_slope: loglog_slope(&distances, &defects),
        potential_slope: if alpha > 0.0 { loglog_slope(&distances, &pots) } else { f64::NAN },
        distances,
        defects,
    })
}

/// `Φ = ∇v φ / |∇v|²` for a radial profile about `(0, zc)`, the deformation
/// whose second inner variation reduces to `Q(φ)`. Inside the ball `1/v'` is
/// continued linearly from the free boundary.
pub fn normal_variation_field(p: &RadialProfile, zc: f64, phi: Arc<dyn Fn(f64, f64) -> (f64, [f64; 2]) + Send + Sync>, support: SupportBox) -> FnField {
    let prof = Arc::new(p.clone());
    let r0 = p.r0;
    let s_launch = p.s_launch;
    let [_, dv0, ddv0] = p.eval(r0 + s_launch);
    let (g0, dg0) = (1.0 / dv0, -ddv0 / (dv0 * dv0));
    let radial = move |r: f64| -> (f64, f64) {
        if r <= r0 + s_launch {
            (g0 + dg0 * (r - r0), dg0)
        } else {
            let [_, dv, ddv] = prof.eval(r);
            (1.0 / dv, -ddv / (dv * dv))
        }
    };
    let radial = Arc::new(radial);
    let (rv, fv) = (radial.clone(), phi.clone());
    let value = move |t: f64, z: f64| -> [f64; 2] {
        let zz = z - zc;
        let r = t.hypot(zz);
        if r == 0.0 {
            return [0.0; 2];
        }
        let (g, _) = rv(r);
        let (f, _) = fv(t, z);
        [g * f * t / r, g * f * zz / r]
    };
    let jacobian = move |t: f64, z: f64| -> [[f64; 2]; 2] {
        let zz = z - zc;
        let r = t.hypot(zz);
        if r == 0.0 {
            return [[0.0; 2]; 2];
        }
        let (g, dg) = radial(r);
        let (f, df) = phi(t, z);
        let e = [t / r, zz / r];
        let mut j = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let delta = if a == b { 1.0 } else { 0.0 };
                j[a][b] = f * dg * e[a] * e[b] + g * e[a] * df[b] + g * f / r * (delta - e[a] * e[b]);
            }
        }
        j
    };
    FnField { support, value: Arc::new(value), jacobian: Arc::new(jacobian) }
}

/// Solution families for the small-`alpha` limit of the potential term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimitFamily {
    /// Radial profile vanishing on the sphere of radius `r0` about `(0, zc)`.
    Radial { n: usize, r0: f64, zc: f64, r_max: f64 },
    /// One-dimensional solutions with a flat free boundary.
    Flat { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaLimitRow {
    pub alpha: f64,
    pub potential: f64,
    /// `∫_FB H phi² / (1 + alpha)` with `H` the mean curvature.
    pub target: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaLimitTable {
    pub rows: Vec<AlphaLimitRow>,
    /// Gaps are non-increasing along the table.
    pub monotone: bool,
}

/// Below this distance (relative to `r0`) the defect quotient is interpolated from its limit.
const SERIES_CUT: f64 = 1e-4;

/// `∫ W_v phi²` for radial profiles as `alpha -> 0`, against the
/// free-boundary integral of the mean curvature. `phi` must vanish for `r >= r_max`.
pub fn limit_alpha_zero(family: LimitFamily, alphas: &[f64], phi: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<AlphaLimitTable> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(Error::Domain(format!("alpha = {a} must lie in (0, 1]")));
    }
    let rows = match family {
        LimitFamily::Flat { n } => {
            let _ = exponents_from_alpha(alphas.first().copied().unwrap_or(0.5), n)?;
            // The one-dimensional solution has |∇v| = 1 exactly, so W_v and H both vanish.
            alphas.iter().map(|&alpha| AlphaLimitRow { alpha, potential: 0.0, target: 0.0, gap: 0.0 }).collect()
        }
        LimitFamily::Radial { n, r0, zc, r_max } => {
            let shell = |r: f64| {
                composite_gl(
                    |th| {
                        let (t, z) = (r * th.sin(), zc + r * th.cos());
                        let f = phi(t, z);
                        f * f * axial_weight(t, n) * r
                    },
                    0.0,
                    std::f64::consts::PI,
                    16,
                    8,
                )
            };
            let nm1 = n as f64 - 1.0;
            let mut rows = Vec::new();
            for &alpha in alphas {
                let e = exponents_from_alpha(alpha, n)?;
                let prof = radial_profile(&e, r0, r_max, 1e-11)?;
                let span = r_max - r0;
                let sq = SERIES_CUT * r0;
                let q0 = -4.0 * prof.a;
                let [vq, _, _] = prof.eval(r0 + sq);
                let qq = prof.gradient_defect(sq) / vq;
                let ratio_q = vq / sq;
                // W ds = (alpha/2) Q(s) (v/s)^(alpha-1) dw with w = s^alpha / alpha.
                let integrand = |w: f64| {
                    let s = (alpha * w).powf(1.0 / alpha).min(span);
                    let (q, ratio) = if s < sq {
                        let x = s / sq;
                        (q0 + (qq - q0) * x, 1.0 + (ratio_q - 1.0) * x)
                    } else {
                        let v = prof.eval(r0 + s)[0];
                        (prof.gradient_defect(s) / v, v / s)
                    };
                    0.5 * alpha * q * ratio.powf(alpha - 1.0) * shell(r0 + s)
                };
                let potential = composite_gl(integrand, 0.0, span.powf(alpha) / alpha, 64, 8);
                let target = nm1 / (r0 * (1.0 + alpha)) * shell(r0);
                rows.push(AlphaLimitRow { alpha, potential, target, gap: (potential - target).abs() });
            }
            rows
        }
    };
    let monotone = rows.windows(2).all(|w| w[1].gap <= w[0].gap);
    Ok(AlphaLimitTable { rows, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::derive_exponents;
    use crate::grid::build_axisym_grid;
    use crate::profiles::{one_d_field, v_from_u};

    #[test]
    fn thresholds_and_windows() {
        assert!((alpha_threshold(3) - 1.0).abs() < 1e-15);
        assert!((alpha_threshold(4) - (2.0 * 2f64.sqrt() - 2.0)).abs() < 1e-15);
        assert_eq!(feasible_dimensions(0.0, 10), vec![3, 4, 5]);
        assert!(feasible_dimensions(1.0, 10).is_empty());
        let w = theta_window(3, 2.0).unwrap();
        assert!(!w.feasible && w.n_interval.is_none() && w.note.is_some());
        assert!(theta_window(2, 0.5).is_err());
        let rows = figure1_table(401);
        assert_eq!(rows.len(), 401);
        assert_eq!(rows[400].n_lower, 3.0);
        assert_eq!(rows[400].n_upper, 3.0);
    }

    #[test]
    fn neville_reproduces_polynomials() {
        let x = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|s| 2.0 - 3.0 * s + 0.5 * s * s * s).collect();
        assert!((neville_at_zero(&x, &y) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn flat_solution_has_no_potential_and_positive_form() {
        let e = derive_exponents(0.5, 3).unwrap();
        let grid = build_axisym_grid(1.0, -0.5, 1.0, 1.0 / 32.0, 3).unwrap();
        let u = one_d_field(&e, &grid, 0.0123).unwrap();
        let v = v_from_u(&u, &e).unwrap();
        let w = potential_v(&v, &e).unwrap();
        assert!(w.iter().all(|x| x.abs() < 1e-10));
        let wu = potential_u(&u, &e).unwrap();
        assert!(wu.iter().all(|x| x.abs() < 1e-8), "{:?}", wu.iter().fold(0.0f64, |a, b| a.max(b.abs())));
        let region = SupportBox { t0: 0.0, t1: 0.8, z0: -0.3, z1: 0.8 };
        let r = rayleigh_min(&v, &e, region, &EigenOptions::default()).unwrap();
        assert!(r.lambda_min > 0.0, "{}", r.lambda_min);
    }

    #[test]
    fn theta_split_bound_holds() {
        let grid = build_axisym_grid(2.5, -2.5, 2.5, 1.0 / 16.0, 3).unwrap();
        let t = build_theta_test(&grid, 1.5, 0.1, 1.0, 0.0, 0.5).unwrap();
        assert!(t.split_bound_excess() <= 1e-12);
    }
}
