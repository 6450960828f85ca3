//! Exact and integrated solution profiles, and the change of variables
//! `v = beta u^(1/beta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::field::ScalarField;
use crate::grid::{AxisymGrid, Grid1d};
use crate::ode::{integrate, Control, DenseKind, OdeOptions, Trajectory};

/// The one-dimensional solution `u(t) = (t/beta)^beta` sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDProfile {
    pub exponents: Exponents,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub ddu: Vec<f64>,
}

pub fn one_d_value(e: &Exponents, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (t / e.beta).powf(e.beta)
    }
}

pub fn one_d_derivative(e: &Exponents, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (t / e.beta).powf(e.beta - 1.0)
    }
}

pub fn one_d_profile(e: &Exponents, grid: &Grid1d) -> Result<OneDProfile> {
    if !(e.gamma > 0.0 && e.gamma < 2.0) {
        return Err(Error::Domain(format!("one-dimensional profile needs gamma in (0, 2), got {}", e.gamma)));
    }
    let t = grid.points();
    let u = t.iter().map(|&x| one_d_value(e, x)).collect();
    let du = t.iter().map(|&x| one_d_derivative(e, x)).collect();
    let ddu = t
        .iter()
        .map(|&x| if x > 0.0 { (e.beta - 1.0) / e.beta * (x / e.beta).powf(e.beta - 2.0) } else { f64::NAN })
        .collect();
    Ok(OneDProfile { exponents: *e, t, u, du, ddu })
}

impl OneDProfile {
    /// `max |u'' - (gamma/2) u^(gamma-1)| / u^(gamma-1)` over nodes with `t >= t_min`.
    pub fn ode_residual(&self, t_min: f64) -> f64 {
        let g = self.exponents.gamma;
        self.t
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= t_min && t > 0.0)
            .map(|(k, _)| {
                let scale = self.u[k].powf(g - 1.0);
                (self.ddu[k] - 0.5 * g * scale).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    /// `max | |u'|^2 - u^gamma | / u^gamma` over nodes with `t >= t_min`.
    pub fn equipartition_error(&self, t_min: f64) -> f64 {
        let g = self.exponents.gamma;
        self.t
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= t_min && t > 0.0)
            .map(|(k, _)| {
                let p = self.u[k].powf(g);
                (self.du[k] * self.du[k] - p).abs() / p
            })
            .fold(0.0, f64::max)
    }
}

/// The one-dimensional solution embedded in the axial plane as a function of `z - z0`.
pub fn one_d_field(e: &Exponents, grid: &AxisymGrid, z0: f64) -> Result<ScalarField> {
    ScalarField::from_fn_with_gradient(grid, |_, z| (one_d_value(e, z - z0), [0.0, one_d_derivative(e, z - z0)]))
}

/// Radial solution `v(r)` of `v'' + (n-1) v'/r = (alpha/2)(1 - v'^2)/v`
/// outside the ball of radius `r0`, with `v(r0) = 0`, `v'(r0) = 1`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub exponents: Exponents,
    pub r0: f64,
    pub r_max: f64,
    pub tol: f64,
    /// Launch offset `s0`: the series is used on `[r0, r0 + s0]`.
    pub s_launch: f64,
    /// Series coefficient in `v = s + a s^2`.
    pub a: f64,
    pub trajectory: Trajectory,
}

/// Right-hand side `v''` of the radial equation, with `1 - v'^2` kept as one factor.
#[inline]
pub fn radial_rhs(n: usize, alpha: f64, r: f64, v: f64, dv: f64) -> f64 {
    let lap_part = if n > 1 { (n - 1) as f64 * dv / r } else { 0.0 };
    let pot = if alpha == 0.0 { 0.0 } else { 0.5 * alpha * ((1.0 - dv) * (1.0 + dv)) / v };
    pot - lap_part
}

pub fn radial_profile(e: &Exponents, r0: f64, r_max: f64, tol: f64) -> Result<RadialProfile> {
    if !(r0 > 0.0) || !(r_max > r0) {
        return Err(Error::Domain(format!("radial profile needs 0 < r0 < r_max, got r0 = {r0}, r_max = {r_max}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let (n, alpha) = (e.n, e.alpha);
    let a = -((n - 1) as f64) / (2.0 * (1.0 + alpha) * r0);
    let s0 = 1e-6 * r0;
    let y0 = [s0 + a * s0 * s0, 1.0 + 2.0 * a * s0];
    let opts = OdeOptions { h_init: 1e-3 * s0, defect_tol: Some(tol), ..OdeOptions::with_tol(tol) };
    let mut degenerate = None;
    let trajectory = integrate(
        |r, y| [y[1], radial_rhs(n, alpha, r, y[0], y[1])],
        r0 + s0,
        y0,
        r_max,
        &opts,
        DenseKind::SecondOrder,
        |step| {
            if step.y1[1] <= 0.0 || step.y1[0] <= 0.0 {
                degenerate = Some(step.t1);
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    if let Some(r) = degenerate {
        return Err(Error::Degenerate(format!("v' reaches 0 at r = {r} before r_max = {r_max}")));
    }
    Ok(RadialProfile { exponents: *e, r0, r_max, tol, s_launch: s0, a, trajectory })
}

impl RadialProfile {
    /// `(v, v', v'')` at radius `r`; `v''` from the equation's right-hand side.
    /// Zero inside the ball, NaN beyond `r_max`.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        let s = r - self.r0;
        if s <= 0.0 {
            return [0.0, 0.0, 0.0];
        }
        if r > self.r_max * (1.0 + 1e-14) {
            return [f64::NAN; 3];
        }
        let (v, dv) = if s < self.s_launch {
            (s + self.a * s * s, 1.0 + 2.0 * self.a * s)
        } else {
            let y = self.trajectory.eval(r.min(self.r_max));
            (y[0], y[1])
        };
        let ddv = radial_rhs(self.exponents.n, self.exponents.alpha, r, v, dv);
        [v, dv, ddv]
    }

    /// `1 - v'^2` at distance `s` from the free boundary.
    pub fn gradient_defect(&self, s: f64) -> f64 {
        let dv = self.eval(self.r0 + s)[1];
        (1.0 - dv) * (1.0 + dv)
    }

    /// Scaled defect `|v''_dense - rhs| / (1 + |rhs|)`, where `v''_dense` is
    /// the second derivative of the dense interpolant and `rhs` the
    /// right-hand side evaluated on the interpolated `v, v'`.
    pub fn ode_residual(&self, r: f64) -> f64 {
        let [v, dv, ddv] = self.trajectory.eval_with_second(r);
        let rhs = radial_rhs(self.exponents.n, self.exponents.alpha, r, v, dv);
        (ddv - rhs).abs() / (1.0 + rhs.abs())
    }

    /// Sample `r, v, v', v''` at `count` equispaced radii in `[r0, r_max]`.
    pub fn samples(&self, count: usize) -> Vec<[f64; 4]> {
        let count = count.max(2);
        (0..count)
            .map(|k| {
                let r = self.r0 + (self.r_max - self.r0) * k as f64 / (count - 1) as f64;
                let [v, dv, ddv] = self.eval(r);
                [r, v, dv, ddv]
            })
            .collect()
    }

    /// The profile on an axial grid, centred at `(0, zc)`, with its analytic gradient.
    pub fn to_field(&self, grid: &AxisymGrid, zc: f64) -> Result<ScalarField> {
        let field = ScalarField::from_fn_with_gradient(grid, |t, z| {
            let r = t.hypot(z - zc);
            let [v, dv, _] = self.eval(r);
            if r <= self.r0 {
                (0.0, [0.0, 0.0])
            } else {
                (v, [dv * t / r, dv * (z - zc) / r])
            }
        });
        field.map_err(|e| Error::Domain(format!("radial profile does not cover the grid: {e}")))
    }
}

/// `v = beta u^(1/beta)`; attached gradients transform by `grad v = grad u / u^(gamma/2)`.
pub fn v_from_u(u: &ScalarField, e: &Exponents) -> Result<ScalarField> {
    if let Some(k) = u.values.iter().position(|&x| x < 0.0) {
        return Err(Error::Domain(format!("negative value at node {k}")));
    }
    let values: Vec<f64> = u.values.iter().map(|&x| if x > 0.0 { e.beta * x.powf(1.0 / e.beta) } else { 0.0 }).collect();
    let gradient = u.gradient.as_ref().map(|g| {
        g.iter()
            .zip(&u.values)
            .map(|(d, &x)| if x > 0.0 { let s = x.powf(-0.5 * e.gamma); [d[0] * s, d[1] * s] } else { [0.0, 0.0] })
            .collect()
    });
    Ok(ScalarField { grid: u.grid.clone(), values, mask: u.mask.clone(), gradient })
}

/// `u = (v/beta)^beta`; attached gradients transform by `grad u = (v/beta)^(alpha/2) grad v`.
pub fn u_from_v(v: &ScalarField, e: &Exponents) -> Result<ScalarField> {
    if let Some(k) = v.values.iter().position(|&x| x < 0.0) {
        return Err(Error::Domain(format!("negative value at node {k}")));
    }
    let values: Vec<f64> = v.values.iter().map(|&x| if x > 0.0 { (x / e.beta).powf(e.beta) } else { 0.0 }).collect();
    let gradient = v.gradient.as_ref().map(|g| {
        g.iter()
            .zip(&v.values)
            .map(|(d, &x)| if x > 0.0 { let s = (x / e.beta).powf(0.5 * e.alpha); [d[0] * s, d[1] * s] } else { [0.0, 0.0] })
            .collect()
    });
    Ok(ScalarField { grid: v.grid.clone(), values, mask: v.mask.clone(), gradient })
}

/// Centred tau-derivative of `v`, one-sided at the mask boundary and zero on the axis.
/// The result keeps the mask of `v` and may be negative.
pub fn v_tau_field(v: &ScalarField) -> ScalarField {
    let grad = v.fd_gradient();
    let values = grad.iter().zip(&v.mask).map(|(g, &m)| if m { g[0] } else { 0.0 }).collect();
    ScalarField { grid: v.grid.clone(), values, mask: v.mask.clone(), gradient: None }
}

/// Nodal residual of the linearized identity
/// `Δv_τ + α ∇v_τ·∇v / v + (α/2)(1 - |∇v|²) v_τ / v² - (n-2) v_τ / τ²`
/// by centred differences, at nodes whose 5-point neighbourhoods stay
/// `margin` nodes inside the mask and off the axis. Other nodes get `None`.
pub fn linearized_vtau_residual(v: &ScalarField, e: &Exponents, margin: usize) -> Vec<Option<f64>> {
    let g = &v.grid;
    let h = g.h;
    let n = g.n as f64;
    let alpha = e.alpha;
    let vt = v_tau_field(v);
    let inside = |i: usize, j: usize| -> bool {
        if i < margin.max(1) || i + margin >= g.nt || j < margin || j + margin >= g.nz {
            return false;
        }
        for di in 0..=2 * margin {
            for dj in 0..=2 * margin {
                if !v.masked(i + di - margin, j + dj - margin) {
                    return false;
                }
            }
        }
        true
    };
    (0..g.len())
        .map(|k| {
            let (i, j) = g.ij(k);
            if !inside(i, j) {
                return None;
            }
            let tau = g.tau(i);
            let w = |a: usize, b: usize| vt.at(a, b);
            let f = |a: usize, b: usize| v.at(a, b);
            let wt = (w(i + 1, j) - w(i - 1, j)) / (2.0 * h);
            let wz = (w(i, j + 1) - w(i, j - 1)) / (2.0 * h);
            let wtt = (w(i + 1, j) - 2.0 * w(i, j) + w(i - 1, j)) / (h * h);
            let wzz = (w(i, j + 1) - 2.0 * w(i, j) + w(i, j - 1)) / (h * h);
            let vt_ = (f(i + 1, j) - f(i - 1, j)) / (2.0 * h);
            let vz = (f(i, j + 1) - f(i, j - 1)) / (2.0 * h);
            let val = f(i, j);
            let wc = w(i, j);
            let lap = wtt + (n - 2.0) * wt / tau + wzz;
            let defect = (1.0 - vt_.hypot(vz)) * (1.0 + vt_.hypot(vz));
            Some(lap + alpha * (wt * vt_ + wz * vz) / val + 0.5 * alpha * defect * wc / (val * val) - (n - 2.0) * wc / (tau * tau))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{derive_exponents, exponents_from_alpha};
    use crate::grid::build_axisym_grid;

    #[test]
    fn gamma_one_profile_is_quadratic() {
        let e = derive_exponents(1.0, 1).unwrap();
        let g = Grid1d::new(0.0, 1.0, 0.125).unwrap();
        let p = one_d_profile(&e, &g).unwrap();
        for (t, u) in p.t.iter().zip(&p.u) {
            assert!((u - t * t / 4.0).abs() < 1e-15);
        }
        assert!(p.ddu[3] == 0.5);
    }

    #[test]
    fn harmonic_radial_profile() {
        let e = derive_exponents(0.0, 3).unwrap();
        let p = radial_profile(&e, 1.0, 5.0, 1e-12).unwrap();
        for k in 0..=40 {
            let r = 1.1 + 3.9 * k as f64 / 40.0;
            let exact = 1.0 - 1.0 / r;
            assert!((p.eval(r)[0] - exact).abs() <= 1e-8 * exact, "r = {r}");
        }
    }

    #[test]
    fn one_dimensional_harmonic_is_linear() {
        let e = derive_exponents(0.0, 1).unwrap();
        let p = radial_profile(&e, 0.5, 3.0, 1e-12).unwrap();
        for r in [0.6, 1.0, 2.9] {
            assert!((p.eval(r)[0] - (r - 0.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn change_of_variables_round_trip() {
        let e = derive_exponents(0.7, 3).unwrap();
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.05, 3).unwrap();
        let u = ScalarField::from_fn(&g, |t, z| (z + 0.2 * t).max(0.0).powi(3) + 1e-8 * (z > 0.0) as u8 as f64).unwrap();
        let back = u_from_v(&v_from_u(&u, &e).unwrap(), &e).unwrap();
        for (a, b) in u.values.iter().zip(&back.values) {
            if *a >= 1e-8 {
                assert!((a - b).abs() <= 1e-13 * a);
            }
        }
        assert_eq!(back.mask, u.mask);
    }

    #[test]
    fn one_d_profile_maps_to_identity() {
        let e = exponents_from_alpha(0.5, 2).unwrap();
        let g = build_axisym_grid(0.5, -0.5, 1.0, 0.05, 2).unwrap();
        let u = one_d_field(&e, &g, 0.0).unwrap();
        let v = v_from_u(&u, &e).unwrap();
        for k in 0..g.len() {
            let (_, z) = g.coords(k);
            assert!((v.values[k] - z.max(0.0)).abs() < 1e-14);
            if z > 0.0 {
                assert!((v.gradient.as_ref().unwrap()[k][1] - 1.0).abs() < 1e-14);
            }
        }
    }
}
