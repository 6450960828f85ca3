//! Discrete Alt-Phillips and modified energies, the general weighted
//! functional `∫ G(w)(|∇w|² + F(w))`, and the closed-form first and second
//! inner-variation integrals.
//!
//! Quadrature is the nodal trapezoidal rule of the grid, switched to the
//! free-boundary cell rule of [`crate::cell_quadrature`] near the boundary
//! when the spec declares how its integrand vanishes there. The positivity
//! set is the stored mask. Gradients come from the field's attached gradient when
//! present and from second-order differences otherwise.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cell_quadrature::{cell_integrals, Singularity};
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::field::ScalarField;
use crate::vector_field::{SupportBox, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    pub gradient_part: f64,
    pub potential_part: f64,
    pub h: f64,
    pub exponents: Option<Exponents>,
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Weight `G` and potential `F` of the functional, applied on the mask.
#[derive(Clone)]
pub struct GeneralEnergySpec {
    pub weight: Arc<ScalarFn>,
    pub potential: Arc<ScalarFn>,
    pub exponents: Option<Exponents>,
    pub singular: Option<Singularity>,
}

/// Level below which cells use the free-boundary rule.
pub const FB_BAND: f64 = 0.25;

impl fmt::Debug for GeneralEnergySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralEnergySpec").field("exponents", &self.exponents).field("singular", &self.singular).finish_non_exhaustive()
    }
}

impl GeneralEnergySpec {
    pub fn new(weight: impl Fn(f64) -> f64 + Send + Sync + 'static, potential: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GeneralEnergySpec { weight: Arc::new(weight), potential: Arc::new(potential), exponents: None, singular: None }
    }

    /// `G = 1`, `F(w) = w^gamma`. Near the free boundary `u^(1/beta)` is
    /// the level function and the integrand vanishes like its `alpha` power.
    pub fn alt_phillips(e: &Exponents) -> Self {
        let g = e.gamma;
        let singular = Singularity { root: e.beta, power: e.alpha, band: FB_BAND };
        GeneralEnergySpec { exponents: Some(*e), singular: Some(singular), ..Self::new(|_| 1.0, move |w| w.powf(g)) }
    }

    /// `G(w) = w^alpha`, `F = 1`.
    pub fn modified(e: &Exponents) -> Self {
        let a = e.alpha;
        let singular = Singularity { root: 1.0, power: a, band: FB_BAND };
        GeneralEnergySpec { exponents: Some(*e), singular: Some(singular), ..Self::new(move |w| w.powf(a), |_| 1.0) }
    }

    /// Plain nodal trapezoidal rule everywhere.
    pub fn without_singular_rule(mut self) -> Self {
        self.singular = None;
        self
    }

    /// `G = 1`, `F = 0`.
    pub fn dirichlet() -> Self {
        Self::new(|_| 1.0, |_| 0.0)
    }

    fn eval(&self, w: f64) -> Result<(f64, f64)> {
        let (g, f) = ((self.weight)(w), (self.potential)(w));
        if g.is_finite() && f.is_finite() {
            Ok((g, f))
        } else {
            Err(Error::Evaluation(format!("G({w}) = {g}, F({w}) = {f} is not finite")))
        }
    }
}

pub fn general_energy(field: &ScalarField, spec: &GeneralEnergySpec) -> Result<EnergyReport> {
    general_energy_on(field, spec, None)
}

/// Energy over the cells inside `region` (all cells when `None`).
pub fn general_energy_on(field: &ScalarField, spec: &GeneralEnergySpec, region: Option<SupportBox>) -> Result<EnergyReport> {
    let grad = field.gradient_or_fd();
    let len = field.grid.len();
    let (mut gp, mut pp) = (vec![0.0; len], vec![0.0; len]);
    for k in 0..len {
        if field.mask[k] {
            let (gw, fw) = spec.eval(field.values[k])?;
            let q = grad[k];
            gp[k] = gw * (q[0] * q[0] + q[1] * q[1]);
            pp[k] = gw * fw;
        }
    }
    let r = cell_integrals(field, &grad, spec.singular.as_ref(), region, &[&gp, &pp]);
    Ok(EnergyReport { total: r[0] + r[1], gradient_part: r[0], potential_part: r[1], h: field.grid.h, exponents: spec.exponents })
}

/// `∫ (|∇u|² + u^gamma χ)`.
pub fn energy_ap(u: &ScalarField, e: &Exponents) -> Result<EnergyReport> {
    general_energy(u, &GeneralEnergySpec::alt_phillips(e))
}

/// `∫ v^alpha χ (|∇v|² + 1)`.
pub fn energy_mod(v: &ScalarField, e: &Exponents) -> Result<EnergyReport> {
    general_energy(v, &GeneralEnergySpec::modified(e))
}

/// Pointwise data of the full `n`-dimensional Jacobian of an axisymmetric
/// field: the 2x2 meridian block `b` and the angular eigenvalue `s`
/// (multiplicity `n - 2`).
#[derive(Debug, Clone, Copy)]
pub struct AxisymJacobian {
    pub b: [[f64; 2]; 2],
    pub s: f64,
    pub n: usize,
}

impl AxisymJacobian {
    pub fn of(phi: &dyn VectorField, t: f64, z: f64, n: usize) -> Self {
        AxisymJacobian { b: phi.jacobian(t, z), s: phi.hoop(t, z), n }
    }

    pub fn div(&self) -> f64 {
        self.b[0][0] + self.b[1][1] + (self.n as f64 - 2.0) * self.s
    }

    /// `Tr((DΦ)²)`.
    pub fn trace_sq(&self) -> f64 {
        let b = &self.b;
        b[0][0] * b[0][0] + 2.0 * b[0][1] * b[1][0] + b[1][1] * b[1][1] + (self.n as f64 - 2.0) * self.s * self.s
    }

    /// `q · DΦ q` for a meridian vector `q`.
    pub fn quad(&self, q: [f64; 2]) -> f64 {
        let b = &self.b;
        q[0] * (b[0][0] * q[0] + b[0][1] * q[1]) + q[1] * (b[1][0] * q[0] + b[1][1] * q[1])
    }

    /// `|DΦᵀ q|²`.
    pub fn transpose_norm_sq(&self, q: [f64; 2]) -> f64 {
        let b = &self.b;
        let x = b[0][0] * q[0] + b[1][0] * q[1];
        let y = b[0][1] * q[0] + b[1][1] * q[1];
        x * x + y * y
    }

    /// `q · (DΦ)² q`.
    pub fn quad_sq(&self, q: [f64; 2]) -> f64 {
        let b = &self.b;
        let bq = [b[0][0] * q[0] + b[0][1] * q[1], b[1][0] * q[0] + b[1][1] * q[1]];
        let bbq = [b[0][0] * bq[0] + b[0][1] * bq[1], b[1][0] * bq[0] + b[1][1] * bq[1]];
        q[0] * bbq[0] + q[1] * bbq[1]
    }
}

/// Integrands of the ε and ε² coefficients at one point, for `G(u)`, `F(u)`,
/// `q = ∇u`, plus the absolute size of the ε integrand's two terms.
pub fn variation_integrands(gw: f64, fw: f64, q: [f64; 2], jac: &AxisymJacobian) -> (f64, f64, f64) {
    let div = jac.div();
    let lag = q[0] * q[0] + q[1] * q[1] + fw;
    let qaq = jac.quad(q);
    let t1 = gw * lag * div;
    let t2 = 2.0 * gw * qaq;
    let e1 = t1 - t2;
    let e2 = gw * lag * 0.5 * (div * div - jac.trace_sq()) + gw * jac.transpose_norm_sq(q) + 2.0 * gw * (jac.quad_sq(q) - qaq * div);
    (e1, e2, t1.abs() + t2.abs())
}

/// First and second variation integrals and the first-variation scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationIntegrals {
    pub first: f64,
    pub second: f64,
    /// `∫ |G(|∇u|²+F) divΦ| + |2 G ∇u·DΦ∇u|`, the size first-variation
    /// cancellations are measured against.
    pub first_scale: f64,
}

pub fn variation_integrals(field: &ScalarField, spec: &GeneralEnergySpec, phi: &dyn VectorField) -> Result<VariationIntegrals> {
    let g = &field.grid;
    let sb = phi.support();
    sb.check_inside(g)?;
    let grad = field.gradient_or_fd();
    let (ri, rj) = g.node_range(sb.t0, sb.t1, sb.z0, sb.z1);
    let mut parts = vec![vec![0.0; g.len()]; 3];
    for i in ri {
        for j in rj.clone() {
            let k = g.idx(i, j);
            if !field.mask[k] {
                continue;
            }
            let jac = AxisymJacobian::of(phi, g.tau(i), g.z(j), g.n);
            let (gw, fw) = spec.eval(field.values[k])?;
            let (e1, e2, s1) = variation_integrands(gw, fw, grad[k], &jac);
            parts[0][k] = e1;
            parts[1][k] = e2;
            parts[2][k] = s1;
        }
    }
    let r = cell_integrals(field, &grad, spec.singular.as_ref(), Some(sb), &[&parts[0], &parts[1], &parts[2]]);
    Ok(VariationIntegrals { first: r[0], second: r[1], first_scale: r[2] })
}

/// `∫ G(u)(|∇u|²+F(u)) divΦ - 2 ∫ G(u) ∇u·DΦ∇u`.
pub fn first_variation(field: &ScalarField, spec: &GeneralEnergySpec, phi: &dyn VectorField) -> Result<f64> {
    Ok(variation_integrals(field, spec, phi)?.first)
}

/// The full ε² coefficient of the energy along `u ∘ (id + εΦ)^(-1)`.
pub fn second_variation_closed_form(field: &ScalarField, spec: &GeneralEnergySpec, phi: &dyn VectorField) -> Result<f64> {
    Ok(variation_integrals(field, spec, phi)?.second)
}
