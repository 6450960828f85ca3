//! Compactly supported axisymmetric vector fields `Phi = (Phi^tau, Phi^z)`
//! driving inner variations, with analytic Jacobians.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AxisymGrid;

/// Closed box `[t0, t1] x [z0, z1]` in the axial plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub t0: f64,
    pub t1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl SupportBox {
    pub fn contains(&self, t: f64, z: f64) -> bool {
        t >= self.t0 && t <= self.t1 && z >= self.z0 && z <= self.z1
    }

    /// The box must stay two cells away from the outer grid edges. It may
    /// touch the axis, which is a symmetry line rather than a boundary.
    pub fn check_inside(&self, grid: &AxisymGrid) -> Result<()> {
        let m = 2.0 * grid.h;
        let ok = self.t0 >= 0.0
            && self.t1 <= grid.tau_max - m
            && self.z0 >= grid.z_min + m
            && self.z1 <= grid.z_max - m
            && self.t1 > self.t0
            && self.z1 > self.z0;
        if ok {
            Ok(())
        } else {
            Err(Error::Support(format!(
                "support box [{}, {}] x [{}, {}] is not strictly inside the grid [0, {}] x [{}, {}]",
                self.t0, self.t1, self.z0, self.z1, grid.tau_max, grid.z_min, grid.z_max
            )))
        }
    }
}

/// `jacobian[i][j] = d Phi^i / d x_j` with index 0 = tau, 1 = z.
pub trait VectorField: Send + Sync {
    fn value(&self, t: f64, z: f64) -> [f64; 2];
    fn jacobian(&self, t: f64, z: f64) -> [[f64; 2]; 2];
    fn support(&self) -> SupportBox;

    /// `Phi^tau / tau`, the angular eigenvalue of the full Jacobian in
    /// `R^n`; on the axis its limit `d Phi^tau / d tau`.
    fn hoop(&self, t: f64, z: f64) -> f64 {
        if t > 0.0 {
            self.value(t, z)[0] / t
        } else {
            self.jacobian(t, z)[0][0]
        }
    }
}

/// `Phi = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField {
    pub support: SupportBox,
}

impl VectorField for ZeroField {
    fn value(&self, _: f64, _: f64) -> [f64; 2] {
        [0.0; 2]
    }
    fn jacobian(&self, _: f64, _: f64) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }
    fn support(&self) -> SupportBox {
        self.support
    }
}

/// `((x-a)(b-x))^p / ((b-a)/2)^(2p)` on `[a, b]`, zero outside, and its derivative.
pub fn poly_bump(x: f64, a: f64, b: f64, p: i32) -> (f64, f64) {
    if x <= a || x >= b {
        return (0.0, 0.0);
    }
    let half = 0.5 * (b - a);
    let norm = half.powi(2 * p);
    let g = (x - a) * (b - x);
    let dg = (b - x) - (x - a);
    (g.powi(p) / norm, p as f64 * g.powi(p - 1) * dg / norm)
}

/// Tensor polynomial bump `c * psi(t) * chi(z)` with a constant direction `c`.
/// `psi` and `chi` are `C^(p-1)` bumps on the box edges.
#[derive(Debug, Clone, Copy)]
pub struct BoxBumpField {
    pub support: SupportBox,
    pub direction: [f64; 2],
    pub power: i32,
}

impl VectorField for BoxBumpField {
    fn value(&self, t: f64, z: f64) -> [f64; 2] {
        let s = self.support;
        let (a, _) = poly_bump(t, s.t0, s.t1, self.power);
        let (b, _) = poly_bump(z, s.z0, s.z1, self.power);
        [self.direction[0] * a * b, self.direction[1] * a * b]
    }
    fn jacobian(&self, t: f64, z: f64) -> [[f64; 2]; 2] {
        let s = self.support;
        let (a, da) = poly_bump(t, s.t0, s.t1, self.power);
        let (b, db) = poly_bump(z, s.z0, s.z1, self.power);
        let c = self.direction;
        [[c[0] * da * b, c[0] * a * db], [c[1] * da * b, c[1] * a * db]]
    }
    fn support(&self) -> SupportBox {
        self.support
    }
}

/// Smooth step: 0 for `x <= 0`, 1 for `x >= 1`, `C^2` quintic in between.
pub fn smoothstep(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0)
    } else {
        let v = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        let d = 30.0 * x * x * (1.0 - x) * (1.0 - x);
        (v, d)
    }
}

/// Plateau `1` on `[a + w, b - w]`, zero outside `[a, b]`, smooth ramps of width `w`.
pub fn plateau(x: f64, a: f64, b: f64, w: f64) -> (f64, f64) {
    let (l, dl) = smoothstep((x - a) / w);
    let (r, dr) = smoothstep((b - x) / w);
    (l * r, (dl * r - l * dr) / w)
}

/// Constant vector `c` on a plateau, ramping to zero at the box edges.
#[derive(Debug, Clone, Copy)]
pub struct PlateauField {
    pub support: SupportBox,
    pub ramp: f64,
    pub direction: [f64; 2],
}

impl VectorField for PlateauField {
    fn value(&self, t: f64, z: f64) -> [f64; 2] {
        let s = self.support;
        let (a, _) = plateau(t, s.t0, s.t1, self.ramp);
        let (b, _) = plateau(z, s.z0, s.z1, self.ramp);
        [self.direction[0] * a * b, self.direction[1] * a * b]
    }
    fn jacobian(&self, t: f64, z: f64) -> [[f64; 2]; 2] {
        let s = self.support;
        let (a, da) = plateau(t, s.t0, s.t1, self.ramp);
        let (b, db) = plateau(z, s.z0, s.z1, self.ramp);
        let c = self.direction;
        [[c[0] * da * b, c[0] * a * db], [c[1] * da * b, c[1] * a * db]]
    }
    fn support(&self) -> SupportBox {
        self.support
    }
}

/// Radial field `psi(r) e_r` about the axis point `(0, zc)`, with
/// `psi = amplitude * ((r - r_in)(r_out - r))^p / norm` on `[r_in, r_out]`.
#[derive(Debug, Clone, Copy)]
pub struct RadialBumpField {
    pub zc: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub amplitude: f64,
    pub power: i32,
}

impl RadialBumpField {
    fn profile(&self, r: f64) -> (f64, f64) {
        let (p, dp) = poly_bump(r, self.r_in, self.r_out, self.power);
        (self.amplitude * p, self.amplitude * dp)
    }
}

impl VectorField for RadialBumpField {
    fn value(&self, t: f64, z: f64) -> [f64; 2] {
        let zz = z - self.zc;
        let r = t.hypot(zz);
        if r == 0.0 {
            return [0.0; 2];
        }
        let (p, _) = self.profile(r);
        [p * t / r, p * zz / r]
    }
    fn jacobian(&self, t: f64, z: f64) -> [[f64; 2]; 2] {
        let zz = z - self.zc;
        let r = t.hypot(zz);
        if r == 0.0 {
            return [[0.0; 2]; 2];
        }
        let (p, dp) = self.profile(r);
        let e = [t / r, zz / r];
        let mut j = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let delta = if a == b { 1.0 } else { 0.0 };
                j[a][b] = dp * e[a] * e[b] + p / r * (delta - e[a] * e[b]);
            }
        }
        j
    }
    fn support(&self) -> SupportBox {
        SupportBox { t0: 0.0, t1: self.r_out, z0: self.zc - self.r_out, z1: self.zc + self.r_out }
    }
}

type ValueFn = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;
type JacobianFn = dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync;

/// A field given by closures.
#[derive(Clone)]
pub struct FnField {
    pub support: SupportBox,
    pub value: Arc<ValueFn>,
    pub jacobian: Arc<JacobianFn>,
}

impl VectorField for FnField {
    fn value(&self, t: f64, z: f64) -> [f64; 2] {
        (self.value)(t, z)
    }
    fn jacobian(&self, t: f64, z: f64) -> [[f64; 2]; 2] {
        (self.jacobian)(t, z)
    }
    fn support(&self) -> SupportBox {
        self.support
    }
}
