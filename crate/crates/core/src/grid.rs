//! Uniform tensor grids in the axial coordinates (tau, z), tau = |x'| >= 0.
//!
//! Quadrature weights carry the factor tau^(n-2) of the reduced measure; the
//! constant area of the unit sphere S^(n-2) is dropped throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisymGrid {
    pub tau_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub h: f64,
    pub n: usize,
    pub nt: usize,
    pub nz: usize,
}

/// Build a grid with spacing `h`. Extents are snapped to the nearest
/// multiple of `h`.
pub fn build_axisym_grid(tau_max: f64, z_min: f64, z_max: f64, h: f64, n: usize) -> Result<AxisymGrid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("grid spacing h = {h} must be positive")));
    }
    if !(tau_max > 0.0) || !(z_max > z_min) {
        return Err(Error::Domain("grid extents must be positive".into()));
    }
    if n < 2 {
        return Err(Error::Domain("axial grids need n >= 2".into()));
    }
    let cells_t = (tau_max / h).round() as usize;
    let cells_z = ((z_max - z_min) / h).round() as usize;
    if cells_t < 2 || cells_z < 2 {
        return Err(Error::Domain(format!("grid must span at least two cells per direction (h = {h})")));
    }
    Ok(AxisymGrid {
        tau_max: cells_t as f64 * h,
        z_min,
        z_max: z_min + cells_z as f64 * h,
        h,
        n,
        nt: cells_t + 1,
        nz: cells_z + 1,
    })
}

impl AxisymGrid {
    pub fn len(&self) -> usize {
        self.nt * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nz + j
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k / self.nz, k % self.nz)
    }

    #[inline]
    pub fn tau(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.h
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.tau(i), self.z(j))
    }

    /// `tau^(n-2)` with the convention `0^0 = 1`.
    #[inline]
    pub fn radial_weight(&self, tau: f64) -> f64 {
        axial_weight(tau, self.n)
    }

    /// Trapezoidal weight of node (i, j) including the `tau^(n-2)` factor.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let ci = if i == 0 || i + 1 == self.nt { 0.5 } else { 1.0 };
        let cj = if j == 0 || j + 1 == self.nz { 0.5 } else { 1.0 };
        self.h * self.h * ci * cj * self.radial_weight(self.tau(i))
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (i, j) = self.ij(k);
                self.weight(i, j)
            })
            .collect()
    }

    /// Index range of nodes lying in the closed box `[t0,t1] x [z0,z1]`.
    pub fn node_range(&self, t0: f64, t1: f64, z0: f64, z1: f64) -> (std::ops::RangeInclusive<usize>, std::ops::RangeInclusive<usize>) {
        let slack = 1e-9 * self.h;
        let i0 = ((t0 - slack) / self.h).ceil().max(0.0) as usize;
        let i1 = (((t1 + slack) / self.h).floor() as usize).min(self.nt - 1);
        let j0 = ((z0 - self.z_min - slack) / self.h).ceil().max(0.0) as usize;
        let j1 = (((z1 - self.z_min + slack) / self.h).floor() as usize).min(self.nz - 1);
        (i0..=i1, j0..=j1)
    }

    /// Quadrature of a nodal function against the grid weights, summed in
    /// node order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        let mut acc = 0.0;
        for (k, v) in values.iter().enumerate() {
            let (i, j) = self.ij(k);
            acc += self.weight(i, j) * v;
        }
        acc
    }
}

#[inline]
pub fn axial_weight(tau: f64, n: usize) -> f64 {
    match n {
        0..=2 => 1.0,
        3 => tau,
        _ => tau.powi(n as i32 - 2),
    }
}

/// A uniform one-dimensional grid on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1d {
    pub a: f64,
    pub h: f64,
    pub len: usize,
}

impl Grid1d {
    pub fn new(a: f64, b: f64, h: f64) -> Result<Grid1d> {
        if !(h > 0.0) || !(b > a) {
            return Err(Error::Domain("1D grid needs h > 0 and b > a".into()));
        }
        let cells = ((b - a) / h).round() as usize;
        if cells < 1 {
            return Err(Error::Domain("1D grid must contain at least one cell".into()));
        }
        Ok(Grid1d { a, h, len: cells + 1 })
    }

    pub fn point(&self, k: usize) -> f64 {
        self.a + k as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.point(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts_and_weights() {
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.1, 3).unwrap();
        assert_eq!((g.nt, g.nz), (11, 21));
        let interior = g.weight(5, 10) / (g.h * g.h);
        assert!((interior - 0.5).abs() < 1e-15);
        assert_eq!(g.weight(0, 3), 0.0);

        let g4 = build_axisym_grid(1.0, 0.0, 1.0, 0.5, 4).unwrap();
        assert!((g4.weight(1, 1) / 0.25 - 0.25).abs() < 1e-15);

        let g2 = build_axisym_grid(1.0, 0.0, 1.0, 0.25, 2).unwrap();
        assert_eq!(g2.weight(0, 2), g2.h * g2.h * 0.5);
        assert_eq!(g2.weight(2, 2), g2.h * g2.h);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(build_axisym_grid(1.0, 0.0, 1.0, 0.0, 3).is_err());
        assert!(build_axisym_grid(1.0, 0.0, 1.0, -0.1, 3).is_err());
        assert!(build_axisym_grid(0.0, 0.0, 1.0, 0.1, 3).is_err());
    }

    #[test]
    fn node_range_is_inclusive() {
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.1, 3).unwrap();
        let (ri, rj) = g.node_range(0.2, 0.5, -0.1, 0.1);
        assert_eq!((*ri.start(), *ri.end()), (2, 5));
        assert_eq!((*rj.start(), *rj.end()), (9, 11));
    }
}
