//! Nodal scalar fields on an [`AxisymGrid`] with a positivity mask.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::AxisymGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: AxisymGrid,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    /// Optional nodal gradient `(d_tau, d_z)`, e.g. from an analytic profile.
    pub gradient: Option<Vec<[f64; 2]>>,
}

impl ScalarField {
    /// Field from nodal values; the mask is `value > 0`.
    pub fn from_values(grid: AxisymGrid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("field value {} at node {k} is negative or not finite", values[k])));
        }
        let mask = values.iter().map(|&v| v > 0.0).collect();
        Ok(ScalarField { grid, values, mask, gradient: None })
    }

    /// Signed field (a derivative or a test function) carrying an explicit
    /// mask; values off the mask must be zero.
    pub fn from_parts(grid: AxisymGrid, values: Vec<f64>, mask: Vec<bool>) -> Result<ScalarField> {
        if values.len() != grid.len() || mask.len() != grid.len() {
            return Err(Error::Domain("values and mask must cover every grid node".into()));
        }
        if let Some(k) = (0..values.len()).find(|&k| !values[k].is_finite() || (!mask[k] && values[k] != 0.0)) {
            return Err(Error::Domain(format!("value {} at node {k} is not finite or lies off the mask", values[k])));
        }
        Ok(ScalarField { grid, values, mask, gradient: None })
    }

    pub fn from_fn(grid: &AxisymGrid, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        let values = (0..grid.len())
            .map(|k| {
                let (t, z) = grid.coords(k);
                f(t, z)
            })
            .collect();
        ScalarField::from_values(grid.clone(), values)
    }

    /// Sample value and gradient together. Gradients are kept only on the mask.
    pub fn from_fn_with_gradient(grid: &AxisymGrid, f: impl Fn(f64, f64) -> (f64, [f64; 2])) -> Result<ScalarField> {
        let (values, grads): (Vec<f64>, Vec<[f64; 2]>) = (0..grid.len())
            .map(|k| {
                let (t, z) = grid.coords(k);
                f(t, z)
            })
            .unzip();
        let mut field = ScalarField::from_values(grid.clone(), values)?;
        let grads = grads
            .into_iter()
            .zip(&field.mask)
            .map(|(g, &m)| if m { g } else { [0.0, 0.0] })
            .collect();
        field.gradient = Some(grads);
        Ok(field)
    }

    pub fn zeros(grid: &AxisymGrid) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            mask: vec![false; grid.len()],
            gradient: None,
        }
    }

    pub fn without_gradient(mut self) -> ScalarField {
        self.gradient = None;
        self
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn masked(&self, i: usize, j: usize) -> bool {
        self.mask[self.grid.idx(i, j)]
    }

    /// Attached gradient if present, otherwise [`ScalarField::fd_gradient`].
    pub fn gradient_or_fd(&self) -> Vec<[f64; 2]> {
        match &self.gradient {
            Some(g) => g.clone(),
            None => self.fd_gradient(),
        }
    }

    /// Second-order finite-difference gradient on the mask.
    ///
    /// Centered where both neighbours are in the mask, one-sided second
    /// order into the positive phase otherwise. The axis is a symmetry line,
    /// so `d_tau = 0` there. Nodes outside the mask get a zero gradient.
    pub fn fd_gradient(&self) -> Vec<[f64; 2]> {
        let g = &self.grid;
        let mut out = vec![[0.0; 2]; g.len()];
        for i in 0..g.nt {
            for j in 0..g.nz {
                let k = g.idx(i, j);
                if !self.mask[k] {
                    continue;
                }
                let dt = if i == 0 {
                    0.0
                } else {
                    self.directional(|s| {
                        let ii = i as i64 + s;
                        (ii >= 0 && ii < g.nt as i64).then(|| g.idx(ii as usize, j))
                    })
                };
                let dz = self.directional(|s| {
                    let jj = j as i64 + s;
                    (jj >= 0 && jj < g.nz as i64).then(|| g.idx(i, jj as usize))
                });
                out[k] = [dt, dz];
            }
        }
        out
    }

    fn directional(&self, at: impl Fn(i64) -> Option<usize>) -> f64 {
        let h = self.grid.h;
        let get = |s: i64| at(s).filter(|&k| self.mask[k]).map(|k| self.values[k]);
        let f0 = self.values[at(0).expect("center node")];
        match (get(-1), get(1)) {
            (Some(fm), Some(fp)) => (fp - fm) / (2.0 * h),
            (fm, fp) => {
                if let (Some(f1), Some(f2)) = (fp, get(2)) {
                    (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
                } else if let (Some(f1), Some(f2)) = (fm, get(-2)) {
                    (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h)
                } else if let Some(f1) = fp {
                    (f1 - f0) / h
                } else if let Some(f1) = fm {
                    (f0 - f1) / h
                } else {
                    0.0
                }
            }
        }
    }

    /// CSV dump with header `tau,z,value,mask`; floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,z,value,mask\n");
        for k in 0..self.grid.len() {
            let (t, z) = self.grid.coords(k);
            writeln!(s, "{},{},{},{}", fmt17(t), fmt17(z), fmt17(self.values[k]), self.mask[k] as u8).unwrap();
        }
        s
    }

    /// Parse a CSV produced by [`ScalarField::to_csv`] on the same grid.
    pub fn from_csv(grid: &AxisymGrid, text: &str) -> Result<ScalarField> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("tau,z,value,mask") {
            return Err(Error::Parse("missing header tau,z,value,mask".into()));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut mask = Vec::with_capacity(grid.len());
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Parse(format!("row {row}: expected 4 columns")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {row}: {e}")));
            let (t, z, v) = (num(cols[0])?, num(cols[1])?, num(cols[2])?);
            if row >= grid.len() {
                return Err(Error::Parse("more rows than grid nodes".into()));
            }
            let (gt, gz) = grid.coords(row);
            if (t - gt).abs() > 1e-9 * grid.h || (z - gz).abs() > 1e-9 * grid.h {
                return Err(Error::Parse(format!("row {row}: coordinates do not match the grid")));
            }
            let m = match cols[3].trim() {
                "1" => true,
                "0" => false,
                other => return Err(Error::Parse(format!("row {row}: bad mask flag {other:?}"))),
            };
            values.push(v);
            mask.push(m);
        }
        if values.len() != grid.len() {
            return Err(Error::Parse(format!("expected {} rows, got {}", grid.len(), values.len())));
        }
        Ok(ScalarField { grid: grid.clone(), values, mask, gradient: None })
    }
}

/// Scientific notation with 17 significant digits; round-trips every finite f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_axisym_grid;

    #[test]
    fn mask_follows_sign() {
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.25, 3).unwrap();
        let f = ScalarField::from_fn(&g, |_, z| z.max(0.0)).unwrap();
        for k in 0..g.len() {
            let (_, z) = g.coords(k);
            assert_eq!(f.mask[k], z > 0.0);
        }
        assert!(ScalarField::from_fn(&g, |_, z| z).is_err());
    }

    #[test]
    fn one_sided_gradient_is_exact_for_quadratics() {
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.125, 3).unwrap();
        let f = ScalarField::from_fn(&g, |t, z| if z > 0.0 { z * z + t * t * z } else { 0.0 }).unwrap();
        let grad = f.fd_gradient();
        for i in 1..g.nt - 1 {
            for j in 0..g.nz {
                let (t, z) = (g.tau(i), g.z(j));
                if z > 0.0 {
                    let k = g.idx(i, j);
                    assert!((grad[k][1] - (2.0 * z + t * t)).abs() < 1e-12, "{i} {j}");
                    assert!((grad[k][0] - 2.0 * t * z).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.1, 3).unwrap();
        let f = ScalarField::from_fn(&g, |t, z| (z + 0.3 * t).max(0.0).powf(1.37) / 3.0).unwrap();
        let back = ScalarField::from_csv(&g, &f.to_csv()).unwrap();
        assert_eq!(back, f);
    }
}
