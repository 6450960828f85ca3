//! Exact Euclidean distance from grid nodes to the zero set of a field.
//!
//! Two-pass separable transform on squared distances (lower envelope of
//! parabolas along each grid line).

use crate::field::ScalarField;
use crate::grid::AxisymGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub grid: AxisymGrid,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FreeBoundaryDistance {
    Field(DistanceField),
    /// The field has no zero node.
    NoFreeBoundary,
}

impl FreeBoundaryDistance {
    pub fn field(self) -> Option<DistanceField> {
        match self {
            FreeBoundaryDistance::Field(d) => Some(d),
            FreeBoundaryDistance::NoFreeBoundary => None,
        }
    }
}

pub fn distance_to_fb(field: &ScalarField) -> FreeBoundaryDistance {
    let g = &field.grid;
    if field.mask.iter().all(|&m| m) {
        return FreeBoundaryDistance::NoFreeBoundary;
    }
    let inf = f64::INFINITY;
    // Pass 1: along z for each tau column, distances in cell units.
    let mut d2 = vec![inf; g.len()];
    let mut line = vec![0.0; g.nz.max(g.nt)];
    let mut out = vec![0.0; g.nz.max(g.nt)];
    for i in 0..g.nt {
        for j in 0..g.nz {
            line[j] = if field.mask[g.idx(i, j)] { inf } else { 0.0 };
        }
        envelope(&line[..g.nz], &mut out[..g.nz]);
        for j in 0..g.nz {
            d2[g.idx(i, j)] = out[j];
        }
    }
    // Pass 2: along tau for each z row.
    for j in 0..g.nz {
        for i in 0..g.nt {
            line[i] = d2[g.idx(i, j)];
        }
        envelope(&line[..g.nt], &mut out[..g.nt]);
        for i in 0..g.nt {
            d2[g.idx(i, j)] = out[i];
        }
    }
    let values = d2.into_iter().map(|s| s.sqrt() * g.h).collect();
    FreeBoundaryDistance::Field(DistanceField { grid: g.clone(), values })
}

/// `out[q] = min_p (q-p)^2 + f[p]`.
fn envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let fp = f[p] + (p * p) as f64;
                    let s = (fq - fp) / (2.0 * (q as f64 - p as f64));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                        if v.is_empty() {
                            continue;
                        }
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_axisym_grid;

    #[test]
    fn half_space() {
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.1, 3).unwrap();
        let f = ScalarField::from_fn(&g, |_, z| z.max(0.0)).unwrap();
        let d = distance_to_fb(&f).field().unwrap();
        for k in 0..g.len() {
            let (_, z) = g.coords(k);
            assert!((d.values[k] - z.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn positive_field_has_no_free_boundary() {
        let g = build_axisym_grid(1.0, -1.0, 1.0, 0.1, 3).unwrap();
        let f = ScalarField::from_fn(&g, |_, _| 2.0).unwrap();
        assert_eq!(distance_to_fb(&f), FreeBoundaryDistance::NoFreeBoundary);
    }
}
