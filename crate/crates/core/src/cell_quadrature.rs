//! Cell-by-cell quadrature on an [`AxisymGrid`] for integrands that vanish
//! like a power of the distance to the free boundary.
//!
//! Away from the free boundary each cell uses the corner trapezoid rule, so
//! the sum over cells reproduces the nodal trapezoidal rule. Cells cut by
//! the boundary, or within `band` of it, write the integrand as `ℓ₊^p S`,
//! with `ℓ = w^(1/root)` a level function vanishing linearly on the free
//! boundary and `S` smooth. Both factors are reconstructed bilinearly and the
//! product is integrated exactly along the steeper cell direction, with
//! Gauss-Legendre in the other.

use crate::field::ScalarField;
use crate::vector_field::SupportBox;

/// Behaviour of an integrand at the free boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity {
    /// `ℓ = w^(1/root)` vanishes linearly on the free boundary.
    pub root: f64,
    /// The integrand behaves like `ℓ^power`.
    pub power: f64,
    /// Level below which cells use the singular rule.
    pub band: f64,
}

const GL4_X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL4_W: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// `∫_0^1 (a + b s)₊^p (c + d s) ds`.
pub fn line_integral(a: f64, b: f64, c: f64, d: f64, p: f64) -> f64 {
    let (l0, l1) = (a, a + b);
    if l0 <= 0.0 && l1 <= 0.0 {
        return 0.0;
    }
    if l0 > 0.0 && l1 > 0.0 && b.abs() < 0.5 * l0.min(l1) {
        return GL4_X
            .iter()
            .zip(GL4_W)
            .map(|(&x, w)| {
                let s = 0.5 * (x + 1.0);
                0.5 * w * (a + b * s).powf(p) * (c + d * s)
            })
            .sum();
    }
    let (lo, hi) = (l0.min(l1).max(0.0), l0.max(l1));
    let c1 = c - d * a / b;
    let d1 = d / b;
    let prim = |w: f64| c1 * w.powf(p + 1.0) / (p + 1.0) + d1 * w.powf(p + 2.0) / (p + 2.0);
    (prim(hi) - prim(lo)) / b.abs()
}

/// `∫∫_[0,1]² ℓ₊^p S` for bilinear `ℓ` and `S` given at corners
/// `[00, 10, 01, 11]` (first index along tau).
pub fn unit_cell_integral(ell: [f64; 4], s: [f64; 4], p: f64) -> f64 {
    let slope_x = ((ell[1] - ell[0]) + (ell[3] - ell[2])).abs();
    let slope_y = ((ell[2] - ell[0]) + (ell[3] - ell[1])).abs();
    // Reorder so that the exact direction is the first local coordinate.
    let (ell, s) = if slope_x >= slope_y {
        (ell, s)
    } else {
        ([ell[0], ell[2], ell[1], ell[3]], [s[0], s[2], s[1], s[3]])
    };
    GL4_X
        .iter()
        .zip(GL4_W)
        .map(|(&x, w)| {
            let y = 0.5 * (x + 1.0);
            let a = ell[0] * (1.0 - y) + ell[2] * y;
            let b = ell[1] * (1.0 - y) + ell[3] * y - a;
            let c = s[0] * (1.0 - y) + s[2] * y;
            let d = s[1] * (1.0 - y) + s[3] * y - c;
            0.5 * w * line_integral(a, b, c, d, p)
        })
        .sum()
}

/// Integrals of several nodal integrands (unweighted, zero off the mask)
/// against `tau^(n-2)`, over the cells whose corners all lie in `region`.
///
/// `grad` is the gradient of `field` used to extrapolate `ℓ` to corners
/// outside the mask.
pub fn cell_integrals(field: &ScalarField, grad: &[[f64; 2]], sing: Option<&Singularity>, region: Option<SupportBox>, integrands: &[&[f64]]) -> Vec<f64> {
    let g = &field.grid;
    let h = g.h;
    let (ri, rj) = match region {
        Some(b) => g.node_range(b.t0, b.t1, b.z0, b.z1),
        None => (0..=g.nt - 1, 0..=g.nz - 1),
    };
    let level = |k: usize, sg: &Singularity| -> (f64, [f64; 2]) {
        let w = field.values[k];
        let l = w.powf(1.0 / sg.root);
        let f = if sg.root == 1.0 { 1.0 } else { l / (sg.root * w) };
        (l, [f * grad[k][0], f * grad[k][1]])
    };
    let mut acc = vec![0.0; integrands.len()];
    let (i_end, j_end) = (*ri.end(), *rj.end());
    for i in *ri.start()..i_end {
        for j in *rj.start()..j_end {
            let corners = [g.idx(i, j), g.idx(i + 1, j), g.idx(i, j + 1), g.idx(i + 1, j + 1)];
            let offs = [[0.0, 0.0], [h, 0.0], [0.0, h], [h, h]];
            let masked = corners.map(|k| field.mask[k]);
            if !masked.iter().any(|&m| m) {
                continue;
            }
            let wts = [g.tau(i), g.tau(i + 1), g.tau(i), g.tau(i + 1)].map(|t| g.radial_weight(t));
            let singular = sing.and_then(|sg| {
                let all = masked.iter().all(|&m| m);
                let near = corners.iter().any(|&k| field.mask[k] && level(k, sg).0 < sg.band);
                (!all || near).then_some(sg)
            });
            match singular {
                None => {
                    for (a, f) in acc.iter_mut().zip(integrands) {
                        *a += 0.25 * h * h * (0..4).map(|c| wts[c] * f[corners[c]]).sum::<f64>();
                    }
                }
                Some(sg) => {
                    let lv: Vec<Option<(f64, [f64; 2])>> = corners.iter().map(|&k| field.mask[k].then(|| level(k, sg))).collect();
                    let mut ell = [0.0; 4];
                    for c in 0..4 {
                        ell[c] = match lv[c] {
                            Some((l, _)) => l,
                            None => {
                                let (mut sum, mut cnt) = (0.0, 0.0);
                                for (m, item) in lv.iter().enumerate() {
                                    if let Some((l, dl)) = item {
                                        sum += l + dl[0] * (offs[c][0] - offs[m][0]) + dl[1] * (offs[c][1] - offs[m][1]);
                                        cnt += 1.0;
                                    }
                                }
                                (sum / cnt).min(0.0)
                            }
                        };
                    }
                    for (a, f) in acc.iter_mut().zip(integrands) {
                        let mut s = [0.0; 4];
                        let (mut sum, mut cnt) = (0.0, 0.0);
                        for c in 0..4 {
                            if lv[c].is_some() {
                                s[c] = wts[c] * f[corners[c]] / ell[c].powf(sg.power);
                                sum += s[c];
                                cnt += 1.0;
                            }
                        }
                        for c in 0..4 {
                            if lv[c].is_none() {
                                s[c] = sum / cnt;
                            }
                        }
                        *a += h * h * unit_cell_integral(ell, s, sg.power);
                    }
                }
            }
        }
    }
    acc
}
