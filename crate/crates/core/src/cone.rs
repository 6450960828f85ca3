//! Homogeneous axisymmetric profiles `v = r h(theta)` by shooting from the axis.
//!
//! On the sphere the profile solves
//! `h'' + (n-2) cot(theta) h' + (n-1) h = (alpha/2)(1 - h^2 - h'^2)/h`
//! with `h(0) = h0`, `h'(0) = 0`. The angle is integrated until `h` drops
//! below a switching level; from there the trajectory is continued with `h`
//! as the independent variable and the normal-form quantity
//! `K = (1 - h^2 - h'^2) h^alpha`, which satisfies
//! `dK/dh = 2(n-2) h^alpha (h + cot(theta) h')` and stays finite at `h = 0`.
//! The free boundary condition `|grad v| = 1` is `K = 0` at `h = 0`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::field::ScalarField;
use crate::grid::AxisymGrid;
use crate::ode::{integrate, Control, DenseKind, OdeOptions, Step, Trajectory};

/// How the trajectory reached `h = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    /// `h` crosses zero at `theta0`.
    Crossing,
    /// `h` reaches a positive minimum where `h' = 0` and `K > 0`.
    TurningPoint,
}

#[derive(Debug, Clone)]
pub struct ConeProfile {
    pub exponents: Exponents,
    pub h0: f64,
    /// Free boundary angle (crossing) or angle of the turning point.
    pub theta0: f64,
    /// Shooting function: `h'(theta0) + 1` when `alpha = 0`, otherwise the
    /// normal-form value `K` at the crossing or turning point. Both share the
    /// sign of the slope defect and vanish exactly at a free boundary.
    pub mismatch: f64,
    /// `h'(theta0) + 1` when the crossing slope is finite.
    pub slope_mismatch: Option<f64>,
    pub approach: Approach,
    pub h_switch: f64,
    pub theta_switch: f64,
    pub angular: Trajectory,
    /// `(theta, K)` as functions of `h`, integrated from `h_switch` down.
    pub normal: Trajectory,
}

#[derive(Debug, Clone)]
pub enum ShotResult {
    Profile(Box<ConeProfile>),
    NoFreeBoundary { h0: f64, theta_end: f64 },
}

impl ShotResult {
    pub fn mismatch(&self) -> Option<f64> {
        match self {
            ShotResult::Profile(p) => Some(p.mismatch),
            ShotResult::NoFreeBoundary { .. } => None,
        }
    }
}

const BLOW_UP: f64 = 1e8;
/// `h'^2` below which a normal-form trajectory is declared at its turning point.
const TURNING_SLOPE2: f64 = 1e-8;
/// Relative level of `h` at which the normal-form integration ends; `K`
/// changes by `O(h^(1+alpha/2))` below it.
const H_FLOOR: f64 = 1e-10;

/// `h''` on the sphere away from the axis.
#[inline]
pub fn cone_rhs(n: usize, alpha: f64, theta: f64, h: f64, dh: f64) -> f64 {
    let nf = n as f64;
    let pot = if alpha == 0.0 { 0.0 } else { 0.5 * alpha * (1.0 - h * h - dh * dh) / h };
    pot - (nf - 2.0) * dh / theta.tan() - (nf - 1.0) * h
}

/// `h''(0)` from the axis-regular limit of the equation.
pub fn axis_curvature(n: usize, alpha: f64, h0: f64) -> f64 {
    let nf = n as f64;
    (0.5 * alpha * (1.0 - h0 * h0) / h0 - (nf - 1.0) * h0) / (nf - 1.0)
}

/// Right-hand side of the normal-form system in `h`: `(dtheta/dh, dK/dh)`.
/// Returns NaN past a turning point.
fn normal_rhs(n: usize, alpha: f64, h: f64, theta: f64, k: f64) -> [f64; 2] {
    let ha = if alpha == 0.0 { 1.0 } else { h.max(0.0).powf(alpha) };
    // P = h^alpha * h'^2
    let p = ha * (1.0 - h * h) - k;
    if !(p >= 0.0) {
        return [f64::NAN; 2];
    }
    let half = ha.sqrt();
    let dtheta = -half / p.sqrt();
    let ha_dh = -half * p.sqrt();
    let dk = 2.0 * (n as f64 - 2.0) * (ha * h + ha_dh / theta.tan());
    [dtheta, dk]
}

/// Shoot one trajectory from the axis value `h0`.
pub fn cone_shoot(e: &Exponents, h0: f64, tol: f64) -> Result<ShotResult> {
    if !(h0 > 0.0) || !h0.is_finite() {
        return Err(Error::Domain(format!("axis value h0 = {h0} must be positive")));
    }
    if e.n < 3 {
        return Err(Error::Domain("cone shooting needs n >= 3".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let (n, alpha) = (e.n, e.alpha);
    let c0 = axis_curvature(n, alpha, h0);
    let th_start = 1e-5;
    let y0 = [h0 + 0.5 * c0 * th_start * th_start, c0 * th_start];
    let h_switch = 0.05 * h0.min(1.0);
    let theta_end = PI - 1e-6;
    let opts = OdeOptions { h_init: 1e-6, h_max: 0.05, ..OdeOptions::with_tol(tol) };

    let mut switched = false;
    let mut blown = None;
    let angular = integrate(
        |t, y| [y[1], cone_rhs(n, alpha, t, y[0], y[1])],
        th_start,
        y0,
        theta_end,
        &opts,
        DenseKind::SecondOrder,
        |st: &Step| {
            if st.y1[1].abs() > BLOW_UP || st.y1[0].abs() > BLOW_UP {
                blown = Some(st.t1);
                Control::Stop
            } else if st.y1[0] < h_switch && st.y1[1] < 0.0 {
                switched = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    if let Some(t) = blown {
        return Err(Error::Divergence(format!("|h'| exceeds {BLOW_UP:e} at theta = {t} (h0 = {h0})")));
    }
    if !switched {
        return Ok(ShotResult::NoFreeBoundary { h0, theta_end: angular.t_end() });
    }

    // Locate h = h_switch inside the last step.
    let last = *angular.steps.last().expect("at least one step");
    let (mut a, mut b) = (last.t0, last.t1);
    let hval = |t: f64| last.eval_second_order(t)[0] - h_switch;
    if hval(a) < 0.0 {
        return Err(Error::Evaluation("switching level crossed before the final step".into()));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if hval(m) >= 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
    }
    let theta_switch = 0.5 * (a + b);
    let [hs, dhs, _] = last.eval_second_order(theta_switch);
    let mut angular = angular;
    if let Some(st) = angular.steps.last_mut() {
        st.t1 = theta_switch;
        st.y1 = [hs, dhs];
    }
    let ha = if alpha == 0.0 { 1.0 } else { hs.powf(alpha) };
    let k_switch = (1.0 - hs * hs - dhs * dhs) * ha;

    let mut accepted: Vec<Step> = Vec::new();
    let mut turned = false;
    let nopts = OdeOptions { h_init: 1e-3 * h_switch, h_max: 0.1 * h_switch, ..OdeOptions::with_tol(tol) };
    let normal = integrate(
        |hh, y| normal_rhs(n, alpha, hh, y[0], y[1]),
        hs,
        [theta_switch, k_switch],
        H_FLOOR * h_switch,
        &nopts,
        DenseKind::FirstOrder,
        |st: &Step| {
            accepted.push(*st);
            // h'^2 = P / h^alpha; stop once the slope has all but vanished.
            let hh = st.t1;
            let ha = if alpha == 0.0 { 1.0 } else { hh.powf(alpha) };
            let p = ha * (1.0 - hh * hh) - st.y1[1];
            if p <= TURNING_SLOPE2 * ha {
                turned = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    let (normal, approach) = match normal {
        Ok(tr) if turned => (tr, Approach::TurningPoint),
        Ok(tr) => (tr, Approach::Crossing),
        // Steps can also stall just before a turning point, where dtheta/dh
        // has an inverse square-root singularity.
        Err(Error::StepUnderflow(at)) => {
            let st = *accepted.last().ok_or_else(|| Error::Evaluation("normal-form integration made no progress".into()))?;
            let hh = st.t1;
            let ha = if alpha == 0.0 { 1.0 } else { hh.powf(alpha) };
            let p = ha * (1.0 - hh * hh) - st.y1[1];
            if p > 1e-2 * ha {
                return Err(Error::StepUnderflow(at));
            }
            (Trajectory { kind: DenseKind::FirstOrder, steps: accepted }, Approach::TurningPoint)
        }
        Err(other) => return Err(other),
    };
    let [theta0, k_end] = normal.last_state();
    let slope_mismatch = match approach {
        Approach::Crossing => {
            if alpha == 0.0 {
                Some(1.0 - (1.0 - k_end).max(0.0).sqrt())
            } else if k_end == 0.0 {
                Some(0.0)
            } else {
                None
            }
        }
        Approach::TurningPoint => None,
    };
    let mismatch = match (alpha == 0.0, slope_mismatch) {
        (true, Some(m)) => m,
        _ => k_end,
    };
    Ok(ShotResult::Profile(Box::new(ConeProfile {
        exponents: *e,
        h0,
        theta0,
        mismatch,
        slope_mismatch,
        approach,
        h_switch,
        theta_switch,
        angular,
        normal,
    })))
}

impl ConeProfile {
    /// `(h, h')` at polar angle `theta`; zero beyond `theta0`.
    pub fn eval(&self, theta: f64) -> [f64; 2] {
        let (n, alpha) = (self.exponents.n, self.exponents.alpha);
        if theta <= 0.0 {
            return [self.h0, 0.0];
        }
        let t_start = self.angular.t_start();
        if theta < t_start {
            let c0 = axis_curvature(n, alpha, self.h0);
            return [self.h0 + 0.5 * c0 * theta * theta, c0 * theta];
        }
        if theta <= self.theta_switch {
            return self.angular.eval(theta);
        }
        if theta >= self.theta0 {
            return [0.0, 0.0];
        }
        // Invert the monotone map h -> theta(h) on the normal-form branch.
        let (mut lo, mut hi) = (self.normal.t_end(), self.h_switch);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.normal.eval(mid)[0] > theta {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.max(1e-300) {
                break;
            }
        }
        let h = 0.5 * (lo + hi);
        let k = self.normal.eval(h)[1];
        let ha = if alpha == 0.0 { 1.0 } else { h.powf(alpha) };
        let p = (ha * (1.0 - h * h) - k).max(0.0);
        [h, -(p / ha).sqrt()]
    }

    /// Sample `theta, h, h'` at `count` equispaced angles in `[0, theta0]`.
    pub fn samples(&self, count: usize) -> Vec<[f64; 3]> {
        let count = count.max(2);
        (0..count)
            .map(|k| {
                let th = self.theta0 * k as f64 / (count - 1) as f64;
                let [h, dh] = self.eval(th);
                [th, h, dh]
            })
            .collect()
    }

    pub fn is_converged(&self, tol: f64) -> bool {
        self.approach == Approach::Crossing && self.mismatch.abs() <= tol
    }

    /// The flat profile `h = cos(theta)` with `theta0 = pi/2`.
    pub fn is_flat(&self, tol: f64) -> bool {
        (self.theta0 - 0.5 * PI).abs() <= tol && (self.h0 - 1.0).abs() <= tol
    }

    /// `v = r h(theta)` on an axial grid with vertex at `(0, zc)`, polar angle
    /// measured from the positive z axis, with analytic gradient.
    pub fn to_field(&self, grid: &AxisymGrid, zc: f64) -> Result<ScalarField> {
        ScalarField::from_fn_with_gradient(grid, |t, z| {
            let zz = z - zc;
            let r = t.hypot(zz);
            if r == 0.0 {
                return (0.0, [0.0, 0.0]);
            }
            let th = t.atan2(zz);
            if th >= self.theta0 {
                return (0.0, [0.0, 0.0]);
            }
            let [h, dh] = self.eval(th);
            // grad(r h) = h e_r + h' e_theta with e_r = (t, zz)/r, e_theta = (zz, -t)/r.
            let gt = h * t / r + dh * zz / r;
            let gz = h * zz / r - dh * t / r;
            ((r * h).max(0.0), [gt, gz])
        })
    }
}

/// Bisection on a shooting function with a sign change on `[lo, hi]`.
pub fn bisect_root(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!("no sign change on [{a}, {b}]: m = {fa:e}, {fb:e}")));
    }
    let mut best = (a, fa);
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm.abs() < best.1.abs() {
            best = (m, fm);
        }
        if fm.abs() <= tol {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a <= 2.0 * f64::EPSILON * b.abs() {
            break;
        }
    }
    Err(Error::Solver { message: format!("bisection stalled near h0 = {}", best.0), residual: best.1.abs() })
}

/// Bisect the axis value on `bracket` until `|mismatch| <= tol`.
pub fn cone_solve(e: &Exponents, bracket: (f64, f64), tol: f64) -> Result<ConeProfile> {
    let ode_tol = (1e-3 * tol).clamp(1e-13, 1e-10);
    let shoot = |h0: f64| -> Result<f64> {
        cone_shoot(e, h0, ode_tol)?
            .mismatch()
            .ok_or_else(|| Error::Bracket(format!("no free boundary for h0 = {h0}")))
    };
    let root = bisect_root(shoot, bracket.0, bracket.1, tol, 200)?;
    match cone_shoot(e, root, ode_tol)? {
        ShotResult::Profile(p) if p.approach == Approach::Crossing => Ok(*p),
        _ => Err(Error::Solver { message: format!("root h0 = {root} does not end in a crossing"), residual: f64::NAN }),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanEntry {
    pub h0: f64,
    /// `None` when the trajectory has no free boundary or failed.
    pub mismatch: Option<f64>,
    pub theta0: Option<f64>,
    pub outcome: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoundCone {
    pub h0: f64,
    pub theta0: f64,
    pub mismatch: f64,
    pub flat: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeScan {
    pub exponents: Exponents,
    pub h0_min: f64,
    pub h0_max: f64,
    pub samples: usize,
    pub tol: f64,
    pub entries: Vec<ScanEntry>,
    pub brackets: Vec<(f64, f64)>,
    pub cones: Vec<FoundCone>,
    /// Brackets whose bisection did not converge to a crossing.
    pub failed_brackets: Vec<(f64, f64, String)>,
}

impl ConeScan {
    pub fn non_flat(&self) -> impl Iterator<Item = &FoundCone> {
        self.cones.iter().filter(|c| !c.flat)
    }

    /// Summary line used in reports and manifests.
    pub fn verdict(&self) -> String {
        let nf = self.non_flat().count();
        if nf == 0 {
            format!(
                "none found in scanned range: no non-flat cone for h0 in [{}, {}] ({} samples)",
                self.h0_min, self.h0_max, self.samples
            )
        } else {
            format!("{nf} non-flat cone(s) found for h0 in [{}, {}]", self.h0_min, self.h0_max)
        }
    }
}

/// Log-spaced axis values `h0` in `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

/// Shoot over a log-spaced `h0` table, bracket sign changes of the mismatch
/// and bisect each bracket. Trajectories run in parallel; results are kept
/// in `h0` order.
pub fn cone_scan(e: &Exponents, h0_min: f64, h0_max: f64, samples: usize, tol: f64) -> Result<ConeScan> {
    if !(h0_min > 0.0 && h0_max > h0_min) {
        return Err(Error::Domain("scan range must satisfy 0 < h0_min < h0_max".into()));
    }
    let ode_tol = (1e-3 * tol).clamp(1e-13, 1e-10);
    let h0s = log_spaced(h0_min, h0_max, samples);
    let entries: Vec<ScanEntry> = h0s
        .par_iter()
        .map(|&h0| match cone_shoot(e, h0, ode_tol) {
            Ok(ShotResult::Profile(p)) => ScanEntry {
                h0,
                mismatch: Some(p.mismatch),
                theta0: Some(p.theta0),
                outcome: match p.approach {
                    Approach::Crossing => "crossing".into(),
                    Approach::TurningPoint => "turning-point".into(),
                },
            },
            Ok(ShotResult::NoFreeBoundary { .. }) => ScanEntry { h0, mismatch: None, theta0: None, outcome: "no-free-boundary".into() },
            Err(err) => ScanEntry { h0, mismatch: None, theta0: None, outcome: format!("failed: {err}") },
        })
        .collect();
    let mut brackets = Vec::new();
    for w in entries.windows(2) {
        if let (Some(a), Some(b)) = (w[0].mismatch, w[1].mismatch) {
            if a == 0.0 {
                brackets.push((w[0].h0, w[0].h0));
            } else if a.signum() != b.signum() && b != 0.0 {
                brackets.push((w[0].h0, w[1].h0));
            }
        }
    }
    if let Some(last) = entries.last() {
        if last.mismatch == Some(0.0) {
            brackets.push((last.h0, last.h0));
        }
    }
    let solved: Vec<std::result::Result<ConeProfile, (f64, f64, String)>> = brackets
        .par_iter()
        .map(|&(a, b)| {
            if a == b {
                match cone_shoot(e, a, ode_tol) {
                    Ok(ShotResult::Profile(p)) => Ok(*p),
                    Ok(_) => Err((a, b, "no free boundary".into())),
                    Err(err) => Err((a, b, err.to_string())),
                }
            } else {
                cone_solve(e, (a, b), tol).map_err(|err| (a, b, err.to_string()))
            }
        })
        .collect();
    let mut cones = Vec::new();
    let mut failed_brackets = Vec::new();
    for s in solved {
        match s {
            Ok(p) => cones.push(FoundCone { h0: p.h0, theta0: p.theta0, mismatch: p.mismatch, flat: p.is_flat(1e-6) }),
            Err(f) => failed_brackets.push(f),
        }
    }
    Ok(ConeScan { exponents: *e, h0_min, h0_max, samples, tol, entries, brackets, cones, failed_brackets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::exponents_from_alpha;

    #[test]
    fn flat_cone_is_a_root() {
        for alpha in [0.0, 0.25, 1.0] {
            let e = exponents_from_alpha(alpha, 3).unwrap();
            let ShotResult::Profile(p) = cone_shoot(&e, 1.0, 1e-12).unwrap() else { panic!("expected a crossing") };
            assert!((p.theta0 - 0.5 * PI).abs() < 1e-8, "alpha {alpha}: theta0 {}", p.theta0);
            assert!(p.mismatch.abs() < 1e-8, "alpha {alpha}: m {}", p.mismatch);
            for th in [0.3, 1.0, 1.5, 1.56] {
                let [h, dh] = p.eval(th);
                assert!((h - th.cos()).abs() < 1e-8 && (dh + th.sin()).abs() < 1e-6, "theta {th}");
            }
        }
    }

    #[test]
    fn synthetic_bisection() {
        let r = bisect_root(|x| Ok(x - 0.5), 0.0, 1.0, 1e-12, 200).unwrap();
        assert!((r - 0.5).abs() <= 1e-12);
        assert!(matches!(bisect_root(|x| Ok(x + 1.0), 0.0, 1.0, 1e-12, 200), Err(Error::Bracket(_))));
    }

    #[test]
    fn steep_start_crosses() {
        let e = exponents_from_alpha(0.25, 3).unwrap();
        let h0 = 5.0;
        assert!(axis_curvature(3, 0.25, h0) < 0.0);
        match cone_shoot(&e, h0, 1e-10) {
            Ok(ShotResult::Profile(p)) => assert!(p.theta0 > 0.0 && p.theta0 < PI),
            Err(Error::Divergence(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
