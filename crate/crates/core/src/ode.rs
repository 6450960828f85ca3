//! Adaptive Dormand-Prince 5(4) integration of two-dimensional systems with
//! Hermite dense output.
//!
//! Second-order scalar equations `x'' = g(t, x, x')` are integrated as the
//! system `y = (x, x')`; their dense output is the quintic Hermite
//! interpolant built from `x, x', x''` at both ends of each step.

use crate::error::{Error, Result};

pub type State = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// For second-order systems: also require the defect
    /// `|x''_dense - g(t, x_dense, x'_dense)|` of the quintic interpolant to
    /// stay below `defect_tol * (1 + |x''|)` inside every step.
    pub defect_tol: Option<f64>,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> OdeOptions {
        OdeOptions { rtol: tol, atol: tol, h_init: 1e-6, h_max: f64::INFINITY, max_steps: 2_000_000, defect_tol: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DenseKind {
    /// Cubic Hermite in each component.
    FirstOrder,
    /// Quintic Hermite for `x` where `y = (x, x')`.
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    /// Signed step length as used by the integrator; `t1 - t0` can lose
    /// digits when `|t0|` is much larger than the step.
    pub dt: f64,
    pub y0: State,
    pub y1: State,
    pub f0: State,
    pub f1: State,
}

impl Step {
    /// Quintic coefficients of `x(t0 + s*H) - x0`, `s` in [0, 1], written
    /// in terms of differences that stay accurate for short steps.
    fn quintic(&self) -> [f64; 6] {
        let hh = self.dt;
        let (d0, a0, a1) = (hh * self.y0[1], hh * hh * self.f0[1], hh * hh * self.f1[1]);
        let jump = hh * (self.y1[1] - self.y0[1]);
        let q = (self.y1[0] - self.y0[0]) - 0.5 * hh * (self.y0[1] + self.y1[1]);
        [
            0.0,
            d0,
            0.5 * a0,
            10.0 * q + jump - 1.5 * a0 + 0.5 * a1,
            -15.0 * q - 0.5 * jump + 1.5 * a0 - a1,
            6.0 * q - 0.5 * a0 + 0.5 * a1,
        ]
    }

    /// Rounding floor of the interpolated second derivative.
    pub fn second_derivative_floor(&self) -> f64 {
        let hh = self.dt;
        64.0 * f64::EPSILON * (self.y0[0].abs() + self.y1[0].abs() + hh * (self.y0[1].abs() + self.y1[1].abs())) / (hh * hh)
    }

    /// Value, first and second derivative of the quintic interpolant.
    pub fn eval_second_order(&self, t: f64) -> [f64; 3] {
        let hh = self.dt;
        let s = (t - self.t0) / hh;
        let c = self.quintic();
        let x = self.y0[0] + ((((c[5] * s + c[4]) * s + c[3]) * s + c[2]) * s + c[1]) * s;
        let dx = (((5.0 * c[5] * s + 4.0 * c[4]) * s + 3.0 * c[3]) * s + 2.0 * c[2]) * s + c[1];
        let ddx = ((20.0 * c[5] * s + 12.0 * c[4]) * s + 6.0 * c[3]) * s + 2.0 * c[2];
        [x, dx / hh, ddx / (hh * hh)]
    }

    pub fn eval_first_order(&self, t: f64) -> State {
        let hh = self.dt;
        let s = (t - self.t0) / hh;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = [0.0; 2];
        for c in 0..2 {
            out[c] = h00 * self.y0[c] + hh * h10 * self.f0[c] + h01 * self.y1[c] + hh * h11 * self.f1[c];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: DenseKind,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.steps.first().map_or(f64::NAN, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.t1)
    }

    pub fn last_state(&self) -> State {
        self.steps.last().map_or([f64::NAN; 2], |s| s.y1)
    }

    fn locate(&self, t: f64) -> &Step {
        let forward = self.t_end() >= self.t_start();
        let k = self.steps.partition_point(|s| if forward { s.t1 < t } else { s.t1 > t });
        &self.steps[k.min(self.steps.len() - 1)]
    }

    /// Dense state `(x, x')` at `t`.
    pub fn eval(&self, t: f64) -> State {
        let s = self.locate(t);
        match self.kind {
            DenseKind::FirstOrder => s.eval_first_order(t),
            DenseKind::SecondOrder => {
                let [x, dx, _] = s.eval_second_order(t);
                [x, dx]
            }
        }
    }

    /// `x, x', x''` from the quintic interpolant (second-order systems only).
    pub fn eval_with_second(&self, t: f64) -> [f64; 3] {
        self.locate(t).eval_second_order(t)
    }
}

pub enum Control {
    Continue,
    Stop,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `t0` towards `t_end` (either direction).
///
/// `control` sees every accepted step and may stop the integration. A
/// right-hand side returning non-finite values shrinks the step; repeated
/// failure is reported as a step-size underflow.
pub fn integrate(
    f: impl Fn(f64, &State) -> State,
    t0: f64,
    y0: State,
    t_end: f64,
    opts: &OdeOptions,
    kind: DenseKind,
    mut control: impl FnMut(&Step) -> Control,
) -> Result<Trajectory> {
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut t = t0;
    let mut y = y0;
    let mut fy = f(t, &y);
    if !fy.iter().all(|v| v.is_finite()) {
        return Err(Error::Evaluation(format!("right-hand side not finite at t = {t0}")));
    }
    let mut hmag = opts.h_init.min(span).min(opts.h_max);
    let mut steps = Vec::new();
    let mut k = [[0.0; 2]; 7];
    for _ in 0..opts.max_steps {
        if (t_end - t) * dir <= 0.0 {
            break;
        }
        let remaining = (t_end - t).abs();
        let last = hmag >= remaining;
        let hs = if last { remaining } else { hmag } * dir;
        k[0] = fy;
        let mut finite = true;
        for s in 1..7 {
            let mut ys = y;
            for c in 0..2 {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[c];
                }
                ys[c] += hs * acc;
            }
            k[s] = f(t + C[s] * hs, &ys);
            if !k[s].iter().all(|v| v.is_finite()) {
                finite = false;
                break;
            }
        }
        let (err, ynew) = if finite {
            let mut ynew = y;
            for c in 0..2 {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += A[6][j] * k[j][c];
                }
                ynew[c] += hs * acc;
            }
            let mut e2 = 0.0;
            for c in 0..2 {
                let mut acc = 0.0;
                for j in 0..7 {
                    acc += E[j] * k[j][c];
                }
                let sc = opts.atol + opts.rtol * y[c].abs().max(ynew[c].abs());
                e2 += (hs * acc / sc).powi(2);
            }
            ((e2 / 2.0).sqrt(), ynew)
        } else {
            (f64::INFINITY, y)
        };
        let step = Step { t0: t, t1: if last { t_end } else { t + hs }, dt: hs, y0: y, y1: ynew, f0: fy, f1: k[6] };
        let defect = match (opts.defect_tol, kind) {
            (Some(dt), DenseKind::SecondOrder) if err <= 1.0 => {
                let mut worst: f64 = 0.0;
                for frac in [0.2, 0.5, 0.8] {
                    let tm = step.t0 + frac * step.dt;
                    let [x, dx, ddx] = step.eval_second_order(tm);
                    let g = f(tm, &[x, dx])[1];
                    let excess = ((ddx - g).abs() - step.second_derivative_floor()).max(0.0);
                    worst = worst.max(excess / (0.5 * dt * (1.0 + g.abs())));
                }
                if worst.is_finite() { worst } else { f64::INFINITY }
            }
            _ => 0.0,
        };
        if err <= 1.0 && defect <= 1.0 {
            t = step.t1;
            y = ynew;
            fy = k[6];
            steps.push(step);
            let mut factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if defect > 0.0 {
                factor = factor.min((0.9 * defect.powf(-0.25)).clamp(0.2, 5.0));
            }
            hmag = (hmag * factor).min(opts.h_max);
            if let Control::Stop = control(steps.last().unwrap()) {
                break;
            }
        } else {
            let factor = if !err.is_finite() || !defect.is_finite() {
                0.25
            } else if err > 1.0 {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                (0.9 * defect.powf(-0.25)).clamp(0.1, 0.9)
            };
            hmag *= factor;
        }
        if hmag < 1e-14 * t.abs().max(span) {
            return Err(Error::StepUnderflow(t));
        }
    }
    if steps.is_empty() {
        return Err(Error::Evaluation("integration produced no steps".into()));
    }
    Ok(Trajectory { kind, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let opts = OdeOptions::with_tol(1e-12);
        let tr = integrate(|_, y| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, &opts, DenseKind::SecondOrder, |_| Control::Continue)
            .unwrap();
        let y = tr.last_state();
        assert!((y[0] - 10f64.sin()).abs() < 1e-9);
        for &t in &[0.3, 2.7, 7.77] {
            let [x, dx, ddx] = tr.eval_with_second(t);
            assert!((x - t.sin()).abs() < 1e-9);
            assert!((dx - t.cos()).abs() < 1e-9);
            assert!((ddx + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn backward_integration() {
        let opts = OdeOptions::with_tol(1e-12);
        let tr = integrate(|_, y| [y[0], 0.0], 1.0, [1.0, 0.0], 0.0, &opts, DenseKind::FirstOrder, |_| Control::Continue).unwrap();
        assert!((tr.last_state()[0] - (-1f64).exp()).abs() < 1e-11);
        assert!((tr.eval(0.5)[0] - (-0.5f64).exp()).abs() < 1e-8);
    }
}
