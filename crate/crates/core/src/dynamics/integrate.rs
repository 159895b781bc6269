//! Dormand-Prince 5(4) with Hairer's continuous extension.
//!
//! The state is integrated unwrapped; periodic coordinates are reduced only
//! when the field is evaluated and when samples are stored, so angular
//! displacement is never lost.

use serde::{Deserialize, Serialize};

use crate::chart::FactorKind;
use crate::error::{Error, Result};
use crate::expr::Tape;
use crate::field::{ChartRef, VectorField};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Stage nodes; the last row of `A` sums to exactly one.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

pub const METHOD: &str = "dopri5";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Step ceiling. Fields here are often exactly constant next to compact
    /// features, where the error estimate vanishes; without a ceiling a
    /// single step can jump clean over a bump.
    pub h_max: f64,
    pub max_steps: usize,
    /// Stop when any coordinate exceeds this magnitude.
    pub blowup: f64,
    /// Stop where the orbit leaves an interval factor of the chart.
    pub stop_at_faces: bool,
    /// Keep every accepted step in the trajectory.
    pub record: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h_max: 0.02,
            max_steps: 20_000_000,
            blowup: 1e8,
            stop_at_faces: true,
            record: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    TimeBudget,
    /// Left the chart through the face `coord = value`.
    FaceExit {
        coord: usize,
        value: f64,
    },
    BlowUp,
    /// Stopped by the caller (section crossing, event).
    Event,
}

/// One accepted step with its dense output.
pub struct Step<'a> {
    pub t0: f64,
    /// Full step length (the interpolant is parametrized over `[t0, t0 + h]`).
    pub h: f64,
    /// End of the valid part of the step (earlier than `t0 + h` after a face exit).
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub f0: &'a [f64],
    rcont: &'a [Vec<f64>; 5],
}

impl Step<'_> {
    fn theta(&self, t: f64) -> f64 {
        if self.h == 0.0 {
            0.0
        } else {
            (t - self.t0) / self.h
        }
    }

    pub fn comp(&self, i: usize, t: f64) -> f64 {
        let s = self.theta(t);
        let s1 = 1.0 - s;
        let r = self.rcont;
        r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])))
    }

    pub fn comp_rate(&self, i: usize, t: f64) -> f64 {
        let s = self.theta(t);
        let s1 = 1.0 - s;
        let r = self.rcont;
        (r[1][i] + (1.0 - 2.0 * s) * r[2][i] + s * (2.0 - 3.0 * s) * r[3][i] + 2.0 * s * s1 * (1.0 - 2.0 * s) * r[4][i]) / self.h
    }

    pub fn state(&self, t: f64) -> Vec<f64> {
        (0..self.y0.len()).map(|i| self.comp(i, t)).collect()
    }

    /// Earliest `t` in `[ta, tb]` where component `i` equals `target`,
    /// given a sign change over the bracket. Bisection followed by
    /// safeguarded Newton on the interpolant.
    pub fn locate(&self, i: usize, target: f64, ta: f64, tb: f64) -> Option<f64> {
        let g = |t: f64| self.comp(i, t) - target;
        let (mut a, mut b) = (ta, tb);
        let (mut ga, gb) = (g(a), g(b));
        if ga == 0.0 {
            return Some(a);
        }
        if gb == 0.0 {
            return Some(b);
        }
        if ga.signum() == gb.signum() {
            return None;
        }
        for _ in 0..12 {
            let m = 0.5 * (a + b);
            let gm = g(m);
            if gm == 0.0 {
                return Some(m);
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        let mut t = 0.5 * (a + b);
        for _ in 0..60 {
            let gt = g(t);
            if gt == 0.0 {
                return Some(t);
            }
            if gt.signum() == ga.signum() {
                a = t;
                ga = gt;
            } else {
                b = t;
            }
            let rate = self.comp_rate(i, t);
            let mut next = t - gt / rate;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) || b - a <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                return Some(next);
            }
            t = next;
        }
        Some(t)
    }
}

/// What the observer wants after seeing a step.
pub enum Control {
    Continue,
    Stop { t: f64, y: Vec<f64> },
}

/// Final state of a run.
#[derive(Clone, Debug)]
pub struct RunEnd {
    pub t: f64,
    pub y: Vec<f64>,
    pub termination: Termination,
    pub stats: StepStats,
}

/// A compiled vector field on its chart, ready to integrate.
#[derive(Clone, Debug)]
pub struct Flow {
    chart: ChartRef,
    tape: Tape,
    dim: usize,
    periods: Vec<Option<f64>>,
}

impl Flow {
    pub fn new(x: &VectorField) -> Flow {
        let chart = x.chart().clone();
        let periods = chart
            .factors()
            .iter()
            .map(|f| match f.kind {
                FactorKind::Periodic { period } => Some(period),
                FactorKind::Interval { .. } => None,
            })
            .collect();
        Flow {
            dim: chart.dim(),
            tape: x.compile(),
            chart,
            periods,
        }
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `X` at an unwrapped point.
    pub fn eval_into(&self, y: &[f64], wrapped: &mut [f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        for ((w, v), per) in wrapped.iter_mut().zip(y).zip(&self.periods) {
            *w = match per {
                Some(p) => v.rem_euclid(*p),
                None => *v,
            };
        }
        self.tape.eval_into(wrapped, scratch, out);
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        let mut out = vec![0.0; self.dim];
        self.eval_into(y, &mut w, &mut Vec::new(), &mut out);
        out
    }

    /// Wrapped point and winding counts of an unwrapped state.
    pub fn split(&self, y: &[f64]) -> (Vec<f64>, Vec<i64>) {
        let mut p = Vec::with_capacity(self.dim);
        let mut w = Vec::new();
        for (v, per) in y.iter().zip(&self.periods) {
            match per {
                Some(per) => {
                    let k = (v / per).floor();
                    let mut r = v - k * per;
                    let mut k = k as i64;
                    if r >= *per {
                        r -= per;
                        k += 1;
                    }
                    p.push(r.max(0.0));
                    w.push(k);
                }
                None => p.push(*v),
            }
        }
        (p, w)
    }

    pub fn periodic_coords(&self) -> Vec<usize> {
        (0..self.dim).filter(|&i| self.periods[i].is_some()).collect()
    }

    pub fn period(&self, i: usize) -> Option<f64> {
        self.periods[i]
    }

    fn initial_step(&self, y0: &[f64], f0: &[f64], opts: &IntegrateOptions, ws: &mut Work) -> f64 {
        let sc = |y: f64| opts.atol + opts.rtol * y.abs();
        let d0 = rms(y0.iter().map(|y| y / sc(*y)));
        let d1 = rms(f0.iter().zip(y0).map(|(f, y)| f / sc(*y)));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(opts.h_max);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; self.dim];
        self.eval_into(&y1, &mut ws.wrapped, &mut ws.scratch, &mut f1);
        let d2 = rms(f1.iter().zip(f0).zip(y0).map(|((a, b), y)| (a - b) / sc(*y))) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(opts.h_max)
    }

    /// Integrate from `y0` for time `t_end`, calling `observe` on every
    /// accepted step (truncated at a face exit) until it asks to stop.
    pub fn run<F>(&self, y0: &[f64], t_end: f64, opts: &IntegrateOptions, mut observe: F) -> Result<RunEnd>
    where
        F: FnMut(&Step) -> Control,
    {
        if !(t_end > 0.0) {
            return Err(Error::Param(format!("integration time must be positive, got {t_end}")));
        }
        if y0.len() != self.dim {
            return Err(Error::Param(format!("point has {} coordinates, chart has {}", y0.len(), self.dim)));
        }
        let d = self.dim;
        let mut ws = Work::new(d);
        let mut y = y0.to_vec();
        let mut t = 0.0;
        let mut f0 = vec![0.0; d];
        self.eval_into(&y, &mut ws.wrapped, &mut ws.scratch, &mut f0);
        let mut stats = StepStats {
            evaluations: 1,
            h_min: f64::INFINITY,
            ..Default::default()
        };
        let mut h = self.initial_step(&y, &f0, opts, &mut ws);
        stats.evaluations += 1;
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; d]);
        let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; d]);
        let mut ynew = vec![0.0; d];
        let mut ytmp = vec![0.0; d];
        let mut last_rejected = false;
        loop {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Integration(format!("step budget exhausted at t = {t}, y = {y:?}")));
            }
            let mut last = false;
            if t + h >= t_end {
                h = t_end - t;
                last = true;
            }
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration(format!("step size underflow (h = {h:e}) at t = {t}, y = {y:?}")));
            }
            k[0].copy_from_slice(&f0);
            for s in 1..7 {
                for i in 0..d {
                    // Increments relative to k1 keep constant fields exact.
                    let mut acc = 0.0;
                    for (j, a) in A[s][1..s].iter().enumerate() {
                        acc += a * (k[j + 1][i] - k[0][i]);
                    }
                    let acc = C[s] * k[0][i] + acc;
                    ytmp[i] = y[i] + h * acc;
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                self.eval_into(&ytmp, &mut ws.wrapped, &mut ws.scratch, &mut tail[0]);
                if s == 6 {
                    ynew.copy_from_slice(&ytmp);
                }
            }
            stats.evaluations += 6;
            let mut err = 0.0;
            for i in 0..d {
                let mut e = 0.0;
                for s in 0..7 {
                    e += E[s] * k[s][i];
                }
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err += (h * e / sc).powi(2);
            }
            let err = (err / d as f64).sqrt();
            if !err.is_finite() {
                stats.rejected += 1;
                h *= 0.2;
                last_rejected = true;
                continue;
            }
            if err > 1.0 {
                stats.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).max(0.2);
                last_rejected = true;
                continue;
            }
            stats.accepted += 1;
            stats.h_min = stats.h_min.min(h);
            stats.h_max = stats.h_max.max(h);
            for i in 0..d {
                let dy = ynew[i] - y[i];
                let bspl = h * k[0][i] - dy;
                rcont[0][i] = y[i];
                rcont[1][i] = dy;
                rcont[2][i] = bspl;
                rcont[3][i] = dy - h * k[6][i] - bspl;
                let mut acc = 0.0;
                for s in 0..7 {
                    acc += D[s] * k[s][i];
                }
                rcont[4][i] = h * acc;
            }
            let mut step = Step {
                t0: t,
                h,
                t1: t + h,
                y0: &y,
                y1: &ynew,
                f0: &k[0],
                rcont: &rcont,
            };
            let mut face = None;
            if opts.stop_at_faces {
                for (i, f) in self.chart.factors().iter().enumerate() {
                    if let FactorKind::Interval { lo, hi } = f.kind {
                        let v = ynew[i];
                        let bound = if v > hi {
                            hi
                        } else if v < lo {
                            lo
                        } else {
                            continue;
                        };
                        if let Some(tc) = step.locate(i, bound, t, t + h) {
                            if face.is_none_or(|(tf, _, _)| tc < tf) {
                                face = Some((tc, i, bound));
                            }
                        }
                    }
                }
            }
            if let Some((tf, _, _)) = face {
                step.t1 = tf;
            }
            if let Control::Stop { t: ts, y: ys } = observe(&step) {
                return Ok(RunEnd {
                    t: ts,
                    y: ys,
                    termination: Termination::Event,
                    stats,
                });
            }
            if let Some((tf, i, bound)) = face {
                let mut yf = step.state(tf);
                yf[i] = bound;
                return Ok(RunEnd {
                    t: tf,
                    y: yf,
                    termination: Termination::FaceExit { coord: i, value: bound },
                    stats,
                });
            }
            t += h;
            std::mem::swap(&mut y, &mut ynew);
            f0.copy_from_slice(&k[6]);
            if y.iter().any(|v| !(v.abs() <= opts.blowup)) {
                return Ok(RunEnd {
                    t,
                    y,
                    termination: Termination::BlowUp,
                    stats,
                });
            }
            if last {
                return Ok(RunEnd {
                    t: t_end,
                    y,
                    termination: Termination::TimeBudget,
                    stats,
                });
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(opts.h_max);
        }
    }
}

struct Work {
    wrapped: Vec<f64>,
    scratch: Vec<f64>,
}

impl Work {
    fn new(d: usize) -> Work {
        Work {
            wrapped: vec![0.0; d],
            scratch: Vec::new(),
        }
    }
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (s / n.max(1) as f64).sqrt()
}

/// Sampled orbit. Points are stored wrapped; `windings[k][j]` counts the
/// full turns of the `j`-th periodic coordinate at sample `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub periodic: Vec<usize>,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub windings: Vec<Vec<i64>>,
    pub method: String,
    pub rtol: f64,
    pub atol: f64,
    pub stats: StepStats,
    pub termination: Termination,
}

impl Trajectory {
    /// Unwrapped coordinates of sample `k`.
    pub fn unwrapped(&self, k: usize, periods: &[Option<f64>]) -> Vec<f64> {
        let mut p = self.points[k].clone();
        for (j, &i) in self.periodic.iter().enumerate() {
            if let Some(per) = periods[i] {
                p[i] += self.windings[k][j] as f64 * per;
            }
        }
        p
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("trajectory has at least its initial point")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least its initial point")
    }
}

/// Orbit of `X` through `p0` for time `t_end` (or until a face exit or blow-up).
pub fn integrate(x: &VectorField, p0: &[f64], t_end: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
    let flow = Flow::new(x);
    if !x.chart().contains(p0, 0.0) {
        return Err(Error::Param(format!("start point {p0:?} is outside the chart")));
    }
    let mut times = vec![0.0];
    let (p, w) = flow.split(p0);
    let mut points = vec![p];
    let mut windings = vec![w];
    let end = flow.run(p0, t_end, opts, |s| {
        if opts.record && s.t1 == s.t0 + s.h {
            let (p, w) = flow.split(s.y1);
            times.push(s.t1);
            points.push(p);
            windings.push(w);
        }
        Control::Continue
    })?;
    if times.last() != Some(&end.t) {
        let (p, w) = flow.split(&end.y);
        if times.last().is_some_and(|t| *t >= end.t) {
            times.pop();
            points.pop();
            windings.pop();
        }
        times.push(end.t);
        points.push(p);
        windings.push(w);
    }
    Ok(Trajectory {
        names: x.chart().names().into_iter().map(String::from).collect(),
        periodic: flow.periodic_coords(),
        times,
        points,
        windings,
        method: METHOD.into(),
        rtol: opts.rtol,
        atol: opts.atol,
        stats: end.stats,
        termination: end.termination,
    })
}

/// Endpoint of the time-`t` flow, ignoring chart faces (unwrapped).
pub fn flow_map(flow: &Flow, p0: &[f64], t: f64, opts: &IntegrateOptions) -> Result<Vec<f64>> {
    let opts = IntegrateOptions {
        stop_at_faces: false,
        record: false,
        ..*opts
    };
    let end = flow.run(p0, t, &opts, |_| Control::Continue)?;
    match end.termination {
        Termination::TimeBudget => Ok(end.y),
        other => Err(Error::Integration(format!("flow map from {p0:?} ended early: {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Chart, Factor};
    use crate::construct::Construction;
    use crate::expr::Expr;
    use std::sync::Arc;

    fn line_chart() -> ChartRef {
        Arc::new(Chart::new(vec![Factor::interval("x", -10.0, 10.0), Factor::interval("y", -10.0, 10.0)]).unwrap())
    }

    #[test]
    fn suspension_theta_is_time() {
        let m = Construction::suspension(vec![0.3, 0.7]).build().unwrap();
        let tr = integrate(&m.x, &[0.0, 0.1, 0.2], 100.0, &IntegrateOptions::default()).unwrap();
        let periods = [Some(1.0); 3];
        for k in 0..tr.times.len() {
            let u = tr.unwrapped(k, &periods);
            assert!((u[0] - tr.times[k]).abs() < 1e-12);
        }
        assert_eq!(tr.end_time(), 100.0);
        assert_eq!(tr.termination, Termination::TimeBudget);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let c = line_chart();
        let x = VectorField::new(c, vec![Expr::coord(1), -Expr::coord(0)]).unwrap();
        let flow = Flow::new(&x);
        let mut worst = 0.0f64;
        flow.run(&[1.0, 0.0], 20.0, &IntegrateOptions::default(), |s| {
            for j in 0..=10 {
                let t = s.t0 + s.h * j as f64 / 10.0;
                worst = worst.max((s.comp(0, t) - t.cos()).abs());
                worst = worst.max((s.comp_rate(0, t) + t.sin()).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn face_exit_is_located_on_the_face() {
        let c = line_chart();
        let x = VectorField::new(c, vec![Expr::one(), Expr::zero()]).unwrap();
        let tr = integrate(&x, &[0.0, 0.0], 100.0, &IntegrateOptions::default()).unwrap();
        assert_eq!(tr.termination, Termination::FaceExit { coord: 0, value: 10.0 });
        assert!((tr.end_time() - 10.0).abs() < 1e-12);
        assert_eq!(tr.last()[0], 10.0);
    }

    #[test]
    fn exponential_growth_matches_closed_form() {
        let m = Construction::round_morse(2, 0).build().unwrap();
        let p0 = [0.0, 0.1, -0.12, 0.05, 0.1];
        let tr = integrate(&m.x, &p0, 1.0, &IntegrateOptions::default()).unwrap();
        let end = tr.last();
        for i in 1..5 {
            let exact = p0[i] * (2.0 * tr.end_time()).exp();
            assert!(((end[i] - exact) / exact).abs() < 1e-8, "{} vs {exact}", end[i]);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let c = Arc::new(Chart::new(vec![Factor::periodic("x", 1.0)]).unwrap());
        let x = VectorField::new(c, vec![Expr::constant(1e6)]).unwrap();
        let opts = IntegrateOptions {
            blowup: 1e7,
            ..Default::default()
        };
        let tr = integrate(&x, &[0.0], 100.0, &opts).unwrap();
        assert_eq!(tr.termination, Termination::BlowUp);
    }

    #[test]
    fn locate_finds_interior_crossing() {
        let c = line_chart();
        let x = VectorField::new(c, vec![Expr::one(), Expr::coord(0)]).unwrap();
        let flow = Flow::new(&x);
        let mut hit = None;
        flow.run(&[0.0, 0.0], 3.0, &IntegrateOptions::default(), |s| {
            if s.y0[1] < 2.0 && s.y1[1] >= 2.0 {
                hit = s.locate(1, 2.0, s.t0, s.t1);
            }
            Control::Continue
        })
        .unwrap();
        assert!((hit.unwrap() - 2.0).abs() < 1e-10);
    }
}
