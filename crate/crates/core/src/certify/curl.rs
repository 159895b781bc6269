//! Curl `Y` defined by `i_Y mu = (d alpha)^n`, and parallelism with `X`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{same_chart, KForm, VectorField};

/// Symbolic curl: `Y^i = (-1)^i [(d alpha)^n]_{omit i} / m` with `mu = m dx_0 ^ ... ^ dx_{d-1}`.
pub fn curl(alpha: &KForm, mu: &KForm) -> Result<VectorField> {
    same_chart(alpha.chart(), mu.chart())?;
    let d = alpha.chart().dim();
    if d.is_multiple_of(2) {
        return Err(Error::Param(format!("curl needs an odd dimension, got {d}")));
    }
    let m = mu.top_coefficient()?;
    if m.as_const() == Some(0.0) {
        return Err(Error::Degenerate("mu vanishes identically".into()));
    }
    let w = alpha.d().power((d - 1) / 2)?;
    let comps = (0..d)
        .map(|i| {
            let idx: Vec<usize> = (0..d).filter(|&j| j != i).collect();
            let c = w.coeff(&idx);
            let c = if i % 2 == 0 { c } else { -c };
            if c.is_zero() || m.as_const() == Some(1.0) {
                c
            } else {
                c.quotient(&m)
            }
        })
        .collect();
    VectorField::new(alpha.chart().clone(), comps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParallelismOptions {
    /// Curl magnitude (sup norm) at or below which a point counts as degenerate.
    pub curl_tol: f64,
    /// Largest acceptable angle at nondegenerate points.
    pub angle_tol: f64,
}

impl Default for ParallelismOptions {
    fn default() -> Self {
        ParallelismOptions {
            curl_tol: 1e-10,
            angle_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parallelism {
    pub samples: usize,
    pub nondegenerate: usize,
    pub degenerate: usize,
    /// Largest angle between `X` and its curl at nondegenerate points (radians).
    pub max_angle: f64,
    pub max_angle_location: Vec<f64>,
    /// Largest curl sup norm at degenerate points.
    pub max_degenerate_curl: f64,
    /// Range of the proportionality factor `f = X.Y / |X|^2`.
    pub f_range: (f64, f64),
    /// Largest spread of the componentwise ratios `Y_i / X_i` at one point.
    pub max_f_spread: f64,
    pub options: ParallelismOptions,
    pub parallel: bool,
}

/// Angles between `X` and `curl alpha` over `pts`.
pub fn beltrami_parallelism(x: &VectorField, alpha: &KForm, mu: &KForm, pts: &[Vec<f64>], opts: ParallelismOptions) -> Result<Parallelism> {
    same_chart(x.chart(), alpha.chart())?;
    let y = curl(alpha, mu)?;
    let xt = x.compile();
    let yt = y.compile();
    struct Pt {
        curl: f64,
        angle: f64,
        f: f64,
        spread: f64,
    }
    let per: Vec<Pt> = pts
        .par_iter()
        .map(|p| {
            let xv = xt.eval(p);
            let yv = yt.eval(p);
            let curl = yv.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
            let dot: f64 = xv.iter().zip(&yv).map(|(a, b)| a * b).sum();
            let mut wedge = 0.0;
            for i in 0..xv.len() {
                for j in i + 1..xv.len() {
                    wedge += (xv[i] * yv[j] - xv[j] * yv[i]).powi(2);
                }
            }
            let angle = wedge.sqrt().atan2(dot.abs());
            let xn2: f64 = xv.iter().map(|a| a * a).sum();
            let xmax = xv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let ratios: Vec<f64> = xv
                .iter()
                .zip(&yv)
                .filter(|(a, _)| a.abs() > 1e-8 * xmax)
                .map(|(a, b)| b / a)
                .collect();
            let spread = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            Pt {
                curl,
                angle,
                f: dot / xn2,
                spread: if ratios.is_empty() { 0.0 } else { spread },
            }
        })
        .collect();
    let mut out = Parallelism {
        samples: pts.len(),
        nondegenerate: 0,
        degenerate: 0,
        max_angle: 0.0,
        max_angle_location: vec![],
        max_degenerate_curl: 0.0,
        f_range: (f64::INFINITY, f64::NEG_INFINITY),
        max_f_spread: 0.0,
        options: opts,
        parallel: true,
    };
    let mut bad = false;
    for (q, p) in per.iter().zip(pts) {
        if q.curl.is_nan() {
            bad = true;
        } else if q.curl <= opts.curl_tol {
            out.degenerate += 1;
            out.max_degenerate_curl = out.max_degenerate_curl.max(q.curl);
        } else {
            out.nondegenerate += 1;
            if out.max_angle_location.is_empty() || q.angle > out.max_angle {
                out.max_angle = q.angle;
                out.max_angle_location = p.clone();
            }
            out.f_range = (out.f_range.0.min(q.f), out.f_range.1.max(q.f));
            out.max_f_spread = out.max_f_spread.max(q.spread);
        }
    }
    if out.nondegenerate == 0 {
        out.f_range = (0.0, 0.0);
    }
    out.parallel = !bad && out.max_angle < opts.angle_tol;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Chart, Factor};
    use crate::construct::Construction;
    use crate::expr::Expr;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn t3_curl_is_two_pi_x_b() {
        let m = Construction::T3ContactBinding.build().unwrap();
        let y = curl(&m.alpha, m.mu.as_ref().unwrap()).unwrap();
        for p in [[0.3, 0.7, 0.11], [0.9, 0.1, 0.62]] {
            let (yv, xv) = (y.eval(&p), m.x.eval(&p));
            for (a, b) in yv.iter().zip(xv) {
                assert!((a - 2.0 * PI * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn negative_control_is_not_parallel() {
        let chart = Arc::new(
            Chart::new(vec![
                Factor::periodic("theta", 2.0 * PI),
                Factor::interval("x", -1.0, 1.0),
                Factor::interval("y", -1.0, 1.0),
            ])
            .unwrap(),
        );
        let x = VectorField::new(chart.clone(), vec![Expr::one(), Expr::zero(), Expr::one()]).unwrap();
        let alpha = KForm::dx(chart.clone(), 0)
            .add(&KForm::dx(chart.clone(), 2).scale(&Expr::coord(1)))
            .unwrap();
        let pts = vec![vec![0.1, 0.2, 0.3], vec![1.0, -0.5, 0.5]];
        let r = beltrami_parallelism(&x, &alpha, &KForm::volume(chart), &pts, ParallelismOptions::default()).unwrap();
        assert!(!r.parallel);
        assert!((r.max_angle - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn even_dimension_is_rejected() {
        let m = Construction::vp_plug(4).build().unwrap();
        assert!(curl(&m.alpha, m.mu.as_ref().unwrap()).is_err());
    }
}
