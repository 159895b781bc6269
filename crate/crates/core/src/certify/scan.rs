//! Sampled extrema of forms and scalar expressions.
//!
//! Evaluation is parallel over points; reductions run sequentially in point
//! order so ties (and therefore reported locations) are deterministic.
//! Absolute-value maxima are residual measures and are evaluated in
//! double-double arithmetic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Tape};
use crate::field::KForm;

/// An extreme value and the first sample where it occurs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub value: f64,
    pub location: Vec<f64>,
}

fn reduce(vals: Vec<f64>, pts: &[Vec<f64>], better: impl Fn(f64, f64) -> bool, init: f64) -> Extreme {
    let mut best = Extreme {
        value: init,
        location: pts.first().cloned().unwrap_or_default(),
    };
    for (v, p) in vals.into_iter().zip(pts) {
        // NaN always wins so that it cannot hide behind a finite value.
        if v.is_nan() || better(v, best.value) {
            best = Extreme {
                value: v,
                location: p.clone(),
            };
            if v.is_nan() {
                break;
            }
        }
    }
    best
}

/// Largest absolute coefficient of `form` over `pts` (0 for the zero form).
pub fn max_abs(form: &KForm, pts: &[Vec<f64>]) -> Extreme {
    if form.is_zero() {
        return Extreme {
            value: 0.0,
            location: pts.first().cloned().unwrap_or_default(),
        };
    }
    let cf = form.compile();
    let vals: Vec<f64> = pts.par_iter().map(|p| cf.sup_norm_precise(p)).collect();
    reduce(vals, pts, |a, b| a > b, 0.0)
}

/// Largest absolute value of any of `exprs` over `pts`.
pub fn max_abs_exprs(exprs: &[Expr], pts: &[Vec<f64>]) -> Extreme {
    let tape = Tape::new(exprs);
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|p| {
            tape.eval_precise(p)
                .iter()
                .fold(0.0, |m: f64, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
        })
        .collect();
    reduce(vals, pts, |a, b| a > b, 0.0)
}

/// Smallest value of `expr` over `pts`.
pub fn min_of(expr: &Expr, pts: &[Vec<f64>]) -> Extreme {
    let tape = Tape::new(std::slice::from_ref(expr));
    let vals: Vec<f64> = pts.par_iter().map(|p| tape.eval(p)[0]).collect();
    reduce(vals, pts, |a, b| a < b, f64::INFINITY)
}

/// Values of `expr` at every point, in order.
pub fn values(expr: &Expr, pts: &[Vec<f64>]) -> Vec<f64> {
    let tape = Tape::new(std::slice::from_ref(expr));
    pts.par_iter().map(|p| tape.eval(p)[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_extreme_wins_ties_and_nan_is_reported() {
        let pts: Vec<Vec<f64>> = [-1.0, 1.0, 0.5].iter().map(|&x| vec![x]).collect();
        let sq = Expr::coord(0).square();
        let lo = min_of(&(-&sq), &pts);
        assert_eq!((lo.value, lo.location.clone()), (-1.0, vec![-1.0]));
        let with_nan = max_abs_exprs(&[Expr::coord(0).sqrt()], &pts);
        assert!(with_nan.value.is_nan());
        assert_eq!(with_nan.location, vec![-1.0]);
    }
}
