//! A Riemannian metric with `g(X, .) = alpha` whose volume form is `mu`.
//!
//! Pointwise: take `X` together with a basis `k_1..k_{d-1}` of `ker alpha`
//! (Householder reflection of the normalized covector, pivoting on its
//! largest entry), declare `X` orthogonal to the kernel with
//! `g(X, X) = alpha(X)`, and put `c` times the Euclidean form in the `k`
//! basis on the kernel. The single factor `c` is fixed by the volume.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::field::{same_chart, CompiledForm, KForm, VectorField};

#[derive(Clone, Debug)]
pub struct PointwiseMetric {
    dim: usize,
    x: Tape,
    alpha: CompiledForm,
    mu: Tape,
    /// Description of the choices made on `ker alpha`.
    pub recipe: String,
}

pub fn metric_from_pair(x: &VectorField, alpha: &KForm, mu: &KForm) -> Result<PointwiseMetric> {
    same_chart(x.chart(), alpha.chart())?;
    same_chart(x.chart(), mu.chart())?;
    if alpha.degree() != 1 {
        return Err(Error::Degree {
            expected: 1,
            got: alpha.degree(),
        });
    }
    let m: Expr = mu.top_coefficient()?;
    Ok(PointwiseMetric {
        dim: x.chart().dim(),
        x: x.compile(),
        alpha: alpha.compile(),
        mu: Tape::new(&[m]),
        recipe: "g(X,X) = alpha(X), X orthogonal to ker alpha, conformal Euclidean on a Householder basis of ker alpha".into(),
    })
}

/// Orthonormal basis of the hyperplane orthogonal to `a` (nonzero).
fn kernel_basis(a: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = a.len();
    let u = a / a.norm();
    let p = u.iamax();
    let mut w = u.clone();
    w[p] += if u[p] >= 0.0 { 1.0 } else { -1.0 };
    let ww = w.dot(&w);
    (0..d)
        .filter(|&j| j != p)
        .map(|j| {
            let mut col = -(&w * (2.0 * w[j] / ww));
            col[j] += 1.0;
            col
        })
        .collect()
}

impl PointwiseMetric {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The symmetric matrix of `g` at `p`.
    pub fn eval(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        let xv = DVector::from_vec(self.x.eval(p));
        let mut a = DVector::zeros(d);
        for (idx, v) in self.alpha.indices.iter().zip(self.alpha.values(p)) {
            a[idx[0]] = v;
        }
        let ax = a.dot(&xv);
        if !(ax > 0.0) {
            return Err(Error::Degenerate(format!("alpha(X) = {ax} <= 0 at {p:?}")));
        }
        let m = self.mu.eval(p)[0];
        if !(m > 0.0) {
            return Err(Error::Degenerate(format!("mu coefficient {m} <= 0 at {p:?}")));
        }
        let mut b = DMatrix::zeros(d, d);
        b.set_column(0, &xv);
        for (j, k) in kernel_basis(&a).into_iter().enumerate() {
            b.set_column(j + 1, &k);
        }
        let lu = b.clone().lu();
        let det = lu.determinant();
        let binv = lu
            .try_inverse()
            .ok_or_else(|| Error::Degenerate(format!("X lies in ker alpha at {p:?}")))?;
        let c = if d > 1 {
            (m * det.abs() / ax.sqrt()).powf(2.0 / (d as f64 - 1.0))
        } else {
            1.0
        };
        let mut diag = DVector::from_element(d, c);
        diag[0] = ax;
        let g = binv.transpose() * DMatrix::from_diagonal(&diag) * &binv;
        Ok((&g + g.transpose()) * 0.5)
    }

    /// `(|g X - alpha|_inf, |sqrt(det g) - m| / |m|, min eigenvalue)` at `p`.
    pub fn residuals(&self, p: &[f64]) -> Result<(f64, f64, f64)> {
        let g = self.eval(p)?;
        let xv = DVector::from_vec(self.x.eval(p));
        let mut a = DVector::zeros(self.dim);
        for (idx, v) in self.alpha.indices.iter().zip(self.alpha.values(p)) {
            a[idx[0]] = v;
        }
        let ix = (&g * xv - a).amax();
        let m = self.mu.eval(p)[0];
        let vol = ((g.determinant().sqrt() - m) / m).abs();
        let eig = g.symmetric_eigenvalues().min();
        Ok((ix, vol, eig))
    }

    /// Worst residuals over a sample set.
    pub fn check(&self, pts: &[Vec<f64>]) -> MetricCheck {
        let per: Vec<Option<(f64, f64, f64)>> = pts.par_iter().map(|p| self.residuals(p).ok()).collect();
        let mut out = MetricCheck {
            samples: pts.len(),
            failures: 0,
            max_ix_g_residual: 0.0,
            max_volume_rel_residual: 0.0,
            min_eigenvalue: f64::INFINITY,
            min_eigenvalue_location: vec![],
        };
        for (r, p) in per.into_iter().zip(pts) {
            match r {
                None => out.failures += 1,
                Some((ix, vol, eig)) => {
                    out.max_ix_g_residual = out.max_ix_g_residual.max(ix);
                    out.max_volume_rel_residual = out.max_volume_rel_residual.max(vol);
                    if eig < out.min_eigenvalue {
                        out.min_eigenvalue = eig;
                        out.min_eigenvalue_location = p.clone();
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCheck {
    pub samples: usize,
    /// Points where the metric could not be built.
    pub failures: usize,
    pub max_ix_g_residual: f64,
    pub max_volume_rel_residual: f64,
    pub min_eigenvalue: f64,
    pub min_eigenvalue_location: Vec<f64>,
}

impl MetricCheck {
    pub fn passed(&self, ix_tol: f64, vol_tol: f64) -> bool {
        self.failures == 0 && self.max_ix_g_residual < ix_tol && self.max_volume_rel_residual < vol_tol && self.min_eigenvalue > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::Construction;
    use crate::sampling::SamplePlan;

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilated() {
        let a = DVector::from_vec(vec![0.3, -2.0, 0.5, 1.0]);
        let ks = kernel_basis(&a);
        assert_eq!(ks.len(), 3);
        for (i, k) in ks.iter().enumerate() {
            assert!(a.dot(k).abs() < 1e-15);
            for (j, l) in ks.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((k.dot(l) - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn suspension_metric() {
        let m = Construction::suspension(vec![0.4, 0.7]).build().unwrap();
        let g = metric_from_pair(&m.x, &m.alpha, m.mu.as_ref().unwrap()).unwrap();
        let c = g.check(&m.samples(&SamplePlan::new(100, 0)));
        assert!(c.passed(1e-12, 1e-12), "{c:?}");
    }

    #[test]
    fn rejects_nonpositive_alpha_x() {
        let m = Construction::suspension(vec![0.4, 0.7]).build().unwrap();
        let neg = m.alpha.scale(&Expr::constant(-1.0));
        let g = metric_from_pair(&m.x, &neg, m.mu.as_ref().unwrap()).unwrap();
        assert!(g.eval(&[0.0, 0.0, 0.0]).is_err());
    }
}
