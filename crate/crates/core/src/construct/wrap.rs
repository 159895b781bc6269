//! Contact wrap of a circle: `alpha = dtheta + w(r) sum(x dy - y dx)`.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{coords, unit_axis_defect, Certifier, Clause, Construction, ConstructionModel, Region, BUILD_TOL};
use crate::chart::{Chart, Factor};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{ChartRef, KForm, VectorField};
use crate::profile::Profile;

/// Coordinates `(theta, x1, y1, ..., xn, yn)`.
pub(super) fn contact_wrap(n: usize) -> Result<ConstructionModel> {
    if n < 1 {
        return Err(Error::Param("contact wrap needs n >= 1".into()));
    }
    let d = 2 * n + 1;
    let mut factors = vec![Factor::periodic("theta", 2.0 * PI)];
    for i in 1..=n {
        factors.push(Factor::interval(format!("x{i}"), -1.0, 1.0));
        factors.push(Factor::interval(format!("y{i}"), -1.0, 1.0));
    }
    let chart: ChartRef = Arc::new(Chart::new(factors)?);
    let c = coords(d);
    let r2 = Expr::sum((1..d).map(|i| c[i].square()));
    // w = phi(r) / r^2: 1 for r <= 1/2, 0 for r >= 0.9.
    let w = Profile::bump(0.25, 0.81)?.apply(&r2);
    let mut terms = vec![(vec![0], Expr::one())];
    for i in 0..n {
        let (xi, yi) = (1 + 2 * i, 2 + 2 * i);
        terms.push((vec![yi], &w * &c[xi]));
        terms.push((vec![xi], -(&w * &c[yi])));
    }
    let alpha = KForm::from_terms(chart.clone(), 1, terms)?;
    let x = VectorField::coordinate(chart.clone(), 0);
    let mu = KForm::volume(chart.clone());
    let nu = mu.interior(&x)?;

    let mut m = ConstructionModel::new(Construction::ContactWrap { n }, x, alpha);
    m.section = Some((0, 0.0));
    let xs: Vec<usize> = (1..d).collect();
    let collar = Region::new(
        "outer_collar",
        vec![vec![Clause::NormAtLeast {
            coords: xs.clone(),
            radius: 0.9,
        }]],
    );
    m.regions = vec![
        Region::new("standard_core", vec![vec![Clause::NormAtMost { coords: xs, radius: 0.5 }]]),
        collar.clone(),
    ];
    let dalpha = m.alpha.d();
    let ix = dalpha.interior(&m.x)?;
    let contact = m.alpha.wedge(&dalpha.power(n)?)?.top_coefficient()?;
    let defect = unit_axis_defect(&m.x, &m.alpha, 0);
    let mut near = vec![0.0; d];
    near[1] = 0.05;
    let expected = (1..=n).fold(2f64.powi(n as i32), |acc, k| acc * k as f64);
    let top_defect = contact.eval(&near) - expected;
    m.nu = Some(nu.clone());
    m.mu = Some(mu);
    let mut cert = Certifier::new(&mut m);
    cert.small("i_X d alpha", &ix, 1e-12);
    cert.small("d nu", &nu.d(), BUILD_TOL);
    cert.exact_zero_on("outer collar is dtheta", &defect, &collar);
    cert.exact_zero_at("alpha ^ (d alpha)^n = 2^n n! near r = 0", &[Expr::constant(top_defect)], &[near]);
    cert.finish()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_contact_constant() {
        for (n, expect) in [(1, 2.0), (2, 8.0), (3, 48.0)] {
            let m = contact_wrap(n).unwrap();
            let da = m.alpha.d();
            let top = m.alpha.wedge(&da.power(n).unwrap()).unwrap().top_coefficient().unwrap();
            let mut p = vec![0.3; 2 * n + 1];
            p[1..].iter_mut().for_each(|v| *v = 0.05 / (2.0 * n as f64).sqrt());
            assert_eq!(top.eval(&p), expect);
        }
    }

    #[test]
    fn full_rank_near_the_core() {
        let m = contact_wrap(2).unwrap();
        let da = m.alpha.d();
        assert_eq!(crate::forms::two_form_rank(&da, &[1.0, 0.1, -0.2, 0.05, 0.1], 1e-9).unwrap(), 4);
    }
}
