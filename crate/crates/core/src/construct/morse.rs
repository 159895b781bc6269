//! Round-Morse local model around a critical circle, with the flow-box
//! refinement near a point of a maximum circle.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{coords, unit_axis_defect, Certifier, Clause, Construction, ConstructionModel, FlowBox, Region, BUILD_TOL};
use crate::chart::{Chart, Factor};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{ChartMap, ChartRef, KForm, VectorField};
use crate::profile::standard_profiles;

pub(super) fn round_morse(n: usize, index: usize, step2: bool) -> Result<ConstructionModel> {
    if n < 1 {
        return Err(Error::Param("round-Morse model needs n >= 1".into()));
    }
    if index > 2 * n {
        return Err(Error::Param(format!("index {index} exceeds 2n = {}", 2 * n)));
    }
    if step2 && index != 0 {
        return Err(Error::Param(format!(
            "the flow-box refinement is only defined around a maximum circle (index 0), got index {index}"
        )));
    }
    let d = 2 * n + 1;
    let mut factors = vec![Factor::periodic("theta", 2.0 * PI)];
    factors.extend((1..d).map(|i| Factor::interval(format!("x{i}"), -1.0, 1.0)));
    let chart: ChartRef = Arc::new(Chart::new(factors)?);
    let c = coords(d);
    let sign = |i: usize| if i <= index { -1.0 } else { 1.0 };
    let rho = Expr::sum((1..d).map(|i| c[i].square()));
    let fm = Expr::sum((1..d).map(|i| sign(i) * c[i].square()));
    let phi_unit = standard_profiles().phi_unit;
    let phi = phi_unit.apply(&rho);

    let mut comps = vec![phi.clone()];
    comps.extend((1..d).map(|i| fm.partial(i)));
    let x = VectorField::new(chart.clone(), comps)?;
    let df = KForm::scalar(chart.clone(), fm.clone())?.d();
    let gamma = KForm::dx(chart.clone(), 0).scale(&phi).add(&df)?;
    let dgamma_expected = KForm::scalar(chart.clone(), rho.clone())?
        .d()
        .wedge(&KForm::dx(chart.clone(), 0))?
        .scale(&phi_unit.expr().partial(0).substitute(std::slice::from_ref(&rho)));
    let gamma_defect = gamma.d().sub(&dgamma_expected)?;

    let alpha = if step2 {
        let rr = (&c[0] - PI).square() + &rho;
        let phir = phi_unit.apply(&rr);
        KForm::dx(chart.clone(), 0).scale(&phir).add(&gamma.scale(&(1.0 - &phir)))?
    } else {
        gamma.clone()
    };
    let mut m = ConstructionModel::new(Construction::RoundMorse { n, index, step2 }, x, alpha);
    m.mu = Some(KForm::volume(chart.clone()));
    m.section = Some((0, 0.0));
    let xs: Vec<usize> = (1..d).collect();
    m.regions = vec![Region::new(
        "critical_circle",
        vec![vec![Clause::NormAtMost {
            coords: xs.clone(),
            radius: 0.0,
        }]],
    )];

    let mut flow_box_checks = None;
    if step2 {
        let mut fb_factors = vec![Factor::interval("h", -1.0, 1.0)];
        fb_factors.extend((1..d).map(|i| Factor::interval(format!("y{i}"), -1.0, 1.0)));
        let fb: ChartRef = Arc::new(Chart::new(fb_factors)?);
        let h = &c[0] - PI;
        let mut to_fb = vec![h.clone()];
        to_fb.extend((1..d).map(|i| &c[i] * (-2.0 * &h).exp()));
        let mut from_fb = vec![&c[0] + PI];
        from_fb.extend((1..d).map(|i| &c[i] * (2.0 * &c[0]).exp()));
        let map = ChartMap::new(chart.clone(), fb.clone(), to_fb, Some(from_fb))?;
        let pushed = m.x.pushforward(&map)?;
        let mut defect: Vec<Expr> = pushed.comps().iter().map(|e| e.substitute(map.comps())).collect();
        defect[0] = &defect[0] - 1.0;
        let region = Region::new(
            "flow_box",
            vec![vec![
                Clause::Within {
                    coord: 0,
                    lo: PI - 0.3,
                    hi: PI + 0.3,
                },
                Clause::NormAtMost {
                    coords: xs.clone(),
                    radius: 0.45,
                },
            ]],
        );
        m.regions.push(region.clone());
        flow_box_checks = Some((defect, region.clone()));
        m.flow_box = Some(FlowBox { map, region });
    }

    let ax = m.alpha_of_x();
    let axis_defect = unit_axis_defect(&m.x, &m.alpha, 0);
    let da = m.alpha.d();
    let sq = da.wedge(&da)?;
    let mut cert = Certifier::new(&mut m);
    cert.positive("alpha(X)", &ax, 0.0);
    cert.small("(d alpha)^2", &sq, BUILD_TOL);
    cert.small("d gamma - phi'(rho) d rho ^ d theta", &gamma_defect, 1e-12);
    if let Some((defect, region)) = flow_box_checks {
        let inside: Vec<Vec<f64>> = flow_box_points(&region, d);
        let e = crate::certify::scan::max_abs_exprs(&defect, &inside);
        cert.exact_zero_at("flow box: alpha = dtheta", &axis_defect[d..], &inside);
        cert.push_max("flow box: pushed X = d/dh", e, 1e-12);
    }
    cert.finish()?;
    Ok(m)
}

/// Deterministic points filling the flow-box region.
fn flow_box_points(region: &Region, d: usize) -> Vec<Vec<f64>> {
    (0..500u64)
        .map(|k| {
            let u = crate::sampling::halton(k, 3, d);
            let mut p: Vec<f64> = vec![PI - 0.3 + 0.6 * u[0]];
            let raw: Vec<f64> = u[1..].iter().map(|t| 0.45 * (2.0 * t - 1.0)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if norm > 0.45 { 0.45 / norm } else { 1.0 };
            p.extend(raw.iter().map(|v| v * scale));
            p
        })
        .filter(|p| region.contains(p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_circle_values() {
        let m = round_morse(2, 0, false).unwrap();
        assert_eq!(m.alpha_of_x().eval(&[1.0, 0.0, 0.0, 0.0, 0.0]), 1.0);
        let da = m.alpha.d();
        assert!(da.wedge(&da).unwrap().is_zero());
        assert_eq!(m.dim(), 5);
    }

    #[test]
    fn saddle_indices_build_but_refuse_step2() {
        for idx in 0..=4 {
            assert!(round_morse(2, idx, false).is_ok());
        }
        assert!(round_morse(2, 1, true).is_err());
        assert!(round_morse(2, 5, false).is_err());
    }

    #[test]
    fn step2_has_a_certified_flow_box() {
        let m = round_morse(2, 0, true).unwrap();
        let fb = m.flow_box.as_ref().unwrap();
        assert_eq!(fb.map.target().dim(), 5);
        assert!(m.build_checks.iter().any(|c| c.name.starts_with("flow box") && c.passed));
        // beta = dtheta near the circle.
        let a: Vec<_> = m
            .alpha
            .eval(&[PI + 0.1, 0.1, -0.2, 0.0, 0.1])
            .into_iter()
            .filter(|t| t.1 != 0.0)
            .collect();
        assert_eq!(a, vec![(vec![0], 1.0)]);
    }
}
