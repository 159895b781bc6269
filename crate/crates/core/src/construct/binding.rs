//! The `T^3` contact binding and binding neighborhoods `B x D^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{coords, lift, one_form, Certifier, Clause, Construction, ConstructionModel, Region, BUILD_TOL};
use crate::chart::{Chart, Factor};
use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::field::{ChartMap, ChartRef, KForm, VectorField};
use crate::profile::{Profile, ProfileKind};

pub(super) fn t3_contact_binding() -> Result<ConstructionModel> {
    let chart: ChartRef = Arc::new(Chart::new(vec![
        Factor::periodic("x", 1.0),
        Factor::periodic("y", 1.0),
        Factor::periodic("z", 1.0),
    ])?);
    let z = Expr::coord(2);
    let (c, s) = ((2.0 * PI * &z).cos(), (2.0 * PI * &z).sin());
    let beta = one_form(&chart, vec![(0, c.clone()), (1, -&s)]);
    let x = VectorField::new(chart.clone(), vec![c, -s, Expr::zero()])?;
    let nu = beta.d();
    let mu = beta.wedge(&nu)?.scale(&Expr::constant(1.0 / (2.0 * PI)));
    let mut m = ConstructionModel::new(Construction::T3ContactBinding, x, beta);
    m.section = Some((0, 0.0));
    m.nu = Some(nu);
    m.mu = Some(mu);
    certify_ses(&mut m)?;
    Ok(m)
}

/// Build certificates of a stable Eulerisable structure whose field is its Reeb field.
fn certify_ses(m: &mut ConstructionModel) -> Result<()> {
    let nu = m.nu()?.clone();
    let ax = m.alpha_of_x();
    let ix_dalpha = m.alpha.d().interior(&m.x)?;
    let ix_nu = nu.interior(&m.x)?;
    let top = m.alpha.wedge(&nu)?.top_coefficient()?;
    let mut c = Certifier::new(m);
    c.small_exprs("alpha(X) = 1", &[&ax - 1.0], 1e-12);
    c.small("i_X d alpha", &ix_dalpha, 1e-12);
    c.small("i_X nu", &ix_nu, 1e-12);
    c.small("d nu", &nu.d(), BUILD_TOL);
    c.positive("alpha ^ nu", &top, 0.0);
    c.finish()
}

pub(super) fn binding_neighborhood(
    b: &ConstructionModel,
    f: &ProfileKind,
    h: &ProfileKind,
    construction: Construction,
) -> Result<ConstructionModel> {
    let nu_b =
        b.nu.as_ref()
            .ok_or_else(|| Error::Param(format!("binding `{}` carries no nu", b.name())))?;
    if !b.build_checks.iter().any(|c| c.name == "alpha(X) = 1") {
        return Err(Error::Param(format!(
            "binding `{}` is not SES-certified with alpha(R) = 1",
            b.name()
        )));
    }
    let m = b.dim();
    let mut factors = b.chart.factors().to_vec();
    factors.push(Factor::interval("r", 0.0, 1.0));
    factors.push(Factor::periodic("theta", 2.0 * PI));
    let chart: ChartRef = Arc::new(Chart::new(factors)?);
    let (ir, it) = (m, m + 1);
    let r = Expr::coord(ir);
    let fr = Profile::from_kind(f.clone())?.apply(&r);
    let hr = Profile::from_kind(h.clone())?.apply(&r);

    let mut ycomps: Vec<Expr> = b.x.comps().iter().map(|c| (1.0 - &fr) * c).collect();
    ycomps.push(Expr::zero());
    ycomps.push(fr.clone());
    let y = VectorField::new(chart.clone(), ycomps)?;
    let beta = lift(&b.alpha, &chart);
    let alpha = KForm::dx(chart.clone(), it).scale(&hr).add(&beta.scale(&(1.0 - &hr)))?;
    let mu_b = lift(&b.alpha.wedge(nu_b)?, &chart);
    let theta_form = KForm::dx(chart.clone(), ir)
        .wedge(&KForm::dx(chart.clone(), it))?
        .wedge(&mu_b)?
        .scale(&r);
    let nu = theta_form.interior(&y)?;

    let mut model = ConstructionModel::new(construction, y, alpha);
    model.sample_bounds[ir] = (1e-3, 1.0);
    model.section = Some((it, 0.0));
    model.regions = vec![
        Region::new(
            "plateau",
            vec![vec![Clause::Within {
                coord: ir,
                lo: 1.0 / 3.0,
                hi: 2.0 / 3.0,
            }]],
        ),
        Region::new("far", vec![vec![Clause::AtLeast { coord: ir, value: 0.875 }]]),
    ];
    let ay = model.alpha_of_x();
    let dalpha = model.alpha.d();
    let iy_dalpha = dalpha.interior(&model.x)?;
    let iy_dalpha_n = dalpha.power((chart.dim() - 1) / 2)?.interior(&model.x)?;
    let top = model.alpha.wedge(&nu)?.top_coefficient()?;
    let lie = theta_form.lie(&model.x)?;
    let far = model.region("far").cloned().expect("declared above");
    let far_defect = super::unit_axis_defect(&model.x, &model.alpha, it);
    model.nu = Some(nu.clone());
    model.mu = Some(theta_form);

    let mut c = Certifier::new(&mut model);
    c.positive("alpha(Y)", &ay, 0.0);
    c.small("i_Y d alpha", &iy_dalpha, BUILD_TOL);
    c.small("i_Y (d alpha)^n", &iy_dalpha_n, BUILD_TOL);
    c.small("d nu", &nu.d(), BUILD_TOL);
    c.small("L_Y Theta", &lie, BUILD_TOL);
    c.positive("alpha ^ nu", &top, 0.0);
    c.exact_zero_on("far region is d/dtheta, dtheta", &far_defect, &far);
    c.finish()?;
    Ok(model)
}

/// Behaviour of a polar model's fields near `r = 0`, after converting the
/// disk factor to Cartesian coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarSmoothness {
    pub radii: Vec<f64>,
    /// Largest Cartesian coefficient of `X`, `alpha`, `nu` at each radius.
    pub max_coeff: Vec<f64>,
    /// Largest first partial of those coefficients at each radius.
    pub max_grad: Vec<f64>,
    pub bounded: bool,
}

/// Check that the polar disk factor `(r, theta)` at positions `(m, m+1)`
/// carries fields that stay bounded, with bounded first derivatives, as `r -> 0`.
pub fn polar_smoothness(model: &ConstructionModel) -> Result<PolarSmoothness> {
    let d = model.dim();
    let m = d - 2;
    let polar = &model.chart;
    if polar.factor(m).name != "r" || polar.factor(m + 1).name != "theta" {
        return Err(Error::Param("model has no trailing polar (r, theta) factors".into()));
    }
    let mut factors = polar.factors()[..m].to_vec();
    factors.push(Factor::interval("u", -1.0, 1.0));
    factors.push(Factor::interval("v", -1.0, 1.0));
    let cart: ChartRef = Arc::new(Chart::new(factors)?);
    let c = coords(d);
    let (u, v) = (&c[m], &c[m + 1]);
    let mut to_polar: Vec<Expr> = c[..m].to_vec();
    to_polar.push((u.square() + v.square()).sqrt());
    to_polar.push(v.atan2(u));
    let mut to_cart: Vec<Expr> = c[..m].to_vec();
    to_cart.push(&c[m] * c[m + 1].cos());
    to_cart.push(&c[m] * c[m + 1].sin());
    let pull = ChartMap::new(cart.clone(), polar.clone(), to_polar.clone(), Some(to_cart.clone()))?;
    let push = ChartMap::new(polar.clone(), cart.clone(), to_cart, Some(to_polar))?;

    let mut exprs: Vec<Expr> = model.x.pushforward(&push)?.comps().to_vec();
    exprs.extend(model.alpha.pullback(&pull)?.terms().map(|(_, e)| e.clone()));
    if let Some(nu) = &model.nu {
        exprs.extend(nu.pullback(&pull)?.terms().map(|(_, e)| e.clone()));
    }
    let grads: Vec<Expr> = exprs.iter().flat_map(|e| (0..d).map(move |i| e.partial(i))).collect();
    let vt = Tape::new(&exprs);
    let gt = Tape::new(&grads);

    let radii = vec![1e-2, 1e-3, 1e-4, 1e-5];
    let base: Vec<Vec<f64>> = (0..5)
        .map(|k| crate::sampling::halton(k, 11, m))
        .map(|p| {
            p.iter()
                .zip(&model.chart.bounds())
                .map(|(t, (lo, hi))| lo + (hi - lo) * t)
                .collect()
        })
        .collect();
    let mut max_coeff = vec![];
    let mut max_grad = vec![];
    for &rad in &radii {
        let (mut mc, mut mg) = (0.0f64, 0.0f64);
        for b in &base {
            for k in 0..8 {
                let ang = 2.0 * PI * (k as f64 + 0.5) / 8.0;
                let mut p = b.clone();
                p.push(rad * ang.cos());
                p.push(rad * ang.sin());
                let fold = |acc: f64, x: &f64| if x.is_finite() { acc.max(x.abs()) } else { f64::INFINITY };
                mc = vt.eval(&p).iter().fold(mc, fold);
                mg = gt.eval(&p).iter().fold(mg, fold);
            }
        }
        max_coeff.push(mc);
        max_grad.push(mg);
    }
    let ok = |v: &[f64]| v.iter().all(|x| x.is_finite()) && v[v.len() - 1] <= 2.0 * v[0].max(1.0);
    let bounded = ok(&max_coeff) && ok(&max_grad);
    Ok(PolarSmoothness {
        radii,
        max_coeff,
        max_grad,
        bounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t3_binding_values() {
        let m = t3_contact_binding().unwrap();
        let p = [0.3, 0.7, 0.11];
        assert!((m.alpha_of_x().eval(&p) - 1.0).abs() < 1e-15);
        let top = m.alpha.wedge(m.nu.as_ref().unwrap()).unwrap().top_coefficient().unwrap();
        assert!((top.eval(&p) - 2.0 * PI).abs() < 1e-12);
        assert!(m.build_checks.iter().all(|c| c.passed));
    }

    #[test]
    fn binding_neighborhood_over_t3() {
        let m = Construction::binding_neighborhood(Construction::T3ContactBinding).build().unwrap();
        assert_eq!(m.dim(), 5);
        assert_eq!(m.chart.names(), vec!["x", "y", "z", "r", "theta"]);
        let ay = m.alpha_of_x();
        for r in [1.0 / 3.0, 0.4, 0.5, 0.6, 2.0 / 3.0] {
            assert!((ay.eval(&[0.1, 0.2, 0.3, r, 1.0]) - 0.5).abs() < 1e-15);
        }
        let s = polar_smoothness(&m).unwrap();
        assert!(s.bounded, "{s:?}");
    }

    #[test]
    fn binding_must_carry_nu() {
        let sus = Construction::ContactWrap { n: 1 }.build().unwrap();
        let mut no_nu = sus.clone();
        no_nu.nu = None;
        let err = binding_neighborhood(
            &no_nu,
            &ProfileKind::F { eps: 0.125 },
            &ProfileKind::H,
            Construction::T3ContactBinding,
        );
        assert!(err.is_err());
    }
}
