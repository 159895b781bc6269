//! Inserting a plug into a host flow box.
//!
//! Inside the site the fields are `X = psi^-1_* X_P / s` and
//! `alpha = s psi^* alpha_P`, where `psi` maps host coordinates to plug
//! coordinates and sends the host flow direction to `s d/dz`. Outside the
//! site the host fields are kept. Both sides agree exactly on the plug
//! collar, which is checked before the pieces are joined.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{coords, unit_axis_defect, Certifier, Construction, ConstructionModel, BUILD_TOL};
use crate::certify::scan;
use crate::error::{Error, Result};
use crate::expr::{Expr, Guard, Tape};
use crate::field::{ChartMap, KForm, VectorField};
use crate::sampling::{sample_box, SamplePlan};

/// Where and how a 5-dimensional vp plug `T^3 x [1,2] x [-1,1]` is placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Site {
    /// Flow box of the round-Morse refinement around `theta = pi` on the
    /// critical circle. The plug torus is embedded as a tube of radius
    /// `small + span (r - 1)` around a Clifford torus of radius `big` in the
    /// transverse 4-disk; `z` becomes `h / scale`.
    MorseFlowBox { scale: f64, big: f64, small: f64, span: f64 },
    /// Far region of a binding neighborhood over `T^3` where `X = d/dtheta`
    /// and `alpha = dtheta`: plug angles are `2 pi (x, y, z)`, `r^2` runs
    /// over `[r0^2, r1^2]`, and `theta = theta0 + scale z`.
    BindingFar { r0: f64, r1: f64, theta0: f64, scale: f64 },
}

impl Site {
    pub fn morse_default() -> Site {
        Site::MorseFlowBox {
            scale: 0.1,
            big: 0.11,
            small: 0.025,
            span: 0.045,
        }
    }

    pub fn binding_far_default() -> Site {
        Site::BindingFar {
            r0: 0.9,
            r1: 0.99,
            theta0: PI,
            scale: 1.0,
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Site::MorseFlowBox { scale, .. } | Site::BindingFar { scale, .. } => *scale,
        }
    }

    /// `(to_plug over host coordinates, from_plug over plug coordinates)`.
    fn maps(&self, host: &ConstructionModel) -> Result<(Vec<Expr>, Vec<Expr>)> {
        let c = coords(5);
        match *self {
            Site::MorseFlowBox { scale, big, small, span } => {
                let fb = host
                    .flow_box
                    .as_ref()
                    .ok_or_else(|| Error::Seam(format!("host `{}` has no certified flow box", host.name())))?;
                if !(scale > 0.0 && big > 0.0 && small > 0.0 && span > 0.0 && small + span < big) {
                    return Err(Error::Param("Morse site needs 0 < small + span < big and scale > 0".into()));
                }
                let c1 = big + small + span / 2.0;
                // Flow-box coordinates (h, y1..y4) to plug coordinates.
                let (w1, w2, w3, w4) = (&c[1] + c1, c[2].clone(), &c[3] + big, c[4].clone());
                let ra = (w1.square() + w2.square()).sqrt();
                let rb = (w3.square() + w4.square()).sqrt();
                let (xi, eta) = (&ra - big, &rb - big);
                let rho = (xi.square() + eta.square()).sqrt();
                let to_plug_fb = [
                    w2.atan2(&w1),
                    w4.atan2(&w3),
                    eta.atan2(&xi),
                    1.0 + (&rho - small) / span,
                    &c[0] / scale,
                ];
                let rho = small + span * (&c[3] - 1.0);
                let ra = big + &rho * c[2].cos();
                let rb = big + &rho * c[2].sin();
                let from_plug_fb = vec![
                    scale * &c[4],
                    &ra * c[0].cos() - c1,
                    &ra * c[0].sin(),
                    &rb * c[1].cos() - big,
                    &rb * c[1].sin(),
                ];
                let inv = fb.map.inverse().ok_or(Error::MissingInverse)?;
                let to_plug = to_plug_fb.iter().map(|e| e.substitute(fb.map.comps())).collect();
                let from_plug = inv.iter().map(|e| e.substitute(&from_plug_fb)).collect();
                Ok((to_plug, from_plug))
            }
            Site::BindingFar { r0, r1, theta0, scale } => {
                if host.chart.names() != ["x", "y", "z", "r", "theta"] {
                    return Err(Error::Seam(format!(
                        "host `{}` is not a binding neighborhood over T^3",
                        host.name()
                    )));
                }
                if !(0.875 <= r0 && r0 < r1 && r1 <= 1.0 && scale > 0.0 && scale < PI) {
                    return Err(Error::Param("binding site needs 7/8 <= r0 < r1 <= 1 and 0 < scale < pi".into()));
                }
                let span = r1 * r1 - r0 * r0;
                let tau = 2.0 * PI;
                let to_plug = vec![
                    tau * &c[0],
                    tau * &c[1],
                    tau * &c[2],
                    1.0 + (c[3].square() - r0 * r0) / span,
                    (&c[4] - theta0) / scale,
                ];
                let from_plug = vec![
                    &c[0] / tau,
                    &c[1] / tau,
                    &c[2] / tau,
                    (r0 * r0 + span * (&c[3] - 1.0)).sqrt(),
                    theta0 + scale * &c[4],
                ];
                Ok((to_plug, from_plug))
            }
        }
    }
}

pub(super) fn insert_plug(
    host: &ConstructionModel,
    site: &Site,
    plug: &ConstructionModel,
    construction: Construction,
) -> Result<ConstructionModel> {
    let ps = plug
        .plug
        .as_ref()
        .ok_or_else(|| Error::Param(format!("`{}` is not a plug", plug.name())))?;
    if plug.dim() != 5 || host.dim() != 5 || plug.chart.names() != ["theta1", "theta2", "theta3", "r", "z"] {
        return Err(Error::Param("sites embed a 5-dimensional vp plug into a 5-dimensional host".into()));
    }
    let s = site.scale();
    let (to_plug, from_plug) = site.maps(host)?;
    let psi = ChartMap::new(host.chart.clone(), plug.chart.clone(), to_plug.clone(), Some(from_plug.clone()))?;
    let psi_inv = psi.inverted()?;

    // Plug side of the seam: exactly d/dz and dz on the collar.
    let plug_pts = sample_box(&plug.chart, &plug.chart.bounds(), &SamplePlan::new(2000, 5));
    let collar_pts: Vec<Vec<f64>> = plug_pts.iter().filter(|p| ps.collar.contains(p)).cloned().collect();
    let plug_defect = scan::max_abs_exprs(&unit_axis_defect(&plug.x, &plug.alpha, ps.axis), &collar_pts);
    if collar_pts.is_empty() || plug_defect.value != 0.0 {
        return Err(Error::Seam(format!(
            "plug is not exactly d/dz, dz on its collar (defect {:e} at {:?})",
            plug_defect.value, plug_defect.location
        )));
    }

    // Host side: a flow box for s^-1 psi^-1_* d/dz with alpha = s psi^* dz on the whole site.
    let to_host = Tape::new(&from_plug);
    let image = |pts: &[Vec<f64>]| -> Vec<Vec<f64>> {
        pts.iter()
            .map(|p| {
                let mut q = to_host.eval(p);
                host.chart.wrap(&mut q);
                q
            })
            .collect()
    };
    let site_pts = image(&plug_pts);
    if let Some(p) = site_pts.iter().find(|p| !host.chart.contains(p, 1e-12)) {
        return Err(Error::Seam(format!("site leaves the host chart at {p:?}")));
    }
    let back = Tape::new(&to_plug);
    let round_trip = site_pts
        .iter()
        .zip(&plug_pts)
        .map(|(q, p)| {
            let d = plug.chart.difference(&back.eval(q), p);
            d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .fold(0.0f64, f64::max);
    if !(round_trip < 1e-10) {
        return Err(Error::Seam(format!("site maps are not mutually inverse (defect {round_trip:e})")));
    }
    let flow_dir = VectorField::coordinate(plug.chart.clone(), ps.axis)
        .pushforward(&psi_inv)?
        .scale(&Expr::constant(1.0 / s));
    let dz_pulled = KForm::dx(plug.chart.clone(), ps.axis).pullback(&psi)?.scale(&Expr::constant(s));
    let host_defect: Vec<Expr> = host
        .x
        .sub(&flow_dir)?
        .comps()
        .iter()
        .cloned()
        .chain(host.alpha.sub(&dz_pulled)?.terms().map(|(_, c)| c.clone()))
        .collect();
    let hd = scan::max_abs_exprs(&host_defect, &site_pts);
    if !(hd.value < 1e-9) {
        return Err(Error::Seam(format!(
            "host is not a flow box on the site (defect {:e} at {:?})",
            hd.value, hd.location
        )));
    }

    let x_in = plug.x.pushforward(&psi_inv)?.scale(&Expr::constant(1.0 / s));
    let alpha_in = plug.alpha.pullback(&psi)?.scale(&Expr::constant(s));
    let guards: Vec<Guard> = (0..plug.dim())
        .filter(|&i| !plug.chart.factor(i).is_periodic())
        .map(|i| {
            let (lo, hi) = plug.chart.factor(i).range();
            Guard {
                expr: to_plug[i].clone(),
                lo,
                hi,
            }
        })
        .collect();
    let x = VectorField::new(
        host.chart.clone(),
        x_in.comps()
            .iter()
            .zip(host.x.comps())
            .map(|(a, b)| Expr::select(guards.clone(), a.clone(), b.clone()))
            .collect(),
    )?;
    let keys: BTreeSet<Vec<usize>> = alpha_in.terms().chain(host.alpha.terms()).map(|(k, _)| k.clone()).collect();
    let alpha = KForm::from_terms(
        host.chart.clone(),
        1,
        keys.into_iter().map(|k| {
            let e = Expr::select(guards.clone(), alpha_in.coeff(&k), host.alpha.coeff(&k));
            (k, e)
        }),
    )?;

    // Seam mismatch in host coordinates (rounding only).
    let seam_defect: Vec<Expr> = x_in
        .sub(&host.x)?
        .comps()
        .iter()
        .cloned()
        .chain(alpha_in.sub(&host.alpha)?.terms().map(|(_, c)| c.clone()))
        .collect();
    let seam = scan::max_abs_exprs(&seam_defect, &image(&collar_pts));

    let mut m = ConstructionModel::new(construction, x, alpha);
    m.sample_bounds = host.sample_bounds.clone();
    m.mu = host.mu.clone();
    m.section = host.section;
    m.regions = host.regions.clone();
    m.site = Some(psi_inv);
    let ax = m.alpha_of_x();
    let da = m.alpha.d();
    let n = (m.dim() - 1) / 2;
    let ix_n = da.power(n)?.interior(&m.x)?;
    let mut cert = Certifier::new(&mut m);
    cert.push_max("seam mismatch in host coordinates", seam, 1e-9);
    cert.positive("alpha(X)", &ax, 0.0);
    cert.small("i_X (d alpha)^n", &ix_n, BUILD_TOL);
    cert.finish()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aperiodic_model_assembles() {
        let m = Construction::aperiodic().build().unwrap();
        assert_eq!(m.dim(), 5);
        let seam = m.build_checks.iter().find(|c| c.name.starts_with("seam")).unwrap();
        assert!(seam.value < 1e-12, "{seam:?}");
        // Away from the site the host is untouched.
        let p = [0.5, 0.2, 0.1, -0.3, 0.0];
        assert_eq!(m.x.eval(&p), Construction::round_morse_step2(2).build().unwrap().x.eval(&p));
    }

    #[test]
    fn binding_far_insertion_assembles() {
        let m = Construction::binding_far_insertion().build().unwrap();
        assert!(m.build_checks.iter().all(|c| c.passed));
    }

    #[test]
    fn host_without_flow_box_is_rejected() {
        let host = Construction::round_morse(2, 0).build().unwrap();
        let plug = Construction::vp_plug(5).build().unwrap();
        let err = insert_plug(&host, &Site::morse_default(), &plug, Construction::aperiodic()).unwrap_err();
        assert!(matches!(err, Error::Seam(_)), "{err}");
    }

    #[test]
    fn site_outside_the_flow_box_is_rejected() {
        let host = Construction::round_morse_step2(2).build().unwrap();
        let plug = Construction::vp_plug(5).build().unwrap();
        let big = Site::MorseFlowBox {
            scale: 0.3,
            big: 0.3,
            small: 0.05,
            span: 0.2,
        };
        assert!(matches!(
            insert_plug(&host, &big, &plug, Construction::aperiodic()),
            Err(Error::Seam(_))
        ));
    }
}
