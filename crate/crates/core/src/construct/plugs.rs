//! The standard Wilson plug and the volume-preserving (vp) plug.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    coords, one_form, unit_axis_defect, Certifier, Clause, Construction, ConstructionModel, PlugSpec, Region, TrappedSet, BUILD_TOL,
};
use crate::chart::{Chart, Factor};
use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::field::{ChartRef, KForm, VectorField};
use crate::profile::{peak, Profile};

fn check_slope(b: f64) -> Result<()> {
    if b.is_finite() && b != 0.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("slope b must be finite and nonzero, got {b}")))
    }
}

/// `[-2,2]_z x T^2 x [-2,2]_r x [-1,1]^(n-4)`, coordinates `(z, phi1, phi2, r, x...)`.
pub(super) fn wilson_standard(n: usize, b: f64) -> Result<ConstructionModel> {
    if n < 5 {
        return Err(Error::Param(format!("the standard plug needs n >= 5, got {n}")));
    }
    check_slope(b)?;
    let mut factors = vec![
        Factor::interval("z", -2.0, 2.0),
        Factor::periodic("phi1", 2.0 * PI),
        Factor::periodic("phi2", 2.0 * PI),
        Factor::interval("r", -2.0, 2.0),
    ];
    factors.extend((1..=n - 4).map(|i| Factor::interval(format!("x{i}"), -1.0, 1.0)));
    let chart: ChartRef = Arc::new(Chart::new(factors)?);
    let c = coords(n);
    let (z, r) = (&c[0], &c[3]);
    let xs: Vec<usize> = (4..n).collect();
    let x2 = Expr::sum(xs.iter().map(|&i| c[i].square()));

    let chi = Profile::bump(1.0, 2.25)?.apply(&r.square()) * Profile::bump(0.25, 0.5)?.apply(&x2);
    let g = 1.0 - peak(&((z.square() - 1.0) / 0.5)) * &chi;
    let p = Profile::bump(0.25, 0.36)?;
    let f = (p.apply(&(z + 1.0).square()) - p.apply(&(z - 1.0).square())) * &chi;

    let mut comps = vec![Expr::zero(); n];
    comps[0] = g.clone();
    comps[1] = f.clone();
    comps[2] = b * &f;
    let x = VectorField::new(chart.clone(), comps)?;
    let k = &f / (1.0 + b * b);
    let alpha = one_form(&chart, vec![(0, Expr::one()), (1, k.clone()), (2, b * &k)]);

    let mut m = ConstructionModel::new(Construction::WilsonStandardPlug { n, b }, x, alpha);
    m.mu = Some(KForm::volume(chart.clone()));
    let collar = Region::new(
        "collar",
        vec![
            vec![Clause::AtMost { coord: 0, value: -1.7 }],
            vec![Clause::AtLeast { coord: 0, value: 1.7 }],
            vec![Clause::AtMost { coord: 3, value: -1.5 }],
            vec![Clause::AtLeast { coord: 3, value: 1.5 }],
            vec![Clause::NormAtLeast {
                coords: xs.clone(),
                radius: 0.75,
            }],
        ],
    );
    let window = Region::new(
        "window",
        vec![vec![
            Clause::Within {
                coord: 3,
                lo: -1.0,
                hi: 1.0,
            },
            Clause::NormAtMost {
                coords: xs.clone(),
                radius: 0.5,
            },
        ]],
    );
    m.regions = vec![
        collar.clone(),
        window.clone(),
        Region::new("entry_face", vec![vec![Clause::AtMost { coord: 0, value: -2.0 }]]),
        Region::new("exit_face", vec![vec![Clause::AtLeast { coord: 0, value: 2.0 }]]),
    ];
    m.plug = Some(PlugSpec {
        axis: 0,
        entry: -2.0,
        exit: 2.0,
        scan: [3, 4],
        trapped: TrappedSet::Levels {
            coord: 0,
            values: vec![-1.0, 1.0],
        },
        window: Some(window),
        seam: 0.0,
        collar: collar.clone(),
    });

    let mut mirror = c.clone();
    mirror[0] = -z;
    let skew = f.substitute(&mirror) + &f;
    let sym = g.substitute(&mirror) - &g;
    let ax = m.alpha_of_x();
    let defect = unit_axis_defect(&m.x, &m.alpha, 0);
    let mut cert = Certifier::new(&mut m);
    cert.positive("alpha(X)", &ax, 0.0);
    cert.floor("g >= 0", &g, 0.0);
    cert.small_exprs("f skew in z", &[skew], BUILD_TOL);
    cert.small_exprs("g symmetric in z", &[sym], BUILD_TOL);
    cert.exact_zero_on("collar is d/dz, dz", &defect, &collar);
    cert.finish()?;
    Ok(m)
}

/// `T^(n-2) x [1,2]_r x [-1,1]_z`, coordinates `(theta1, ..., r, z)`.
pub(super) fn wilson_vp(construction: &Construction) -> Result<ConstructionModel> {
    let Construction::WilsonVpPlug {
        n,
        b,
        q_width,
        z_width,
        spin_width,
    } = construction.clone()
    else {
        unreachable!("dispatched on the variant")
    };
    if n < 4 {
        return Err(Error::Param(format!("the vp plug needs n >= 4, got {n}")));
    }
    check_slope(b)?;
    for (name, w) in [
        ("q_width", q_width),
        ("z_width", z_width),
        ("spin r width", spin_width[0]),
        ("spin z width", spin_width[1]),
    ] {
        if !(w > 0.0 && w < 0.5) {
            return Err(Error::Param(format!("{name} must lie in (0, 1/2), got {w}")));
        }
    }
    let (ir, iz) = (n - 2, n - 1);
    let mut factors: Vec<Factor> = (1..=n - 2).map(|i| Factor::periodic(format!("theta{i}"), 2.0 * PI)).collect();
    factors.push(Factor::interval("r", 1.0, 2.0));
    factors.push(Factor::interval("z", -1.0, 1.0));
    let chart: ChartRef = Arc::new(Chart::new(factors)?);
    let c = coords(n);
    let (r, z) = (&c[ir], &c[iz]);

    let s = r - 1.5;
    // q' peaks at exactly 1 at r = 3/2, so each half has one degenerate singular point.
    let q = &s * peak(&(&s / q_width));
    let phi = peak(&((z + 0.5) / z_width)) + peak(&((z - 0.5) / z_width));
    let h = -r + &phi * &q;
    let hz = h.partial(iz);
    let h1 = -h.partial(ir);
    let spin = |zc: f64| peak(&(&s / spin_width[0])) * peak(&((z - zc) / spin_width[1]));
    let ft = spin(-0.5) - spin(0.5);

    let mut comps = vec![Expr::zero(); n];
    comps[0] = ft.clone();
    comps[1] = b * &ft;
    comps[ir] = hz.clone();
    comps[iz] = h1.clone();
    let x = VectorField::new(chart.clone(), comps)?;
    let alpha = one_form(&chart, vec![(0, ft.clone()), (iz, h1.clone())]);

    let mut m = ConstructionModel::new(construction.clone(), x, alpha);
    let mu = KForm::volume(chart.clone());
    m.hamiltonian = Some(h.clone());
    let collar = Region::new(
        "collar",
        vec![
            vec![Clause::AtMost { coord: iz, value: -0.95 }],
            vec![Clause::AtLeast { coord: iz, value: 0.95 }],
            vec![Clause::AtMost { coord: ir, value: 1.05 }],
            vec![Clause::AtLeast { coord: ir, value: 1.95 }],
        ],
    );
    m.regions = vec![
        collar.clone(),
        Region::new(
            "seam",
            vec![vec![Clause::Within {
                coord: iz,
                lo: 0.0,
                hi: 0.0,
            }]],
        ),
        Region::new(
            "core",
            vec![vec![
                Clause::Within {
                    coord: ir,
                    lo: 1.05,
                    hi: 1.95,
                },
                Clause::Within {
                    coord: iz,
                    lo: -0.95,
                    hi: 0.95,
                },
            ]],
        ),
        Region::new("entry_face", vec![vec![Clause::AtMost { coord: iz, value: -1.0 }]]),
        Region::new("exit_face", vec![vec![Clause::AtLeast { coord: iz, value: 1.0 }]]),
    ];
    m.plug = Some(PlugSpec {
        axis: iz,
        entry: -1.0,
        exit: 1.0,
        scan: [ir, 0],
        trapped: TrappedSet::Points {
            coords: vec![ir, iz],
            points: vec![vec![1.5, -0.5], vec![1.5, 0.5]],
        },
        window: None,
        seam: 0.0,
        collar: collar.clone(),
    });

    let ax = m.alpha_of_x();
    let dalpha = m.alpha.d();
    let sq = dalpha.wedge(&dalpha)?;
    if !sq.is_zero() {
        return Err(Error::BuildCertificate {
            model: "wilson_vp_plug".into(),
            check: "(d alpha)^2 = 0".into(),
            detail: format!("{} surviving terms", sq.num_terms()),
        });
    }
    let div = mu.interior(&m.x)?.d();
    // Mirror symmetry: X(r, -z) = -M_* X(r, z) with the rotation sign flipped.
    let mut mirror = c.clone();
    mirror[iz] = -z;
    let mirror_defect = vec![
        hz.substitute(&mirror) + &hz,
        h1.substitute(&mirror) - &h1,
        ft.substitute(&mirror) + &ft,
    ];
    let defect = unit_axis_defect(&m.x, &m.alpha, iz);
    m.mu = Some(mu);
    let mut cert = Certifier::new(&mut m);
    cert.positive("alpha(X) = ft^2 + h1^2", &ax, 0.0);
    cert.positive("h1 >= 0", &(&h1 + 1e-300), 0.0);
    cert.small("d i_X mu", &div, BUILD_TOL);
    cert.small_exprs("mirror symmetry", &mirror_defect, BUILD_TOL);
    cert.exact_zero_on("collar is d/dz, dz", &defect, &collar);
    cert.finish()?;

    let found = singular_points(&m, (-1.0, 1.0), 64)?;
    let expected = [(1.5, -0.5), (1.5, 0.5)];
    let ok = found.len() == 2
        && found
            .iter()
            .zip(expected)
            .all(|(p, (r0, z0))| (p.r - r0).abs() < 1e-10 && (p.z - z0).abs() < 1e-10 && p.spin.abs() > 0.5);
    m.build_checks.push(super::BuildCheck {
        name: "two mirrored singular points with nonzero rotation".into(),
        kind: "max".into(),
        value: found.len() as f64,
        bound: 2.0,
        location: found.first().map(|p| vec![p.r, p.z]).unwrap_or_default(),
        passed: ok,
    });
    if !ok {
        return Err(Error::BuildCertificate {
            model: "wilson_vp_plug".into(),
            check: "singular points".into(),
            detail: format!("{found:?}"),
        });
    }
    Ok(m)
}

/// A zero of the meridional field `(H_z, -H_r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub r: f64,
    pub z: f64,
    /// `h1 = -H_r` there.
    pub h1: f64,
    /// Rotation speed (the `theta1` component of `X`) there.
    pub spin: f64,
}

/// Singular points of a vp plug with `z` in `zrange`, by Newton's method on
/// `grad h1 = 0` from a `grid x grid` seed lattice, keeping roots where `h1`
/// and `H_z` vanish. Sorted by `z`, duplicates merged.
pub fn singular_points(model: &ConstructionModel, zrange: (f64, f64), grid: usize) -> Result<Vec<SingularPoint>> {
    let h = model
        .hamiltonian
        .as_ref()
        .ok_or_else(|| Error::Param(format!("model `{}` has no Hamiltonian", model.name())))?;
    let d = model.dim();
    let (ir, iz) = (d - 2, d - 1);
    let h1 = -h.partial(ir);
    let (g1, g2) = (h1.partial(ir), h1.partial(iz));
    let tape = Tape::new(&[
        g1.clone(),
        g2.clone(),
        g1.partial(ir),
        g1.partial(iz),
        g2.partial(ir),
        g2.partial(iz),
        h1.clone(),
        h.partial(iz),
        model.x.comp(0).clone(),
    ]);
    let (rlo, rhi) = model.chart.factor(ir).range();
    let eval = |r: f64, z: f64| {
        let mut p = vec![0.0; d];
        p[ir] = r;
        p[iz] = z;
        tape.eval(&p)
    };
    let mut out: Vec<SingularPoint> = vec![];
    for i in 0..grid {
        for j in 0..grid {
            let mut r = rlo + (rhi - rlo) * (i as f64 + 0.5) / grid as f64;
            let mut z = zrange.0 + (zrange.1 - zrange.0) * (j as f64 + 0.5) / grid as f64;
            let mut converged = false;
            for _ in 0..60 {
                let v = eval(r, z);
                let det = v[2] * v[5] - v[3] * v[4];
                if v[0] == 0.0 && v[1] == 0.0 {
                    converged = true;
                    break;
                }
                if det == 0.0 || !det.is_finite() {
                    break;
                }
                let dr = (v[5] * v[0] - v[3] * v[1]) / det;
                let dz = (v[2] * v[1] - v[4] * v[0]) / det;
                r -= dr;
                z -= dz;
                if !(rlo..=rhi).contains(&r) || !(zrange.0..=zrange.1).contains(&z) {
                    break;
                }
                if dr.abs().max(dz.abs()) < 1e-15 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                continue;
            }
            let v = eval(r, z);
            if v[6].abs() < 1e-9 && v[7].abs() < 1e-9 && !out.iter().any(|p| (p.r - r).abs() < 1e-6 && (p.z - z).abs() < 1e-6) {
                out.push(SingularPoint {
                    r,
                    z,
                    h1: v[6],
                    spin: v[8],
                });
            }
        }
    }
    out.sort_by(|a, b| a.z.total_cmp(&b.z));
    Ok(out)
}

/// Entry radius whose orbit lies on the level of `H` through the lower
/// singular point, by bisection of `H(r, z_entry) - H(singular point)`.
pub fn separatrix_radius(model: &ConstructionModel) -> Result<f64> {
    let h = model
        .hamiltonian
        .as_ref()
        .ok_or_else(|| Error::Param("model has no Hamiltonian".into()))?;
    let plug = model.plug.as_ref().ok_or_else(|| Error::Param("model is not a plug".into()))?;
    let d = model.dim();
    let ir = d - 2;
    let sp = singular_points(model, (plug.entry, plug.seam), 16)?;
    let s = sp
        .first()
        .ok_or_else(|| Error::Degenerate("no singular point in the entry half".into()))?;
    let at = |r: f64, z: f64| {
        let mut p = vec![0.0; d];
        p[ir] = r;
        p[plug.axis] = z;
        h.eval(&p)
    };
    let level = at(s.r, s.z);
    let g = |r: f64| at(r, plug.entry) - level;
    let (mut lo, mut hi) = model.chart.factor(ir).range();
    if g(lo) * g(hi) > 0.0 {
        return Err(Error::Degenerate("separatrix level not attained on the entry face".into()));
    }
    if g(lo) == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm > 0.0) == (g(lo) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CompiledForm;

    #[test]
    fn standard_plug_profile_values() {
        let m = wilson_standard(5, super::super::GOLDEN).unwrap();
        let g = m.x.comp(0).clone();
        assert_eq!(g.eval(&[1.0, 0.0, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(g.eval(&[-1.0, 0.3, 0.2, 0.9, 0.4]), 0.0);
        assert!(g.eval(&[0.5, 0.0, 0.0, 0.0, 0.0]) > 0.0);
        assert!(g.eval(&[1.0, 0.0, 0.0, 1.2, 0.0]) > 0.0);
        assert!(g.eval(&[1.0, 0.0, 0.0, 0.0, 0.6]) > 0.0);
        let f = m.x.comp(1).clone();
        for z in [-1.5, -1.2, -1.0, -0.5] {
            assert_eq!(f.eval(&[z, 0.0, 0.0, 0.7, 0.3]), 1.0);
        }
        assert!(m.build_checks.iter().all(|c| c.passed));
    }

    #[test]
    fn vp_plug_algebra() {
        let m = Construction::vp_plug(5).build().unwrap();
        let d = m.alpha.d();
        assert!(d.wedge(&d).unwrap().is_zero());
        let ix: CompiledForm = d.interior(&m.x).unwrap().compile();
        let pts = m.samples(&crate::sampling::SamplePlan::new(1000, 0));
        let worst = pts.iter().map(|p| ix.sup_norm(p)).fold(0.0, f64::max);
        assert!(worst > 0.05, "{worst}");
        for p in pts.iter().step_by(50) {
            assert!(crate::forms::two_form_rank(&d, p, 1e-12).unwrap() <= 2);
        }
    }

    #[test]
    fn one_singular_point_per_half() {
        let m = Construction::vp_plug(4).build().unwrap();
        let lower = singular_points(&m, (-1.0, 0.0), 64).unwrap();
        assert_eq!(lower.len(), 1);
        assert!((lower[0].r - 1.5).abs() < 1e-10 && (lower[0].z + 0.5).abs() < 1e-10);
        let upper = singular_points(&m, (0.0, 1.0), 64).unwrap();
        assert_eq!(upper.len(), 1);
        assert!((upper[0].z - 0.5).abs() < 1e-10);
        assert!((separatrix_radius(&m).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn parameter_validation() {
        assert!(wilson_standard(4, 1.0).is_err());
        assert!(Construction::vp_plug(3).build().is_err());
        let bad = Construction::WilsonVpPlug {
            n: 4,
            b: 1.0,
            q_width: 0.6,
            z_width: 0.45,
            spin_width: [0.4, 0.4],
        };
        assert!(bad.build().is_err());
    }
}
