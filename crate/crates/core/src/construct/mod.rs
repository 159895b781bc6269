//! Explicit models: contact bindings, suspensions, binding neighborhoods,
//! Wilson plugs, round-Morse charts, plug insertion and the contact wrap.
//!
//! Every builder runs its own certificates before returning; a model that
//! fails one is an error, never a silent return.

mod binding;
mod insert;
mod morse;
mod plugs;
pub mod region;
mod suspension;
mod wrap;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::scan;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{ChartMap, ChartRef, KForm, VectorField};
use crate::profile::{ProfileKind, DEFAULT_EPS};
use crate::sampling::{sample_box, SamplePlan};

pub use binding::{polar_smoothness, PolarSmoothness};
pub use insert::Site;
pub use plugs::{separatrix_radius, singular_points, SingularPoint};
pub use region::{Clause, PlugSpec, Region, TrappedSet};

/// `(1 + sqrt 5) / 2`.
pub const GOLDEN: f64 = 1.618_033_988_749_895;

/// A named, parameterized construction. Models are always rebuilt from this.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "construction", rename_all = "snake_case")]
pub enum Construction {
    /// `beta = cos(2 pi z) dx - sin(2 pi z) dy` on the 3-torus.
    T3ContactBinding,
    /// Constant-slope flow `d/dtheta + v . d/dx` on `T^d`, `d = v.len() + 1`.
    Suspension { v: Vec<f64> },
    /// `binding x D^2` in polar coordinates around an SES binding.
    BindingNeighborhood {
        binding: Box<Construction>,
        f: ProfileKind,
        h: ProfileKind,
    },
    /// Positive-measure trapping plug on `[-2,2] x T^2 x [-2,2] x [-1,1]^(n-4)`.
    WilsonStandardPlug { n: usize, b: f64 },
    /// Volume-preserving plug on `T^(n-2) x [1,2] x [-1,1]`.
    WilsonVpPlug {
        n: usize,
        b: f64,
        /// Half-width of the radial peak in `q`.
        q_width: f64,
        /// Half-width of the two `z` peaks in the Hamiltonian.
        z_width: f64,
        /// Half-widths `(r, z)` of the rotation-speed peaks.
        spin_width: [f64; 2],
    },
    /// `S^1 x D^(2n)` around a round-Morse critical circle of the given index.
    RoundMorse { n: usize, index: usize, step2: bool },
    /// A plug inserted into a host flow box.
    PlugInsertion {
        host: Box<Construction>,
        plug: Box<Construction>,
        site: Site,
    },
    /// `alpha = dtheta + w(r) sum(x dy - y dx)` on `S^1 x D^(2n)`.
    ContactWrap { n: usize },
}

impl Construction {
    pub fn suspension(v: Vec<f64>) -> Construction {
        Construction::Suspension { v }
    }

    pub fn binding_neighborhood(binding: Construction) -> Construction {
        Construction::BindingNeighborhood {
            binding: Box::new(binding),
            f: ProfileKind::F { eps: DEFAULT_EPS },
            h: ProfileKind::H,
        }
    }

    pub fn wilson_standard(n: usize) -> Construction {
        Construction::WilsonStandardPlug { n, b: GOLDEN }
    }

    pub fn vp_plug(n: usize) -> Construction {
        Construction::WilsonVpPlug {
            n,
            b: GOLDEN,
            q_width: 0.45,
            z_width: 0.45,
            spin_width: [0.4, 0.4],
        }
    }

    pub fn round_morse(n: usize, index: usize) -> Construction {
        Construction::RoundMorse { n, index, step2: false }
    }

    pub fn round_morse_step2(n: usize) -> Construction {
        Construction::RoundMorse { n, index: 0, step2: true }
    }

    /// The vp plug inserted on the critical circle of the index-0 round-Morse chart.
    pub fn aperiodic() -> Construction {
        Construction::PlugInsertion {
            host: Box::new(Construction::round_morse_step2(2)),
            plug: Box::new(Construction::vp_plug(5)),
            site: Site::morse_default(),
        }
    }

    /// The vp plug inserted in the far region of the binding neighborhood over `T^3`.
    pub fn binding_far_insertion() -> Construction {
        Construction::PlugInsertion {
            host: Box::new(Construction::binding_neighborhood(Construction::T3ContactBinding)),
            plug: Box::new(Construction::vp_plug(5)),
            site: Site::binding_far_default(),
        }
    }

    /// Stable snake-case name.
    pub fn name(&self) -> &'static str {
        match self {
            Construction::T3ContactBinding => "t3_contact_binding",
            Construction::Suspension { .. } => "suspension",
            Construction::BindingNeighborhood { .. } => "binding_neighborhood",
            Construction::WilsonStandardPlug { .. } => "wilson_standard_plug",
            Construction::WilsonVpPlug { .. } => "wilson_vp_plug",
            Construction::RoundMorse { .. } => "round_morse",
            Construction::PlugInsertion { .. } => "plug_insertion",
            Construction::ContactWrap { .. } => "contact_wrap",
        }
    }

    pub fn build(&self) -> Result<ConstructionModel> {
        match self {
            Construction::T3ContactBinding => binding::t3_contact_binding(),
            Construction::Suspension { v } => suspension::suspension(v),
            Construction::BindingNeighborhood { binding, f, h } => binding::binding_neighborhood(&binding.build()?, f, h, self.clone()),
            Construction::WilsonStandardPlug { n, b } => plugs::wilson_standard(*n, *b),
            Construction::WilsonVpPlug { .. } => plugs::wilson_vp(self),
            Construction::RoundMorse { n, index, step2 } => morse::round_morse(*n, *index, *step2),
            Construction::PlugInsertion { host, plug, site } => insert::insert_plug(&host.build()?, site, &plug.build()?, self.clone()),
            Construction::ContactWrap { n } => wrap::contact_wrap(*n),
        }
    }

    /// SHA-256 of the canonical JSON parameters, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("constructions serialize");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            write!(out, "{b:02x}").unwrap();
        }
        out
    }
}

/// A certificate evaluated while building.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildCheck {
    pub name: String,
    /// `"max"` (residual, must stay below `bound`), `"min"` (margin, must exceed
    /// `bound`) or `"floor"` (must not drop below `bound`).
    pub kind: String,
    pub value: f64,
    pub bound: f64,
    pub location: Vec<f64>,
    pub passed: bool,
}

/// Flow-box coordinates `(h, y)` for a host region in which `X = d/dh`.
#[derive(Clone, Debug)]
pub struct FlowBox {
    pub map: ChartMap,
    /// Where the flow box is certified, in host coordinates.
    pub region: Region,
}

/// Everything a construction produces, on one chart.
#[derive(Clone, Debug)]
pub struct ConstructionModel {
    pub construction: Construction,
    pub chart: ChartRef,
    pub x: VectorField,
    pub alpha: KForm,
    pub nu: Option<KForm>,
    pub mu: Option<KForm>,
    pub regions: Vec<Region>,
    /// Sampling box for certificates (may exclude coordinate singularities).
    pub sample_bounds: Vec<(f64, f64)>,
    pub plug: Option<PlugSpec>,
    /// Hamiltonian of the meridional part of the field, when there is one.
    pub hamiltonian: Option<Expr>,
    pub flow_box: Option<FlowBox>,
    /// Default Poincare section `(coordinate, value)`.
    pub section: Option<(usize, f64)>,
    /// Plug-to-host map of an inserted plug; its image is sampled too.
    pub site: Option<ChartMap>,
    pub build_checks: Vec<BuildCheck>,
}

impl ConstructionModel {
    pub(crate) fn new(construction: Construction, x: VectorField, alpha: KForm) -> ConstructionModel {
        let chart = x.chart().clone();
        ConstructionModel {
            construction,
            sample_bounds: chart.bounds(),
            chart,
            x,
            alpha,
            nu: None,
            mu: None,
            regions: vec![],
            plug: None,
            hamiltonian: None,
            flow_box: None,
            section: None,
            site: None,
            build_checks: vec![],
        }
    }

    pub fn name(&self) -> &'static str {
        self.construction.name()
    }

    pub fn hash(&self) -> String {
        self.construction.hash()
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn nu(&self) -> Result<&KForm> {
        self.nu.as_ref().ok_or(Error::MissingForm("nu"))
    }

    pub fn mu(&self) -> Result<&KForm> {
        self.mu.as_ref().ok_or(Error::MissingForm("mu"))
    }

    /// `alpha(X)` as an expression.
    pub fn alpha_of_x(&self) -> Expr {
        self.alpha.interior(&self.x).expect("alpha is a 1-form").coeff(&[])
    }

    /// Sample points of `plan` inside the model's sampling box, followed
    /// (for inserted plugs) by the image of the same plan over the plug chart.
    pub fn samples(&self, plan: &SamplePlan) -> Vec<Vec<f64>> {
        let mut pts = sample_box(&self.chart, &self.sample_bounds, plan);
        if let Some(site) = &self.site {
            let tape = crate::expr::Tape::new(site.comps());
            for p in sample_box(site.source(), &site.source().bounds(), plan) {
                let mut q = tape.eval(&p);
                self.chart.wrap(&mut q);
                pts.push(q);
            }
        }
        pts
    }
}

/// Runs and records build certificates for one model.
pub(crate) struct Certifier<'a> {
    model: &'a mut ConstructionModel,
    pts: Vec<Vec<f64>>,
}

/// Samples used by build certificates.
pub(crate) const BUILD_SAMPLES: usize = 1000;
/// Residual bound of build certificates.
pub(crate) const BUILD_TOL: f64 = 1e-10;

impl<'a> Certifier<'a> {
    pub fn new(model: &'a mut ConstructionModel) -> Certifier<'a> {
        let pts = model.samples(&SamplePlan::new(BUILD_SAMPLES, 0));
        Certifier { model, pts }
    }

    pub fn push_max(&mut self, name: &str, e: scan::Extreme, bound: f64) {
        self.record(name, "max", e, bound);
    }

    fn record(&mut self, name: &str, kind: &str, e: scan::Extreme, bound: f64) {
        let passed = match kind {
            "max" => e.value < bound,
            "min" => e.value > bound,
            _ => e.value >= bound,
        };
        self.model.build_checks.push(BuildCheck {
            name: name.to_string(),
            kind: kind.to_string(),
            value: e.value,
            bound,
            location: e.location,
            passed,
        });
    }

    /// Residual: sup of the form's coefficients must stay below `bound`.
    pub fn small(&mut self, name: &str, form: &KForm, bound: f64) {
        let e = scan::max_abs(form, &self.pts);
        self.record(name, "max", e, bound);
    }

    pub fn small_exprs(&mut self, name: &str, exprs: &[Expr], bound: f64) {
        let e = scan::max_abs_exprs(exprs, &self.pts);
        self.record(name, "max", e, bound);
    }

    /// Margin: the expression's minimum must exceed `bound`.
    pub fn positive(&mut self, name: &str, expr: &Expr, bound: f64) {
        let e = scan::min_of(expr, &self.pts);
        self.record(name, "min", e, bound);
    }

    pub fn floor(&mut self, name: &str, expr: &Expr, bound: f64) {
        let e = scan::min_of(expr, &self.pts);
        self.record(name, "floor", e, bound);
    }

    /// Exactness on a sub-region: every listed expression vanishes identically
    /// (bitwise zero) on the sample points inside `region`.
    pub fn exact_zero_on(&mut self, name: &str, exprs: &[Expr], region: &Region) {
        let inside: Vec<Vec<f64>> = self.pts.iter().filter(|p| region.contains(p)).cloned().collect();
        self.exact_zero_at(name, exprs, &inside);
    }

    /// Every listed expression is bitwise zero at every given point.
    pub fn exact_zero_at(&mut self, name: &str, exprs: &[Expr], pts: &[Vec<f64>]) {
        let e = scan::max_abs_exprs(exprs, pts);
        let passed = e.value == 0.0 && !pts.is_empty();
        self.model.build_checks.push(BuildCheck {
            name: name.to_string(),
            kind: "max".into(),
            value: if pts.is_empty() { f64::NAN } else { e.value },
            bound: 0.0,
            location: e.location,
            passed,
        });
    }

    /// Fail the build if any recorded check failed.
    pub fn finish(self) -> Result<()> {
        match self.model.build_checks.iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(Error::BuildCertificate {
                model: self.model.name().to_string(),
                check: c.name.clone(),
                detail: format!("{} = {:e} (bound {:e}) at {:?}", c.kind, c.value, c.bound, c.location),
            }),
        }
    }
}

/// Components of `X - d/dz` and coefficients of `alpha - dz`, for collar checks.
pub(crate) fn unit_axis_defect(x: &VectorField, alpha: &KForm, axis: usize) -> Vec<Expr> {
    let mut out: Vec<Expr> = x
        .comps()
        .iter()
        .enumerate()
        .map(|(i, c)| if i == axis { c - 1.0 } else { c.clone() })
        .collect();
    let dz = KForm::dx(alpha.chart().clone(), axis);
    out.extend(alpha.sub(&dz).expect("same chart").terms().map(|(_, c)| c.clone()));
    out
}

/// Coordinate expressions `x_0, ..., x_{d-1}`.
pub(crate) fn coords(d: usize) -> Vec<Expr> {
    (0..d).map(Expr::coord).collect()
}

/// A 1-form from `(index, coefficient)` pairs.
pub(crate) fn one_form(chart: &ChartRef, terms: Vec<(usize, Expr)>) -> KForm {
    KForm::from_terms(chart.clone(), 1, terms.into_iter().map(|(i, c)| (vec![i], c))).expect("valid 1-form")
}

/// Re-home a form onto a chart whose leading factors are the form's chart.
pub(crate) fn lift(form: &KForm, chart: &ChartRef) -> KForm {
    KForm::from_terms(chart.clone(), form.degree(), form.terms().map(|(i, c)| (i.clone(), c.clone())))
        .expect("lifted form fits the larger chart")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_parameter_sensitive() {
        let a = Construction::vp_plug(5);
        assert_eq!(a.hash(), Construction::vp_plug(5).hash());
        assert_ne!(a.hash(), Construction::vp_plug(6).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn constructions_round_trip_through_json() {
        for c in [
            Construction::aperiodic(),
            Construction::binding_far_insertion(),
            Construction::suspension(vec![0.414213562, 0.732050808]),
            Construction::wilson_standard(5),
            Construction::ContactWrap { n: 2 },
        ] {
            let s = serde_json::to_string(&c).unwrap();
            let back: Construction = serde_json::from_str(&s).unwrap();
            assert_eq!(back, c);
        }
        let s = serde_json::to_string(&Construction::vp_plug(5)).unwrap();
        assert!(s.contains("\"construction\":\"wilson_vp_plug\""));
        assert!(s.contains("1.618033988749895"));
    }
}
