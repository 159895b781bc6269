//! Sampled certificates of the identities behind geodesible, Beltrami,
//! stable Eulerisable and volume-preserving fields, plus metric synthesis,
//! curl, Reeb fields and rank profiles.

mod curl;
mod metric;
mod reeb;
pub mod scan;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::ConstructionModel;
use crate::error::{Error, Result};
use crate::field::KForm;
use crate::forms::rank_of;
use crate::sampling::SamplePlan;

pub use curl::{beltrami_parallelism, curl, Parallelism, ParallelismOptions};
pub use metric::{metric_from_pair, MetricCheck, PointwiseMetric};
pub use reeb::{reeb_of_ses, ReebField};
pub use scan::Extreme;

/// Default residual tolerance for identities built from exact derivatives.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// `alpha(X) > 0` and `i_X d alpha = 0`.
    Gluck,
    /// `alpha(X) > 0` and `i_X (d alpha)^n = 0` in dimension `2n + 1`.
    Beltrami,
    /// `alpha ^ nu > 0`, `d nu = 0` and `i_R d alpha = 0` for the Reeb field `R`.
    Ses,
    /// `d i_X mu = 0`.
    Volume,
    /// Euler with constant Bernoulli function: `i_X d alpha + dB = 0` (`B = 0`) and `d i_X mu = 0`.
    EulerConstB,
}

impl Certificate {
    pub const ALL: [Certificate; 5] = [
        Certificate::Gluck,
        Certificate::Beltrami,
        Certificate::Ses,
        Certificate::Volume,
        Certificate::EulerConstB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Certificate::Gluck => "gluck",
            Certificate::Beltrami => "beltrami",
            Certificate::Ses => "ses",
            Certificate::Volume => "volume",
            Certificate::EulerConstB => "euler_constB",
        }
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Certificate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Certificate> {
        Certificate::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s) || format!("{c:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Param(format!(
                    "unknown certificate `{s}` (expected one of gluck, beltrami, ses, volume, euler_constB)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub scheme: String,
    pub seed: u64,
    /// Interior low-discrepancy points requested.
    pub count: usize,
    /// Extra points on interval faces.
    pub boundary: usize,
    /// Points actually evaluated (including any plug-site image points).
    pub total: usize,
}

/// A named sampled extreme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub name: String,
    pub value: f64,
    pub location: Vec<f64>,
}

impl Measure {
    fn new(name: &str, e: Extreme) -> Measure {
        Measure {
            name: name.to_string(),
            value: e.value,
            location: e.location,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub certificate: Certificate,
    pub model: String,
    pub model_hash: String,
    pub samples: SampleInfo,
    pub tolerance: f64,
    /// Minimum values; each must be strictly positive.
    pub margins: Vec<Measure>,
    /// Maximum absolute coefficients; each must be below `tolerance`.
    pub residuals: Vec<Measure>,
    pub verdict: Verdict,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn margin(&self, name: &str) -> Option<f64> {
        self.margins.iter().find(|m| m.name == name).map(|m| m.value)
    }

    /// Largest residual (NaN if any residual is NaN).
    pub fn worst_residual(&self) -> f64 {
        self.residuals.iter().fold(
            0.0,
            |m: f64, r| if r.value.is_nan() || m.is_nan() { f64::NAN } else { m.max(r.value) },
        )
    }
}

/// Run one certificate on `model` over the sample plan.
pub fn certify(model: &ConstructionModel, which: Certificate, plan: &SamplePlan, tol: f64) -> Result<VerifyReport> {
    let pts = model.samples(plan);
    let mut margins = vec![];
    let mut residuals = vec![];
    let d = model.dim();
    let alpha_x = || Measure::new("alpha(X)", scan::min_of(&model.alpha_of_x(), &pts));
    let ix_dalpha = || -> Result<Measure> {
        Ok(Measure::new(
            "i_X d alpha",
            scan::max_abs(&model.alpha.d().interior(&model.x)?, &pts),
        ))
    };
    let div = || -> Result<Measure> { Ok(Measure::new("d i_X mu", scan::max_abs(&model.mu()?.interior(&model.x)?.d(), &pts))) };
    match which {
        Certificate::Gluck => {
            margins.push(alpha_x());
            residuals.push(ix_dalpha()?);
        }
        Certificate::Beltrami => {
            if d.is_multiple_of(2) {
                return Err(Error::Param(format!("beltrami needs an odd dimension, model has {d}")));
            }
            margins.push(alpha_x());
            let form = model.alpha.d().power((d - 1) / 2)?.interior(&model.x)?;
            residuals.push(Measure::new("i_X (d alpha)^n", scan::max_abs(&form, &pts)));
        }
        Certificate::Ses => {
            let nu = model.nu()?;
            let top = model.alpha.wedge(nu)?.top_coefficient()?;
            margins.push(Measure::new("alpha ^ nu", scan::min_of(&top, &pts)));
            residuals.push(Measure::new("d nu", scan::max_abs(&nu.d(), &pts)));
            residuals.push(Measure::new("i_R d alpha", reeb_residual(model, nu, &pts)?));
        }
        Certificate::Volume => residuals.push(div()?),
        Certificate::EulerConstB => {
            margins.push(alpha_x());
            let mut m = ix_dalpha()?;
            m.name = "i_X d alpha + dB (B = 0)".into();
            residuals.push(m);
            residuals.push(div()?);
        }
    }
    let ok = margins.iter().all(|m| m.value > 0.0) && residuals.iter().all(|r| r.value < tol);
    Ok(VerifyReport {
        certificate: which,
        model: model.name().to_string(),
        model_hash: model.hash(),
        samples: SampleInfo {
            scheme: plan.scheme().to_string(),
            seed: plan.seed,
            count: plan.count,
            boundary: plan.boundary,
            total: pts.len(),
        },
        tolerance: tol,
        margins,
        residuals,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    })
}

/// `max |i_R d alpha|` with `R` solved pointwise; a degenerate point counts as infinite.
fn reeb_residual(model: &ConstructionModel, nu: &KForm, pts: &[Vec<f64>]) -> Result<Extreme> {
    let reeb = reeb_of_ses(&model.alpha, nu)?;
    let dalpha = model.alpha.d();
    if dalpha.is_zero() {
        return Ok(Extreme {
            value: 0.0,
            location: pts.first().cloned().unwrap_or_default(),
        });
    }
    let da = dalpha.compile();
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|p| match reeb.eval(p) {
            Ok(r) => {
                let a = da.two_form_matrix(p);
                let v = a.transpose() * nalgebra::DVector::from_vec(r);
                v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
            }
            Err(_) => f64::INFINITY,
        })
        .collect();
    let mut best = Extreme {
        value: 0.0,
        location: pts.first().cloned().unwrap_or_default(),
    };
    for (v, p) in vals.into_iter().zip(pts) {
        if v.is_nan() || v > best.value {
            best = Extreme {
                value: v,
                location: p.clone(),
            };
        }
    }
    Ok(best)
}

/// Histogram of `rank(d alpha)` over sample points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    pub samples: usize,
    pub histogram: BTreeMap<usize, usize>,
    /// Largest possible rank, `2 floor(d/2)`.
    pub max_rank: usize,
    /// Maximal rank at 99% of samples or more.
    pub generic: bool,
}

pub fn rank_profile(alpha: &KForm, pts: &[Vec<f64>], tol: f64) -> Result<RankProfile> {
    if alpha.degree() != 1 {
        return Err(Error::Degree {
            expected: 1,
            got: alpha.degree(),
        });
    }
    let d = alpha.chart().dim();
    let da = alpha.d().compile();
    let ranks: Vec<usize> = pts
        .par_iter()
        .map(|p| {
            if da.indices.is_empty() {
                0
            } else {
                rank_of(&da.two_form_matrix(p), tol)
            }
        })
        .collect();
    let mut histogram = BTreeMap::new();
    for r in &ranks {
        *histogram.entry(*r).or_insert(0) += 1;
    }
    let max_rank = 2 * (d / 2);
    let at_max = histogram.get(&max_rank).copied().unwrap_or(0);
    Ok(RankProfile {
        samples: pts.len(),
        histogram,
        max_rank,
        generic: !pts.is_empty() && at_max as f64 >= 0.99 * pts.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::Construction;

    fn plan() -> SamplePlan {
        SamplePlan::new(300, 1)
    }

    #[test]
    fn names_parse() {
        for c in Certificate::ALL {
            assert_eq!(c.name().parse::<Certificate>().unwrap(), c);
        }
        assert_eq!("euler_constb".parse::<Certificate>().unwrap(), Certificate::EulerConstB);
        assert!("nope".parse::<Certificate>().is_err());
    }

    #[test]
    fn suspension_ses_is_exact() {
        let m = Construction::suspension(vec![0.25, 0.5]).build().unwrap();
        let r = certify(&m, Certificate::Ses, &plan(), DEFAULT_TOL).unwrap();
        assert!(r.passed());
        assert_eq!(r.margin("alpha ^ nu"), Some(1.0));
        assert_eq!(r.worst_residual(), 0.0);
    }

    #[test]
    fn vp_plug_splits_gluck_and_beltrami() {
        let m = Construction::vp_plug(5).build().unwrap();
        let g = certify(&m, Certificate::Gluck, &plan(), 1e-10).unwrap();
        assert!(!g.passed() && g.residual("i_X d alpha").unwrap() > 0.05);
        assert!(g.margin("alpha(X)").unwrap() > 0.0);
        assert!(certify(&m, Certificate::Beltrami, &plan(), 1e-10).unwrap().passed());
        assert!(certify(&m, Certificate::Volume, &plan(), 1e-10).unwrap().passed());
        assert!(matches!(
            certify(&m, Certificate::Ses, &plan(), 1e-10),
            Err(Error::MissingForm("nu"))
        ));
    }

    #[test]
    fn beltrami_refuses_even_dimension() {
        let m = Construction::vp_plug(4).build().unwrap();
        assert!(certify(&m, Certificate::Beltrami, &plan(), 1e-10).is_err());
    }

    #[test]
    fn rank_profiles() {
        let wrap = Construction::ContactWrap { n: 2 }.build().unwrap();
        let core: Vec<Vec<f64>> = (0..100)
            .map(|k| {
                crate::sampling::halton(k, 0, 5)
                    .iter()
                    .enumerate()
                    .map(|(i, t)| if i == 0 { 6.0 * t } else { 0.4 * t - 0.2 })
                    .collect()
            })
            .collect();
        let rp = rank_profile(&wrap.alpha, &core, 1e-9).unwrap();
        assert!(rp.generic && rp.histogram == BTreeMap::from([(4, 100)]));
        let sus = Construction::suspension(vec![0.1, 0.2]).build().unwrap();
        let rp = rank_profile(&sus.alpha, &core[..10], 1e-9).unwrap();
        assert_eq!(rp.histogram, BTreeMap::from([(0, 10)]));
        assert!(!rp.generic);
        let vp = Construction::vp_plug(5).build().unwrap();
        let pts = vp.samples(&plan());
        let rp = rank_profile(&vp.alpha, &pts, 1e-9).unwrap();
        assert!(rp.histogram.keys().all(|&r| r <= 2) && !rp.generic);
    }
}
