//! One-variable smooth profiles with exact plateaus.
//!
//! Everything is assembled from the flat glue `e(u) = exp(-1/u)` (`u > 0`),
//! so plateau values are exact constants rather than near-constants.

use serde::{Deserialize, Serialize};
use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// `sigma(u) = e(u) / (e(u) + e(1-u))`: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smooth_step(u: &Expr) -> Expr {
    let a = u.glue(0);
    let b = (1.0 - u).glue(0);
    &a / (&a + &b)
}

/// Peak bump `exp(1 - 1/(1-u^2))` on `|u| < 1`, zero elsewhere; equals 1 only at `u = 0`.
pub fn peak(u: &Expr) -> Expr {
    E * (1.0 - u.square()).glue(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// 0 below `a`, 1 above `b`.
    Transition { a: f64, b: f64 },
    /// 1 below `inner`, 0 above `outer`.
    Bump { inner: f64, outer: f64 },
    /// Peak bump of height 1 at `center`, supported in `center +- half_width`.
    Peak { center: f64, half_width: f64 },
    /// `r^2` near 0, 1 near 1.
    FTilde,
    /// 1 near 0, 0 near 1.
    GTilde,
    /// Transition across `[1/3, 2/3]`.
    H,
    /// Positive on `(0, 1]`, 1/2 on `[1/4, 2/3]`, 1 on `[1 - eps, 1]`.
    F { eps: f64 },
    /// Bump with plateau `[0, 1/3]` and support `[0, 2/3)`.
    PhiUnit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    ValueAt {
        t: f64,
        value: f64,
    },
    ConstantOn {
        lo: f64,
        hi: f64,
        value: f64,
    },
    /// `p(t) = coeff * t^power` on `[lo, hi]`.
    PowerOn {
        lo: f64,
        hi: f64,
        coeff: f64,
        power: i32,
    },
    DerivZeroOutside {
        lo: f64,
        hi: f64,
    },
    /// Strict positivity on `(lo, hi]`.
    PositiveOn {
        lo: f64,
        hi: f64,
    },
}

impl Constraint {
    pub fn describe(&self) -> String {
        match self {
            Constraint::ValueAt { t, value } => format!("p({t}) = {value}"),
            Constraint::ConstantOn { lo, hi, value } => format!("p = {value} on [{lo}, {hi}]"),
            Constraint::PowerOn { lo, hi, coeff, power } => format!("p = {coeff} t^{power} on [{lo}, {hi}]"),
            Constraint::DerivZeroOutside { lo, hi } => format!("p' = 0 outside ({lo}, {hi})"),
            Constraint::PositiveOn { lo, hi } => format!("p > 0 on ({lo}, {hi}]"),
        }
    }
}

/// A validated-on-demand smooth profile; serializes as its kind only.
#[derive(Clone, Debug)]
pub struct Profile {
    kind: ProfileKind,
    constraints: Vec<Constraint>,
    domain: (f64, f64),
    expr: Expr,
}

impl Serialize for Profile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.kind.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Profile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Profile, D::Error> {
        let kind = ProfileKind::deserialize(d)?;
        Profile::from_kind(kind).map_err(serde::de::Error::custom)
    }
}

impl PartialEq for Profile {
    fn eq(&self, other: &Profile) -> bool {
        self.kind == other.kind
    }
}

fn transition_expr(t: &Expr, a: f64, b: f64) -> Expr {
    smooth_step(&((t - a) / (b - a)))
}

fn f_tilde_expr(s: &Expr) -> Expr {
    let s2 = s.square();
    &s2 + (1.0 - &s2) * transition_expr(s, 0.25, 0.75)
}

impl Profile {
    pub fn from_kind(kind: ProfileKind) -> Result<Profile> {
        let t = Expr::coord(0);
        let third = 1.0 / 3.0;
        let two_thirds = 2.0 / 3.0;
        let (expr, constraints, domain) = match &kind {
            ProfileKind::Transition { a, b } => {
                if !(a < b) {
                    return Err(Error::Param(format!("transition needs a < b, got [{a}, {b}]")));
                }
                let w = b - a;
                (
                    transition_expr(&t, *a, *b),
                    vec![
                        Constraint::ConstantOn {
                            lo: a - w,
                            hi: *a,
                            value: 0.0,
                        },
                        Constraint::ConstantOn {
                            lo: *b,
                            hi: b + w,
                            value: 1.0,
                        },
                        Constraint::DerivZeroOutside { lo: *a, hi: *b },
                    ],
                    (a - w, b + w),
                )
            }
            ProfileKind::Bump { inner, outer } => {
                if !(0.0 <= *inner && inner < outer) {
                    return Err(Error::Param(format!("bump needs 0 <= inner < outer, got [{inner}, {outer}]")));
                }
                (
                    1.0 - transition_expr(&t, *inner, *outer),
                    vec![
                        Constraint::ConstantOn {
                            lo: 0.0,
                            hi: *inner,
                            value: 1.0,
                        },
                        Constraint::ConstantOn {
                            lo: *outer,
                            hi: outer + (outer - inner),
                            value: 0.0,
                        },
                        Constraint::DerivZeroOutside { lo: *inner, hi: *outer },
                    ],
                    (0.0, outer + (outer - inner)),
                )
            }
            ProfileKind::Peak { center, half_width } => {
                if !(*half_width > 0.0) {
                    return Err(Error::Param(format!("peak needs a positive half width, got {half_width}")));
                }
                let (c, w) = (*center, *half_width);
                (
                    peak(&((&t - c) / w)),
                    vec![
                        Constraint::ValueAt { t: c, value: 1.0 },
                        Constraint::ConstantOn {
                            lo: c + w,
                            hi: c + 2.0 * w,
                            value: 0.0,
                        },
                        Constraint::ConstantOn {
                            lo: c - 2.0 * w,
                            hi: c - w,
                            value: 0.0,
                        },
                        Constraint::DerivZeroOutside { lo: c - w, hi: c + w },
                    ],
                    (c - 2.0 * w, c + 2.0 * w),
                )
            }
            ProfileKind::FTilde => (
                f_tilde_expr(&t),
                vec![
                    Constraint::ValueAt { t: 0.0, value: 0.0 },
                    Constraint::PowerOn {
                        lo: 0.0,
                        hi: 0.25,
                        coeff: 1.0,
                        power: 2,
                    },
                    Constraint::ConstantOn {
                        lo: 0.75,
                        hi: 1.0,
                        value: 1.0,
                    },
                    Constraint::PositiveOn { lo: 0.0, hi: 1.0 },
                ],
                (0.0, 1.0),
            ),
            ProfileKind::GTilde => (
                1.0 - transition_expr(&t, 0.25, 0.75),
                vec![
                    Constraint::ConstantOn {
                        lo: 0.0,
                        hi: 0.25,
                        value: 1.0,
                    },
                    Constraint::ConstantOn {
                        lo: 0.75,
                        hi: 1.0,
                        value: 0.0,
                    },
                ],
                (0.0, 1.0),
            ),
            ProfileKind::H => (
                transition_expr(&t, third, two_thirds),
                vec![
                    Constraint::ValueAt { t: 0.0, value: 0.0 },
                    Constraint::ValueAt { t: 1.0, value: 1.0 },
                    Constraint::ConstantOn {
                        lo: 0.0,
                        hi: third,
                        value: 0.0,
                    },
                    Constraint::ConstantOn {
                        lo: two_thirds,
                        hi: 1.0,
                        value: 1.0,
                    },
                    Constraint::DerivZeroOutside { lo: third, hi: two_thirds },
                ],
                (0.0, 1.0),
            ),
            ProfileKind::F { eps } => {
                if !(*eps > 0.0 && *eps < third) {
                    return Err(Error::Param(format!("f needs 0 < eps < 1/3, got {eps}")));
                }
                let rising = 0.5 * f_tilde_expr(&(3.0 * &t));
                (
                    rising + 0.5 * transition_expr(&t, two_thirds, 1.0 - eps),
                    vec![
                        Constraint::ValueAt { t: 0.0, value: 0.0 },
                        Constraint::ConstantOn {
                            lo: third,
                            hi: two_thirds,
                            value: 0.5,
                        },
                        Constraint::ConstantOn {
                            lo: 1.0 - eps / 2.0,
                            hi: 1.0,
                            value: 1.0,
                        },
                        Constraint::PositiveOn { lo: 0.0, hi: 1.0 },
                    ],
                    (0.0, 1.0),
                )
            }
            ProfileKind::PhiUnit => (
                1.0 - transition_expr(&t, third, two_thirds),
                vec![
                    Constraint::ConstantOn {
                        lo: 0.0,
                        hi: third,
                        value: 1.0,
                    },
                    Constraint::ConstantOn {
                        lo: two_thirds,
                        hi: 1.0,
                        value: 0.0,
                    },
                ],
                (0.0, 1.0),
            ),
        };
        Ok(Profile {
            kind,
            constraints,
            domain,
            expr,
        })
    }

    pub fn transition(a: f64, b: f64) -> Result<Profile> {
        Profile::from_kind(ProfileKind::Transition { a, b })
    }

    pub fn bump(inner: f64, outer: f64) -> Result<Profile> {
        Profile::from_kind(ProfileKind::Bump { inner, outer })
    }

    pub fn peak(center: f64, half_width: f64) -> Result<Profile> {
        Profile::from_kind(ProfileKind::Peak { center, half_width })
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Replace the declared constraints (used to validate alternative claims).
    pub fn with_constraints(mut self, constraints: Vec<Constraint>) -> Profile {
        self.constraints = constraints;
        self
    }

    /// The profile as an expression in coordinate 0.
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// The composition `p(arg)`.
    pub fn apply(&self, arg: &Expr) -> Expr {
        self.expr.substitute(std::slice::from_ref(arg))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.expr.eval(&[t])
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.expr.partial(0).eval(&[t])
    }

    pub fn validate(&self) -> ValidationReport {
        validate_profile(self)
    }
}

/// The five profiles of the binding-neighborhood and round-Morse constructions.
#[derive(Clone, Debug)]
pub struct StandardProfiles {
    pub f_tilde: Profile,
    pub g_tilde: Profile,
    pub h: Profile,
    pub f: Profile,
    pub phi_unit: Profile,
}

pub const DEFAULT_EPS: f64 = 0.125;

pub fn standard_profiles() -> StandardProfiles {
    let mk = |k| Profile::from_kind(k).expect("fixed profile parameters are valid");
    StandardProfiles {
        f_tilde: mk(ProfileKind::FTilde),
        g_tilde: mk(ProfileKind::GTilde),
        h: mk(ProfileKind::H),
        f: mk(ProfileKind::F { eps: DEFAULT_EPS }),
        phi_unit: mk(ProfileKind::PhiUnit),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint: String,
    pub passed: bool,
    pub worst_violation: f64,
    /// Where the worst violation (or the minimum, for positivity) occurs.
    pub location: Option<f64>,
    /// Sampled minimum, for positivity constraints.
    pub minimum: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub profile: ProfileKind,
    pub samples: usize,
    pub checks: Vec<ConstraintCheck>,
    pub passed: bool,
}

const DENSE: usize = 10_000;

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 })
}

/// Check every declared constraint on a dense grid plus breakpoints, and the
/// exact derivative against central differences.
pub fn validate_profile(p: &Profile) -> ValidationReport {
    let tape = crate::expr::Tape::new(&[p.expr.clone(), p.expr.partial(0)]);
    let val = |t: f64| tape.eval(&[t]);
    let mut checks = Vec::new();
    for c in &p.constraints {
        let mut worst = 0.0f64;
        let mut loc = None;
        let mut minimum = None;
        let track = |v: f64, t: f64, worst: &mut f64, loc: &mut Option<f64>| {
            if v > *worst || v.is_nan() {
                *worst = if v.is_nan() { f64::INFINITY } else { v };
                *loc = Some(t);
            }
        };
        let passed = match c {
            Constraint::ValueAt { t, value } => {
                track((val(*t)[0] - value).abs(), *t, &mut worst, &mut loc);
                worst == 0.0
            }
            Constraint::ConstantOn { lo, hi, value } => {
                for t in grid(*lo, *hi, DENSE) {
                    track((val(t)[0] - value).abs(), t, &mut worst, &mut loc);
                }
                worst == 0.0
            }
            Constraint::PowerOn { lo, hi, coeff, power } => {
                for t in grid(*lo, *hi, DENSE) {
                    let target = coeff * t.powi(*power);
                    track((val(t)[0] - target).abs(), t, &mut worst, &mut loc);
                }
                worst <= 4.0 * f64::EPSILON
            }
            Constraint::DerivZeroOutside { lo, hi } => {
                let (a, b) = p.domain;
                for t in grid(a, b, DENSE).filter(|t| t <= lo || t >= hi) {
                    track(val(t)[1].abs(), t, &mut worst, &mut loc);
                }
                worst == 0.0
            }
            Constraint::PositiveOn { lo, hi } => {
                let mut m = f64::INFINITY;
                let probes = [1e-6, 1e-4, 1e-2].into_iter().map(|d| lo + d * (hi - lo));
                for t in grid(*lo, *hi, DENSE).skip(1).chain(probes) {
                    let v = val(t)[0];
                    if v < m || v.is_nan() {
                        m = v;
                        loc = Some(t);
                    }
                }
                minimum = Some(m);
                worst = if m > 0.0 { 0.0 } else { -m };
                m > 0.0
            }
        };
        checks.push(ConstraintCheck {
            constraint: c.describe(),
            passed,
            worst_violation: worst,
            location: loc,
            minimum,
        });
    }
    let (a, b) = p.domain;
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut loc = None;
    for t in grid(a + h, b - h, DENSE / 10) {
        let exact = val(t)[1];
        let fd = (val(t + h)[0] - val(t - h)[0]) / (2.0 * h);
        let err = (exact - fd).abs() / exact.abs().max(1.0);
        if err > worst {
            worst = err;
            loc = Some(t);
        }
    }
    checks.push(ConstraintCheck {
        constraint: "exact derivative matches central differences".into(),
        passed: worst < 1e-6,
        worst_violation: worst,
        location: loc,
        minimum: None,
    });
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport {
        profile: p.kind.clone(),
        samples: DENSE,
        checks,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_endpoints_and_flatness() {
        let t = Profile::transition(1.0 / 3.0, 2.0 / 3.0).unwrap();
        assert_eq!(t.eval(1.0 / 3.0), 0.0);
        assert_eq!(t.eval(2.0 / 3.0), 1.0);
        assert_eq!(t.deriv(0.3), 0.0);
        assert_eq!(t.deriv(0.7), 0.0);
        let h = 1e-6;
        let fd = (t.eval(0.5 + h) - t.eval(0.5 - h)) / (2.0 * h);
        assert!((t.deriv(0.5) - fd).abs() < 1e-6 * fd.abs());
        assert!(Profile::transition(1.0, 1.0).is_err());
    }

    #[test]
    fn transition_is_strictly_increasing_inside() {
        let t = Profile::transition(0.2, 0.9).unwrap();
        let mut prev = t.eval(0.25);
        for k in 1..1000 {
            let v = t.eval(0.25 + 0.6 * k as f64 / 1000.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn bump_plateaus_and_edges() {
        let b = Profile::bump(0.25, 0.75).unwrap();
        assert_eq!(b.eval(0.1), 1.0);
        assert_eq!(b.eval(0.9), 0.0);
        let fd = |t: f64| (b.eval(t + 1e-6) - b.eval(t - 1e-6)) / 2e-6;
        assert!(fd(0.25 - 1e-4).abs() < 1e-8);
        assert!(fd(0.75 + 1e-4).abs() < 1e-8);
        assert!(Profile::bump(0.5, 0.5).is_err());
        // Composed with (|z| - 1)^2 it is exactly 1 on |z| = 1.
        let z = Expr::coord(0);
        let g = b.apply(&(z.square().sqrt() - 1.0).square());
        assert_eq!(g.eval(&[1.0]), 1.0);
        assert_eq!(g.eval(&[-1.0]), 1.0);
    }

    #[test]
    fn peak_is_one_only_at_center() {
        let p = Profile::peak(1.5, 0.4).unwrap();
        assert_eq!(p.eval(1.5), 1.0);
        assert!(p.eval(1.5 + 1e-6) < 1.0);
        assert_eq!(p.eval(1.9), 0.0);
        assert_eq!(p.eval(1.0), 0.0);
    }

    #[test]
    fn standard_profile_values() {
        let pp = standard_profiles();
        assert!((pp.f_tilde.eval(0.1) - 0.01).abs() < 1e-17);
        assert_eq!(pp.f.eval(0.5), 0.5);
        for r in [1e-6, 1e-4, 0.01] {
            assert!(pp.f.eval(r) > 0.0, "f({r}) = {}", pp.f.eval(r));
        }
        assert_eq!(pp.f.eval(0.97), 1.0);
        assert_eq!(pp.h.eval(0.2), 0.0);
        assert_eq!(pp.h.eval(0.8), 1.0);
        assert_eq!(pp.phi_unit.eval(0.1), 1.0);
        assert_eq!(pp.phi_unit.eval(0.7), 0.0);
    }

    #[test]
    fn disjoint_supports_of_h_prime_and_one_minus_two_f() {
        let pp = standard_profiles();
        for k in 0..=2000 {
            let r = k as f64 / 2000.0;
            assert_eq!(pp.h.deriv(r) * (1.0 - 2.0 * pp.f.eval(r)), 0.0, "r = {r}");
        }
    }

    #[test]
    fn all_standard_profiles_validate() {
        let pp = standard_profiles();
        for p in [&pp.f_tilde, &pp.g_tilde, &pp.h, &pp.f, &pp.phi_unit] {
            let rep = p.validate();
            assert!(rep.passed, "{rep:#?}");
        }
        let rep = pp.f.validate();
        let pos = rep.checks.iter().find(|c| c.minimum.is_some()).unwrap();
        assert!(pos.minimum.unwrap() > 0.0);
    }

    #[test]
    fn mislabeled_plateau_is_caught() {
        let t = Profile::transition(1.0 / 3.0, 2.0 / 3.0)
            .unwrap()
            .with_constraints(vec![Constraint::ConstantOn {
                lo: 0.2,
                hi: 0.8,
                value: 0.0,
            }]);
        let rep = t.validate();
        assert!(!rep.passed);
        let c = &rep.checks[0];
        assert!(!c.passed);
        assert_eq!(c.worst_violation, 1.0);
        assert!((c.location.unwrap() - 0.65).abs() < 0.05, "{:?}", c.location);
    }

    #[test]
    fn serializes_as_kind() {
        let pp = standard_profiles();
        let s = serde_json::to_string(&pp.f).unwrap();
        assert_eq!(s, r#"{"kind":"f","eps":0.125}"#);
        let back: Profile = serde_json::from_str(&s).unwrap();
        assert_eq!(back.eval(0.3), pp.f.eval(0.3));
    }
}
