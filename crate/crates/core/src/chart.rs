use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorKind {
    Periodic { period: f64 },
    Interval { lo: f64, hi: f64 },
}

/// One coordinate of a product chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    #[serde(flatten)]
    pub kind: FactorKind,
}

impl Factor {
    pub fn periodic(name: impl Into<String>, period: f64) -> Factor {
        Factor {
            name: name.into(),
            kind: FactorKind::Periodic { period },
        }
    }

    pub fn interval(name: impl Into<String>, lo: f64, hi: f64) -> Factor {
        Factor {
            name: name.into(),
            kind: FactorKind::Interval { lo, hi },
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, FactorKind::Periodic { .. })
    }

    /// Fundamental domain: `[0, period)` or `[lo, hi]`.
    pub fn range(&self) -> (f64, f64) {
        match self.kind {
            FactorKind::Periodic { period } => (0.0, period),
            FactorKind::Interval { lo, hi } => (lo, hi),
        }
    }
}

/// An ordered product of circles and closed intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Factor>", into = "Vec<Factor>")]
pub struct Chart {
    factors: Vec<Factor>,
}

impl TryFrom<Vec<Factor>> for Chart {
    type Error = Error;
    fn try_from(factors: Vec<Factor>) -> Result<Chart> {
        Chart::new(factors)
    }
}

impl From<Chart> for Vec<Factor> {
    fn from(c: Chart) -> Vec<Factor> {
        c.factors
    }
}

impl Chart {
    pub fn new(factors: Vec<Factor>) -> Result<Chart> {
        if factors.is_empty() {
            return Err(Error::InvalidChart("a chart needs at least one factor".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidChart(format!("duplicate factor name `{}`", f.name)));
            }
            match f.kind {
                FactorKind::Periodic { period } if !(period > 0.0 && period.is_finite()) => {
                    return Err(Error::InvalidChart(format!("factor `{}` has nonpositive period {period}", f.name)))
                }
                FactorKind::Interval { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                    return Err(Error::InvalidChart(format!("factor `{}` has empty interval [{lo}, {hi}]", f.name)))
                }
                _ => {}
            }
        }
        Ok(Chart { factors })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &Factor {
        &self.factors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    /// Reduce periodic coordinates into their fundamental domain.
    pub fn wrap(&self, p: &mut [f64]) {
        for (x, f) in p.iter_mut().zip(&self.factors) {
            if let FactorKind::Periodic { period } = f.kind {
                *x = x.rem_euclid(period);
                if *x >= period {
                    *x = 0.0;
                }
            }
        }
    }

    /// Interval coordinates within bounds (up to `slack`); periodic ones are unconstrained.
    pub fn contains(&self, p: &[f64], slack: f64) -> bool {
        p.len() == self.dim()
            && p.iter().zip(&self.factors).all(|(x, f)| match f.kind {
                FactorKind::Periodic { .. } => x.is_finite(),
                FactorKind::Interval { lo, hi } => *x >= lo - slack && *x <= hi + slack,
            })
    }

    /// Signed difference `b - a`, taking the shortest representative on circles.
    pub fn difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.factors)
            .map(|((x, y), f)| match f.kind {
                FactorKind::Periodic { period } => {
                    let d = (y - x).rem_euclid(period);
                    if d > period / 2.0 {
                        d - period
                    } else {
                        d
                    }
                }
                FactorKind::Interval { .. } => y - x,
            })
            .collect()
    }

    /// Bounding box of the fundamental domain.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.factors.iter().map(Factor::range).collect()
    }

    /// Product chart `self x other`.
    pub fn product(&self, other: &Chart) -> Result<Chart> {
        let mut f = self.factors.clone();
        f.extend(other.factors.iter().cloned());
        Chart::new(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_factors() {
        assert!(Chart::new(vec![Factor::periodic("x", 1.0), Factor::periodic("x", 1.0)]).is_err());
        assert!(Chart::new(vec![Factor::interval("r", 1.0, 1.0)]).is_err());
        assert!(Chart::new(vec![Factor::periodic("t", -1.0)]).is_err());
        assert!(Chart::new(vec![]).is_err());
    }

    #[test]
    fn wraps_and_differences() {
        let c = Chart::new(vec![Factor::periodic("t", 1.0), Factor::interval("r", 0.0, 2.0)]).unwrap();
        let mut p = [2.25, 1.5];
        c.wrap(&mut p);
        assert_eq!(p, [0.25, 1.5]);
        let mut q = [-0.25, 0.0];
        c.wrap(&mut q);
        assert_eq!(q[0], 0.75);
        let d = c.difference(&[0.95, 0.0], &[0.05, 1.0]);
        assert!((d[0] - 0.1).abs() < 1e-15);
        assert_eq!(d[1], 1.0);
        assert!(c.contains(&[3.0, 2.0], 0.0));
        assert!(!c.contains(&[0.0, 2.1], 0.0));
    }

    #[test]
    fn serde_round_trip() {
        let c = Chart::new(vec![Factor::periodic("t", 6.5), Factor::interval("r", -1.0, 1.0)]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Chart>(&s).unwrap(), c);
        assert!(serde_json::from_str::<Chart>(r#"[{"name":"a","kind":"periodic","period":0}]"#).is_err());
    }
}
