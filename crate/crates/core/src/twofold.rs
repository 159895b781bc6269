//! Double-double ("twofold") arithmetic for precise tape evaluation.
//!
//! Sums, products, quotients and integer powers carry about 106 bits.
//! Transcendental functions are evaluated in `f64` at the high word and
//! corrected to first order in the low word, so they are only as accurate as
//! `f64`, but every node still gets one deterministic value. Residuals of
//! algebraic identities (Leibniz, naturality, d∘d) then cancel far below
//! `f64` rounding of the individual terms.

use std::ops::{Add, Div, Mul, Neg};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: e }
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

#[inline]
fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn finite(self) -> bool {
        self.hi.is_finite()
    }

    /// `f(x)` from its `f64` value and derivative at the high word.
    fn lift(x: Dd, value: f64, slope: f64) -> Dd {
        if !value.is_finite() || x.lo == 0.0 {
            return Dd::from_f64(value);
        }
        two_sum(value, slope * x.lo)
    }

    pub fn recip(self) -> Dd {
        Dd::ONE / self
    }

    pub fn powi(self, n: i32) -> Dd {
        if n == 0 {
            return Dd::ONE;
        }
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Dd::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    pub fn powf(self, p: f64) -> Dd {
        let v = self.hi.powf(p);
        Dd::lift(self, v, p * self.hi.powf(p - 1.0))
    }

    pub fn sin(self) -> Dd {
        Dd::lift(self, self.hi.sin(), self.hi.cos())
    }

    pub fn cos(self) -> Dd {
        Dd::lift(self, self.hi.cos(), -self.hi.sin())
    }

    pub fn exp(self) -> Dd {
        let v = self.hi.exp();
        Dd::lift(self, v, v)
    }

    pub fn atan2(self, x: Dd) -> Dd {
        let (yh, xh) = (self.hi, x.hi);
        let v = yh.atan2(xh);
        let r2 = xh * xh + yh * yh;
        if r2 == 0.0 || !v.is_finite() {
            return Dd::from_f64(v);
        }
        two_sum(v, (xh * self.lo - yh * x.lo) / r2)
    }

    /// `exp(-1/t) t^(-p)` for `t > 0`, else 0.
    pub fn glue(self, p: i32, value: impl Fn(f64, i32) -> f64) -> Dd {
        let t = self.hi;
        let v = value(t, p);
        if v == 0.0 {
            return Dd::ZERO;
        }
        Dd::lift(self, v, v * (1.0 / (t * t) - p as f64 / t))
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let s = two_sum(self.hi, b.hi);
        if !s.finite() {
            return Dd::from_f64(s.hi);
        }
        let t = two_sum(self.lo, b.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = two_prod(self.hi, b.hi);
        if !p.finite() {
            return Dd::from_f64(p.hi);
        }
        quick_two_sum(p.hi, p.lo + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() || q1 == 0.0 && self.lo == 0.0 {
            return Dd::from_f64(q1);
        }
        let r = self + -(b * Dd::from_f64(q1));
        let q2 = r.hi / b.hi;
        let r = r + -(b * Dd::from_f64(q2));
        let q3 = r.hi / b.hi;
        let q = quick_two_sum(q1, q2);
        q + Dd::from_f64(q3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_bits_lost_in_f64() {
        let big = Dd::from_f64(1e16);
        let s = big + Dd::ONE + -big;
        assert_eq!(s.to_f64(), 1.0);
        let third = Dd::ONE / Dd::from_f64(3.0);
        let back = third * Dd::from_f64(3.0) + -Dd::ONE;
        assert!(back.to_f64().abs() < 1e-30);
    }

    #[test]
    fn powers_and_lifts() {
        let x = Dd::from_f64(1.1);
        assert!((x.powi(-3).to_f64() - 1.1f64.powi(-3)).abs() < 1e-15);
        let y = Dd { hi: 0.5, lo: 1e-20 };
        assert!((y.sin().to_f64() - 0.5f64.sin()).abs() < 1e-16);
        assert_eq!(Dd::from_f64(-1.0).glue(2, |_, _| 0.0), Dd::ZERO);
    }
}
