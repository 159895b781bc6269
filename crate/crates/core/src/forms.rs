//! Exterior calculus on a single chart: d, wedge, interior product, Lie
//! derivative, pullback and pushforward.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{same_chart, ChartMap, KForm, VectorField};

/// Sign of the shuffle merging two disjoint increasing index lists, or `None`
/// when they share an index.
fn shuffle(a: &[usize], b: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut inversions = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            // b[j] jumps over the remaining a's.
            inversions += a.len() - i;
            out.push(b[j]);
            j += 1;
        } else {
            return None;
        }
    }
    Some((out, if inversions.is_multiple_of(2) { 1.0 } else { -1.0 }))
}

fn signed(c: &Expr, sign: f64) -> Expr {
    if sign < 0.0 {
        -c
    } else {
        c.clone()
    }
}

impl KForm {
    /// Exterior derivative.
    pub fn d(&self) -> KForm {
        let dim = self.chart().dim();
        let mut acc: BTreeMap<Vec<usize>, Vec<Expr>> = BTreeMap::new();
        if self.degree() < dim {
            for (idx, c) in self.terms() {
                for j in 0..c.arity().min(dim) {
                    let dc = c.partial(j);
                    if dc.is_zero() {
                        continue;
                    }
                    if let Some((merged, sign)) = shuffle(&[j], idx) {
                        acc.entry(merged).or_default().push(signed(&dc, sign));
                    }
                }
            }
        }
        KForm::from_sorted(self.chart().clone(), self.degree() + 1, acc)
    }

    pub fn wedge(&self, other: &KForm) -> Result<KForm> {
        same_chart(self.chart(), other.chart())?;
        let degree = self.degree() + other.degree();
        let mut acc: BTreeMap<Vec<usize>, Vec<Expr>> = BTreeMap::new();
        if degree <= self.chart().dim() {
            for (a, ca) in self.terms() {
                for (b, cb) in other.terms() {
                    if let Some((merged, sign)) = shuffle(a, b) {
                        acc.entry(merged).or_default().push(signed(&(ca * cb), sign));
                    }
                }
            }
        }
        Ok(KForm::from_sorted(self.chart().clone(), degree, acc))
    }

    /// `self ^ self ^ ... ` (`n` factors); `n = 0` gives the constant 0-form 1.
    pub fn power(&self, n: usize) -> Result<KForm> {
        let mut out = KForm::scalar(self.chart().clone(), Expr::one())?;
        for _ in 0..n {
            out = out.wedge(self)?;
        }
        Ok(out)
    }

    /// Interior product `i_X self`.
    pub fn interior(&self, x: &VectorField) -> Result<KForm> {
        same_chart(self.chart(), x.chart())?;
        if self.degree() == 0 {
            return Err(Error::ContractScalar);
        }
        let mut acc: BTreeMap<Vec<usize>, Vec<Expr>> = BTreeMap::new();
        for (idx, c) in self.terms() {
            for (p, &i) in idx.iter().enumerate() {
                let xi = x.comp(i);
                if xi.is_zero() {
                    continue;
                }
                let mut rest = idx.clone();
                rest.remove(p);
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                acc.entry(rest).or_default().push(signed(&(xi * c), sign));
            }
        }
        Ok(KForm::from_sorted(self.chart().clone(), self.degree() - 1, acc))
    }

    /// Lie derivative by Cartan's formula.
    pub fn lie(&self, x: &VectorField) -> Result<KForm> {
        let a = self.d().interior(x)?;
        if self.degree() == 0 {
            return Ok(a);
        }
        a.add(&self.interior(x)?.d())
    }

    /// Pull back a form on the map's target to its source.
    pub fn pullback(&self, m: &ChartMap) -> Result<KForm> {
        same_chart(self.chart(), m.target())?;
        let src = m.source().clone();
        let jac = m.jacobian();
        let dy: Vec<KForm> = jac
            .iter()
            .map(|row| KForm::from_terms(src.clone(), 1, row.iter().enumerate().map(|(i, e)| (vec![i], e.clone()))))
            .collect::<Result<_>>()?;
        let mut total = KForm::zero(src.clone(), self.degree());
        for (idx, c) in self.terms() {
            let mut term = KForm::scalar(src.clone(), c.substitute(m.comps()))?;
            for &j in idx {
                term = term.wedge(&dy[j])?;
            }
            total = total.add(&term)?;
        }
        Ok(total)
    }

    /// The coefficient of a top-degree form.
    pub fn top_coefficient(&self) -> Result<Expr> {
        let d = self.chart().dim();
        if self.degree() != d {
            return Err(Error::Degree {
                expected: d,
                got: self.degree(),
            });
        }
        Ok(self.coeff(&(0..d).collect::<Vec<_>>()))
    }
}

impl VectorField {
    /// Push forward along an invertible map: `(m_* X)(y) = Dm(x) X(x)` with `x = m^{-1}(y)`.
    pub fn pushforward(&self, m: &ChartMap) -> Result<VectorField> {
        same_chart(self.chart(), m.source())?;
        let inv = m.inverse().ok_or(Error::MissingInverse)?;
        let jac = m.jacobian();
        let comps = jac
            .iter()
            .map(|row| {
                let on_source = Expr::sum(
                    row.iter()
                        .zip(self.comps())
                        .filter(|(j, x)| !j.is_zero() && !x.is_zero())
                        .map(|(j, x)| j * x),
                );
                on_source.substitute(inv)
            })
            .collect();
        VectorField::new(m.target().clone(), comps)
    }
}

/// Rank of a 2-form at a point: number of singular values above `tol`.
pub fn two_form_rank(omega: &KForm, p: &[f64], tol: f64) -> Result<usize> {
    if omega.degree() != 2 {
        return Err(Error::Degree {
            expected: 2,
            got: omega.degree(),
        });
    }
    Ok(rank_of(&omega.compile().two_form_matrix(p), tol))
}

pub(crate) fn rank_of(m: &nalgebra::DMatrix<f64>, tol: f64) -> usize {
    m.clone().svd(false, false).singular_values.iter().filter(|s| **s > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Chart, Factor};
    use crate::field::ChartRef;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn x(i: usize) -> Expr {
        Expr::coord(i)
    }

    fn torus3() -> ChartRef {
        Arc::new(
            Chart::new(vec![
                Factor::periodic("x", 1.0),
                Factor::periodic("y", 1.0),
                Factor::periodic("z", 1.0),
            ])
            .unwrap(),
        )
    }

    fn box4() -> ChartRef {
        Arc::new(Chart::new((0..4).map(|i| Factor::interval(format!("u{i}"), -1.0, 1.0)).collect()).unwrap())
    }

    fn one_form(c: &ChartRef, comps: &[Expr]) -> KForm {
        KForm::from_terms(c.clone(), 1, comps.iter().enumerate().map(|(i, e)| (vec![i], e.clone()))).unwrap()
    }

    /// Dense alternating tensor of a form at a point, all index orders.
    fn dense(f: &KForm, p: &[f64]) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for (idx, v) in f.eval(p) {
            for perm in permutations(&idx) {
                let (_, s) = crate::field::sort_with_sign(&perm).unwrap();
                out.insert(perm, s * v);
            }
        }
        out
    }

    fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
        if v.len() <= 1 {
            return vec![v.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..v.len() {
            let mut rest = v.to_vec();
            let h = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, h);
                out.push(p);
            }
        }
        out
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).product::<usize>() as f64
    }

    /// Brute-force wedge: (w ^ e)(v_1..v_{k+l}) = 1/(k! l!) sum over all
    /// permutations of sign * w(first k) * e(last l).
    fn brute_wedge(a: &KForm, b: &KForm, p: &[f64], out_idx: &[usize]) -> f64 {
        let (k, l) = (a.degree(), b.degree());
        let (da, db) = (dense(a, p), dense(b, p));
        let mut s = 0.0;
        for perm in permutations(out_idx) {
            let (_, sign) = crate::field::sort_with_sign(&perm).unwrap();
            let va = if k == 0 {
                a.eval(p).first().map_or(0.0, |t| t.1)
            } else {
                *da.get(&perm[..k]).unwrap_or(&0.0)
            };
            let vb = if l == 0 {
                b.eval(p).first().map_or(0.0, |t| t.1)
            } else {
                *db.get(&perm[k..]).unwrap_or(&0.0)
            };
            s += sign * va * vb;
        }
        s / (factorial(k) * factorial(l))
    }

    #[test]
    fn antisymmetry_of_one_forms() {
        let c = torus3();
        let dx = KForm::dx(c.clone(), 0);
        let dy = KForm::dx(c, 1);
        assert!(dx.wedge(&dy).unwrap().add(&dy.wedge(&dx).unwrap()).unwrap().is_zero());
    }

    #[test]
    fn contact_binding_volume_matches_permutation_oracle() {
        let c = torus3();
        let th = x(2) * (2.0 * PI);
        let beta = one_form(&c, &[th.cos(), -th.sin(), Expr::zero()]);
        let vol = beta.wedge(&beta.d()).unwrap();
        for p in [[0.3, 0.7, 0.11], [0.0, 0.5, 0.9], [0.2, 0.1, 0.45]] {
            let fast = vol.top_coefficient().unwrap().eval(&p);
            let slow = brute_wedge(&beta, &beta.d(), &p, &[0, 1, 2]);
            assert!((fast - 2.0 * PI).abs() < 1e-12, "{fast}");
            assert!((fast - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn wedge_matches_brute_force_in_four_dimensions() {
        let c = box4();
        let a = KForm::from_terms(
            c.clone(),
            2,
            [
                (vec![0, 1], x(2).sin()),
                (vec![1, 3], x(0) * x(3)),
                (vec![0, 2], Expr::constant(0.7)),
            ],
        )
        .unwrap();
        let b = KForm::from_terms(c, 2, [(vec![2, 3], x(1).exp()), (vec![0, 3], x(2)), (vec![1, 2], x(0).cos())]).unwrap();
        let w = a.wedge(&b).unwrap();
        let p = [0.3, -0.2, 0.5, 0.9];
        let fast = w.top_coefficient().unwrap().eval(&p);
        let slow = brute_wedge(&a, &b, &p, &[0, 1, 2, 3]);
        assert!((fast - slow).abs() < 1e-13, "{fast} vs {slow}");
        let sw = b.wedge(&a).unwrap().top_coefficient().unwrap().eval(&p);
        assert!((fast - sw).abs() < 1e-13, "even degrees commute");
    }

    #[test]
    fn exterior_derivative_matches_finite_difference() {
        let c = Arc::new(Chart::new(vec![Factor::interval("r", 0.0, 1.0), Factor::periodic("t", 2.0 * PI)]).unwrap());
        let g = (x(0) * 3.0).sin() * x(0);
        let w = KForm::from_terms(c, 1, [(vec![1], g.clone())]).unwrap();
        let dw = w.d().coeff(&[0, 1]).eval(&[0.5, 0.0]);
        let h = 1e-5;
        let fd = (g.eval(&[0.5 + h]) - g.eval(&[0.5 - h])) / (2.0 * h);
        assert!((dw - fd).abs() < 1e-6);
    }

    #[test]
    fn interior_and_lie_basics() {
        let c = torus3();
        let x0 = VectorField::coordinate(c.clone(), 0);
        assert_eq!(KForm::dx(c.clone(), 0).interior(&x0).unwrap().coeff(&[]).as_const(), Some(1.0));
        assert!(KForm::scalar(c.clone(), Expr::one()).unwrap().interior(&x0).is_err());
        // L_X of a function is X(f).
        let f = KForm::scalar(c.clone(), x(0).sin() * x(1)).unwrap();
        let lf = f.lie(&x0).unwrap();
        let p = [0.2, 0.3, 0.0];
        assert!((lf.coeff(&[]).eval(&p) - 0.2f64.cos() * 0.3).abs() < 1e-15);
        assert!(KForm::volume(c.clone()).lie(&x0).unwrap().is_zero());
    }

    #[test]
    fn pullback_along_mirror_reverses_orientation() {
        let c = Arc::new(Chart::new(vec![Factor::interval("z", -1.0, 1.0)]).unwrap());
        let m = ChartMap::new(c.clone(), c.clone(), vec![-x(0)], Some(vec![-x(0)])).unwrap();
        let pb = KForm::dx(c, 0).pullback(&m).unwrap();
        assert_eq!(pb.coeff(&[0]).as_const(), Some(-1.0));
    }

    #[test]
    fn pushforward_straightens_linear_flow() {
        // Phi(z, x) = (z, x e^{-z}) carries d/dz + x d/dx to d/dh.
        let c = Arc::new(Chart::new(vec![Factor::interval("z", -1.0, 1.0), Factor::interval("x", -1.0, 1.0)]).unwrap());
        let m = ChartMap::new(
            c.clone(),
            c.clone(),
            vec![x(0), x(1) * (-x(0)).exp()],
            Some(vec![x(0), x(1) * x(0).exp()]),
        )
        .unwrap();
        let v = VectorField::new(c, vec![Expr::one(), x(1)]).unwrap();
        let pushed = v.pushforward(&m).unwrap();
        for p in [[0.1, 0.3], [-0.5, 0.9], [0.7, -0.2]] {
            let w = pushed.eval(&p);
            assert!((w[0] - 1.0).abs() < 1e-15 && w[1].abs() < 1e-15, "{w:?}");
        }
    }

    #[test]
    fn rank_of_standard_symplectic_block() {
        let c = Arc::new(
            Chart::new(vec![
                Factor::periodic("t", 1.0),
                Factor::interval("x", -1.0, 1.0),
                Factor::interval("y", -1.0, 1.0),
            ])
            .unwrap(),
        );
        let a = one_form(&c, &[Expr::one(), -x(2), x(1)]);
        assert_eq!(two_form_rank(&a.d(), &[0.1, 0.2, 0.3], 1e-12).unwrap(), 2);
        assert_eq!(two_form_rank(&KForm::zero(c, 2), &[0.0; 3], 1e-12).unwrap(), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_one_form(c: &ChartRef, k: &[f64]) -> KForm {
            let comps: Vec<Expr> = (0..4)
                .map(|i| (x((i + 1) % 4) * k[i] + x(i) * x((i + 2) % 4) * k[i + 4]).sin() + x(i) * k[(i + 3) % 8])
                .collect();
            one_form(c, &comps)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn d_squared_vanishes(k in prop::array::uniform8(-2.0f64..2.0), p in prop::array::uniform4(-1.0f64..1.0)) {
                let c = box4();
                let a = random_one_form(&c, &k);
                let dd = a.d().d().compile();
                prop_assert!(dd.sup_norm(&p) < 1e-12);
                let b = a.wedge(&a.d()).unwrap();
                prop_assert!(b.d().d().compile().sup_norm(&p) < 1e-12);
            }

            #[test]
            fn contraction_twice_vanishes(k in prop::array::uniform8(-2.0f64..2.0), p in prop::array::uniform4(-1.0f64..1.0)) {
                let c = box4();
                let a = random_one_form(&c, &k);
                let w = a.d().wedge(&a).unwrap();
                let v = VectorField::new(c, (0..4).map(|i| (x(i) * k[i]).cos() + k[i + 4]).collect()).unwrap();
                let ii = w.interior(&v).unwrap().interior(&v).unwrap();
                prop_assert!(ii.compile().sup_norm(&p) < 1e-12);
            }

            #[test]
            fn leibniz_rule(k in prop::array::uniform8(-2.0f64..2.0), p in prop::array::uniform4(-1.0f64..1.0)) {
                let c = box4();
                let a = random_one_form(&c, &k);
                let b = random_one_form(&c, &[k[7], k[6], k[5], k[4], k[3], k[2], k[1], k[0]]).d();
                let lhs = a.wedge(&b).unwrap().d();
                let rhs = a.d().wedge(&b).unwrap().sub(&a.wedge(&b.d()).unwrap()).unwrap();
                prop_assert!(lhs.sub(&rhs).unwrap().compile().sup_norm(&p) < 1e-11);
            }

            #[test]
            fn pullback_commutes_with_d(k in prop::array::uniform8(-2.0f64..2.0), p in prop::array::uniform4(-0.5f64..0.5)) {
                let c = box4();
                let a = random_one_form(&c, &k);
                let m = ChartMap::new(
                    c.clone(),
                    c.clone(),
                    (0..4).map(|i| x(i) + (x((i + 1) % 4) * k[i]).sin() * 0.1).collect(),
                    None,
                ).unwrap();
                let lhs = a.d().pullback(&m).unwrap();
                let rhs = a.pullback(&m).unwrap().d();
                prop_assert!(lhs.sub(&rhs).unwrap().compile().sup_norm(&p) < 1e-11);
            }

            #[test]
            fn graded_commutativity(k in prop::array::uniform8(-2.0f64..2.0), p in prop::array::uniform4(-1.0f64..1.0)) {
                let c = box4();
                let a = random_one_form(&c, &k);
                let b = a.d();
                let e = random_one_form(&c, &[k[1], k[2], k[3], k[4], k[5], k[6], k[7], k[0]]);
                // 1-form with 1-form anticommutes; 1-form with 2-form commutes.
                let s1 = a.wedge(&e).unwrap().add(&e.wedge(&a).unwrap()).unwrap();
                let s2 = e.wedge(&b).unwrap().sub(&b.wedge(&e).unwrap()).unwrap();
                prop_assert!(s1.compile().sup_norm(&p) < 1e-14);
                prop_assert!(s2.compile().sup_norm(&p) < 1e-13);
            }
        }
    }
}
