//! Reeb field of a stable Eulerisable pair: `i_R nu = 0`, `alpha(R) = 1`.

use crate::error::{Error, Result};
use crate::field::{same_chart, CompiledForm, KForm};

/// Pointwise Reeb field. In `d` dimensions every `(d-1)`-form is
/// `i_K (dx_0 ^ ... ^ dx_{d-1})` for a unique `K`, so the kernel of `nu` is
/// read off its coefficients and `R = K / alpha(K)` needs no linear solve.
#[derive(Clone, Debug)]
pub struct ReebField {
    dim: usize,
    alpha: CompiledForm,
    nu: CompiledForm,
}

pub fn reeb_of_ses(alpha: &KForm, nu: &KForm) -> Result<ReebField> {
    same_chart(alpha.chart(), nu.chart())?;
    let d = alpha.chart().dim();
    if alpha.degree() != 1 {
        return Err(Error::Degree {
            expected: 1,
            got: alpha.degree(),
        });
    }
    if nu.degree() + 1 != d {
        return Err(Error::Degree {
            expected: d - 1,
            got: nu.degree(),
        });
    }
    Ok(ReebField {
        dim: d,
        alpha: alpha.compile(),
        nu: nu.compile(),
    })
}

impl ReebField {
    /// `R(p)`; errors where `alpha ^ nu` vanishes.
    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut k = vec![0.0; d];
        for (idx, v) in self.nu.indices.iter().zip(self.nu.values(p)) {
            let missing = (0..d).find(|i| idx.get(*i) != Some(i)).unwrap_or(d - 1);
            k[missing] += if missing % 2 == 0 { v } else { -v };
        }
        let a: Vec<f64> = {
            let mut a = vec![0.0; d];
            for (idx, v) in self.alpha.indices.iter().zip(self.alpha.values(p)) {
                a[idx[0]] += v;
            }
            a
        };
        let pairing: f64 = a.iter().zip(&k).map(|(x, y)| x * y).sum();
        let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max) * k.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if !(pairing.abs() > 1e-12 * scale) {
            return Err(Error::Degenerate(format!("alpha ^ nu vanishes at {p:?}")));
        }
        Ok(k.into_iter().map(|x| x / pairing).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::Construction;

    #[test]
    fn suspension_reeb_is_the_flow() {
        let m = Construction::suspension(vec![0.3, -0.7]).build().unwrap();
        let r = reeb_of_ses(&m.alpha, m.nu.as_ref().unwrap()).unwrap();
        let v = r.eval(&[0.1, 0.2, 0.3]).unwrap();
        for (a, b) in v.iter().zip([1.0, 0.3, -0.7]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn t3_reeb_is_x_b() {
        let m = Construction::T3ContactBinding.build().unwrap();
        let r = reeb_of_ses(&m.alpha, m.nu.as_ref().unwrap()).unwrap();
        for p in [[0.3, 0.7, 0.11], [0.0, 0.5, 0.9]] {
            let v = r.eval(&p).unwrap();
            let x = m.x.eval(&p);
            assert!(v.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12), "{v:?} {x:?}");
            assert!((m.alpha.eval(&p).iter().map(|(i, a)| a * v[i[0]]).sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_nu_is_reported() {
        let m = Construction::suspension(vec![0.3, -0.7]).build().unwrap();
        let zero = KForm::zero(m.chart.clone(), 2);
        let r = reeb_of_ses(&m.alpha, &zero).unwrap();
        assert!(matches!(r.eval(&[0.0, 0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn binding_neighborhood_reeb_is_parallel_to_y() {
        let m = Construction::binding_neighborhood(Construction::T3ContactBinding).build().unwrap();
        let r = reeb_of_ses(&m.alpha, m.nu.as_ref().unwrap()).unwrap();
        let p = [0.3671875, 0.8312757, 0.592, 0.4961312, 0.5759193];
        let v = r.eval(&p).unwrap();
        for (a, b) in v.iter().zip(m.x.eval(&p)) {
            assert!((a - 2.0 * b).abs() < 1e-15, "{v:?}");
        }
    }
}
