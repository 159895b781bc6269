//! Suspension of a torus translation.

use std::sync::Arc;

use super::{Certifier, Construction, ConstructionModel, BUILD_TOL};
use crate::chart::{Chart, Factor};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{ChartRef, KForm, VectorField};

pub(super) fn suspension(v: &[f64]) -> Result<ConstructionModel> {
    if v.len() < 2 {
        return Err(Error::Param(format!("suspension needs d >= 3, got d = {}", v.len() + 1)));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Param(format!("non-finite rotation component {bad}")));
    }
    let mut factors = vec![Factor::periodic("theta", 1.0)];
    factors.extend((1..=v.len()).map(|i| Factor::periodic(format!("x{i}"), 1.0)));
    let chart: ChartRef = Arc::new(Chart::new(factors)?);
    let mut comps = vec![Expr::one()];
    comps.extend(v.iter().map(|&c| Expr::constant(c)));
    let x = VectorField::new(chart.clone(), comps)?;
    let alpha = KForm::dx(chart.clone(), 0);
    let mu = KForm::volume(chart.clone());
    let nu = mu.interior(&x)?;
    let mut m = ConstructionModel::new(Construction::Suspension { v: v.to_vec() }, x, alpha);
    m.section = Some((0, 0.0));
    let top = m.alpha.wedge(&nu)?.top_coefficient()?;
    let ix_dalpha = m.alpha.d().interior(&m.x)?;
    let ax = m.alpha_of_x();
    m.nu = Some(nu.clone());
    m.mu = Some(mu);
    let mut c = Certifier::new(&mut m);
    c.small_exprs("alpha(X) = 1", &[&ax - 1.0], 1e-12);
    c.small("i_X d alpha", &ix_dalpha, BUILD_TOL);
    c.small("d nu", &nu.d(), BUILD_TOL);
    c.positive("alpha ^ nu", &top, 0.0);
    c.finish()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suspension_structure_is_constant() {
        let m = suspension(&[0.25, 0.5]).unwrap();
        assert_eq!(m.alpha_of_x().as_const(), Some(1.0));
        let top = m.alpha.wedge(m.nu.as_ref().unwrap()).unwrap().top_coefficient().unwrap();
        assert_eq!(top.as_const(), Some(1.0));
        assert!(m.nu.as_ref().unwrap().d().is_zero());
        assert!(m.mu.as_ref().unwrap().lie(&m.x).unwrap().is_zero());
    }

    #[test]
    fn rejects_low_dimension() {
        assert!(suspension(&[0.5]).is_err());
    }
}
