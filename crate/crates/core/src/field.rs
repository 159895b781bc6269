//! Scalar fields, vector fields, differential forms and maps between charts.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};

pub type ChartRef = Arc<Chart>;

fn check_arity(chart: &Chart, e: &Expr) -> Result<()> {
    if e.arity() > chart.dim() {
        return Err(Error::InvalidChart(format!(
            "expression references coordinate {} on a {}-dimensional chart",
            e.arity() - 1,
            chart.dim()
        )));
    }
    Ok(())
}

pub(crate) fn same_chart(a: &ChartRef, b: &ChartRef) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::ChartMismatch)
    }
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    chart: ChartRef,
    expr: Expr,
}

impl ScalarField {
    pub fn new(chart: ChartRef, expr: Expr) -> Result<ScalarField> {
        check_arity(&chart, &expr)?;
        Ok(ScalarField { chart, expr })
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        self.expr.eval(p)
    }

    /// Exact gradient at `p` by forward-mode evaluation.
    pub fn gradient_at(&self, p: &[f64]) -> Vec<f64> {
        let tape = Tape::new(std::slice::from_ref(&self.expr));
        tape.eval_with_gradient(p, self.chart.dim()).1
    }

    pub fn partial(&self, i: usize) -> ScalarField {
        ScalarField {
            chart: self.chart.clone(),
            expr: self.expr.partial(i),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VectorField {
    chart: ChartRef,
    comps: Vec<Expr>,
}

impl VectorField {
    pub fn new(chart: ChartRef, comps: Vec<Expr>) -> Result<VectorField> {
        if comps.len() != chart.dim() {
            return Err(Error::InvalidChart(format!(
                "vector field has {} components on a {}-dimensional chart",
                comps.len(),
                chart.dim()
            )));
        }
        for c in &comps {
            check_arity(&chart, c)?;
        }
        Ok(VectorField { chart, comps })
    }

    /// The coordinate field `d/dx_i`.
    pub fn coordinate(chart: ChartRef, i: usize) -> VectorField {
        let comps = (0..chart.dim()).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect();
        VectorField { chart, comps }
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn comps(&self) -> &[Expr] {
        &self.comps
    }

    pub fn comp(&self, i: usize) -> &Expr {
        &self.comps[i]
    }

    pub fn compile(&self) -> Tape {
        Tape::new(&self.comps)
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        self.compile().eval(p)
    }

    pub fn scale(&self, s: &Expr) -> VectorField {
        VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|c| s * c).collect(),
        }
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        same_chart(&self.chart, &other.chart)?;
        Ok(VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        same_chart(&self.chart, &other.chart)?;
        Ok(VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a - b).collect(),
        })
    }

    /// Directional derivative `X(f)`.
    pub fn apply(&self, f: &Expr) -> Expr {
        Expr::sum(
            self.comps
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, c)| c * f.partial(i)),
        )
    }
}

/// A differential form of fixed degree with sparse coefficients relative to
/// strictly increasing coordinate multi-indices.
#[derive(Clone, Debug)]
pub struct KForm {
    chart: ChartRef,
    degree: usize,
    coeffs: BTreeMap<Vec<usize>, Expr>,
}

/// Sort a multi-index, returning the permutation sign, or `None` if an index repeats.
pub(crate) fn sort_with_sign(idx: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some((v, sign))
    }
}

impl KForm {
    /// The zero form of degree `k`. Degrees above the chart dimension are
    /// allowed and are always zero.
    pub fn zero(chart: ChartRef, degree: usize) -> KForm {
        KForm {
            chart,
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn scalar(chart: ChartRef, f: Expr) -> Result<KForm> {
        KForm::from_terms(chart, 0, [(vec![], f)])
    }

    /// `dx_i`.
    pub fn dx(chart: ChartRef, i: usize) -> KForm {
        assert!(i < chart.dim(), "coordinate {i} out of range");
        let mut coeffs = BTreeMap::new();
        coeffs.insert(vec![i], Expr::one());
        KForm { chart, degree: 1, coeffs }
    }

    /// The coordinate top form `dx_0 ^ ... ^ dx_{d-1}`.
    pub fn volume(chart: ChartRef) -> KForm {
        let d = chart.dim();
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0..d).collect(), Expr::one());
        KForm { chart, degree: d, coeffs }
    }

    /// Build from terms with arbitrary index order; indices are sorted with
    /// the permutation sign, repeated indices drop out and duplicates add.
    pub fn from_terms<I>(chart: ChartRef, degree: usize, terms: I) -> Result<KForm>
    where
        I: IntoIterator<Item = (Vec<usize>, Expr)>,
    {
        let mut acc: BTreeMap<Vec<usize>, Vec<Expr>> = BTreeMap::new();
        for (idx, c) in terms {
            if idx.len() != degree {
                return Err(Error::Degree {
                    expected: degree,
                    got: idx.len(),
                });
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= chart.dim()) {
                return Err(Error::InvalidChart(format!("index {bad} out of range")));
            }
            check_arity(&chart, &c)?;
            if let Some((s, sign)) = sort_with_sign(&idx) {
                acc.entry(s).or_default().push(if sign < 0.0 { -c } else { c });
            }
        }
        Ok(KForm::from_parts(chart, degree, acc))
    }

    fn from_parts(chart: ChartRef, degree: usize, acc: BTreeMap<Vec<usize>, Vec<Expr>>) -> KForm {
        let coeffs = acc
            .into_iter()
            .filter_map(|(k, v)| {
                let s = Expr::sum(v);
                (!s.is_zero()).then_some((k, s))
            })
            .collect();
        KForm { chart, degree, coeffs }
    }

    pub(crate) fn from_sorted(chart: ChartRef, degree: usize, acc: BTreeMap<Vec<usize>, Vec<Expr>>) -> KForm {
        KForm::from_parts(chart, degree, acc)
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// True when no coefficient is stored (the form is symbolically zero).
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &Expr)> {
        self.coeffs.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of a strictly increasing multi-index (zero when absent).
    pub fn coeff(&self, idx: &[usize]) -> Expr {
        self.coeffs.get(idx).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn scale(&self, s: &Expr) -> KForm {
        let acc = self.coeffs.iter().map(|(k, c)| (k.clone(), vec![s * c])).collect();
        KForm::from_parts(self.chart.clone(), self.degree, acc)
    }

    pub fn add(&self, other: &KForm) -> Result<KForm> {
        same_chart(&self.chart, &other.chart)?;
        if self.degree != other.degree {
            return Err(Error::Degree {
                expected: self.degree,
                got: other.degree,
            });
        }
        let mut acc: BTreeMap<Vec<usize>, Vec<Expr>> = BTreeMap::new();
        for (k, c) in self.coeffs.iter().chain(&other.coeffs) {
            acc.entry(k.clone()).or_default().push(c.clone());
        }
        Ok(KForm::from_parts(self.chart.clone(), self.degree, acc))
    }

    pub fn sub(&self, other: &KForm) -> Result<KForm> {
        self.add(&other.scale(&Expr::constant(-1.0)))
    }

    /// Apply `f` to every coefficient.
    pub fn map_coeffs(&self, mut f: impl FnMut(&Expr) -> Expr) -> KForm {
        let acc = self.coeffs.iter().map(|(k, c)| (k.clone(), vec![f(c)])).collect();
        KForm::from_parts(self.chart.clone(), self.degree, acc)
    }

    pub fn compile(&self) -> CompiledForm {
        let (indices, exprs): (Vec<_>, Vec<_>) = self.coeffs.iter().map(|(k, c)| (k.clone(), c.clone())).unzip();
        CompiledForm {
            degree: self.degree,
            dim: self.chart.dim(),
            indices,
            tape: Tape::new(&exprs),
        }
    }

    /// Coefficient values at `p`, in multi-index order.
    pub fn eval(&self, p: &[f64]) -> Vec<(Vec<usize>, f64)> {
        let cf = self.compile();
        cf.indices.iter().cloned().zip(cf.tape.eval(p)).collect()
    }
}

/// A form compiled for repeated pointwise evaluation.
#[derive(Clone, Debug)]
pub struct CompiledForm {
    pub degree: usize,
    pub dim: usize,
    pub indices: Vec<Vec<usize>>,
    pub tape: Tape,
}

impl CompiledForm {
    pub fn values(&self, p: &[f64]) -> Vec<f64> {
        if self.indices.is_empty() {
            return vec![];
        }
        self.tape.eval(p)
    }

    /// Largest absolute coefficient at `p` (0 for the zero form).
    pub fn sup_norm(&self, p: &[f64]) -> f64 {
        self.values(p).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// As [`CompiledForm::sup_norm`], evaluated in double-double arithmetic.
    pub fn sup_norm_precise(&self, p: &[f64]) -> f64 {
        if self.indices.is_empty() {
            return 0.0;
        }
        self.tape
            .eval_precise(p)
            .iter()
            .fold(0.0, |m: f64, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }

    /// Coefficient of the coordinate top form (degree must equal dim).
    pub fn top(&self, p: &[f64]) -> f64 {
        debug_assert_eq!(self.degree, self.dim);
        self.values(p).first().copied().unwrap_or(0.0)
    }

    /// Dense antisymmetric matrix of a 2-form at `p`.
    pub fn two_form_matrix(&self, p: &[f64]) -> nalgebra::DMatrix<f64> {
        assert_eq!(self.degree, 2, "not a 2-form");
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (idx, v) in self.indices.iter().zip(self.values(p)) {
            m[(idx[0], idx[1])] = v;
            m[(idx[1], idx[0])] = -v;
        }
        m
    }
}

/// A smooth map between charts given by target-coordinate expressions over
/// the source, optionally with an inverse.
#[derive(Clone, Debug)]
pub struct ChartMap {
    source: ChartRef,
    target: ChartRef,
    comps: Vec<Expr>,
    inverse: Option<Vec<Expr>>,
}

impl ChartMap {
    pub fn new(source: ChartRef, target: ChartRef, comps: Vec<Expr>, inverse: Option<Vec<Expr>>) -> Result<ChartMap> {
        if comps.len() != target.dim() {
            return Err(Error::InvalidChart(format!(
                "map has {} components for a {}-dimensional target",
                comps.len(),
                target.dim()
            )));
        }
        for c in &comps {
            check_arity(&source, c)?;
        }
        if let Some(inv) = &inverse {
            if inv.len() != source.dim() {
                return Err(Error::InvalidChart("inverse has the wrong component count".into()));
            }
            for c in inv {
                check_arity(&target, c)?;
            }
        }
        Ok(ChartMap {
            source,
            target,
            comps,
            inverse,
        })
    }

    pub fn identity(chart: ChartRef) -> ChartMap {
        let comps: Vec<_> = (0..chart.dim()).map(Expr::coord).collect();
        ChartMap {
            source: chart.clone(),
            target: chart,
            inverse: Some(comps.clone()),
            comps,
        }
    }

    pub fn source(&self) -> &ChartRef {
        &self.source
    }

    pub fn target(&self) -> &ChartRef {
        &self.target
    }

    pub fn comps(&self) -> &[Expr] {
        &self.comps
    }

    pub fn inverse(&self) -> Option<&[Expr]> {
        self.inverse.as_deref()
    }

    /// Exact Jacobian `J[j][i] = d y_j / d x_i`.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        self.comps
            .iter()
            .map(|y| (0..self.source.dim()).map(|i| y.partial(i)).collect())
            .collect()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        Tape::new(&self.comps).eval(p)
    }

    /// The inverse as a map in its own right.
    pub fn inverted(&self) -> Result<ChartMap> {
        let inv = self.inverse.clone().ok_or(Error::MissingInverse)?;
        ChartMap::new(self.target.clone(), self.source.clone(), inv, Some(self.comps.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Factor;

    fn chart3() -> ChartRef {
        Arc::new(
            Chart::new(vec![
                Factor::periodic("x", 1.0),
                Factor::periodic("y", 1.0),
                Factor::periodic("z", 1.0),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn from_terms_sorts_and_cancels() {
        let c = chart3();
        let f = KForm::from_terms(
            c.clone(),
            2,
            [(vec![0, 1], Expr::one()), (vec![1, 0], Expr::one()), (vec![2, 2], Expr::one())],
        )
        .unwrap();
        assert!(f.is_zero());
        let g = KForm::from_terms(c, 2, [(vec![2, 0], Expr::constant(3.0))]).unwrap();
        assert_eq!(g.coeff(&[0, 2]).as_const(), Some(-3.0));
    }

    #[test]
    fn rejects_out_of_chart_expressions() {
        let c = chart3();
        assert!(ScalarField::new(c.clone(), Expr::coord(3)).is_err());
        assert!(VectorField::new(c, vec![Expr::one()]).is_err());
    }

    #[test]
    fn two_form_matrix_is_antisymmetric() {
        let c = chart3();
        let f = KForm::from_terms(c, 2, [(vec![0, 2], Expr::coord(1))]).unwrap();
        let m = f.compile().two_form_matrix(&[0.0, 0.5, 0.0]);
        assert_eq!(m[(0, 2)], 0.5);
        assert_eq!(m[(2, 0)], -0.5);
    }
}
