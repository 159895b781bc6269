//! Closed-form scalar expressions over chart coordinates.
//!
//! Expressions are immutable, reference-counted DAG nodes. Partial derivatives
//! are themselves expressions (built symbolically and memoized per node), so
//! derivatives of any order stay exact up to floating-point rounding. For
//! evaluation, a set of roots is compiled into a [`Tape`], a flat instruction
//! list in topological order that shares common subexpressions.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock, Weak};

use crate::twofold::Dd;

/// Interval guard of a [`Expr::select`] node: the guard holds when
/// `lo <= expr <= hi`.
#[derive(Clone, Debug)]
pub struct Guard {
    pub expr: Expr,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone)]
pub(crate) enum Op {
    Const(f64),
    Coord(usize),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Powi(Expr, i32),
    Powf(Expr, f64),
    Quotient(Expr, Expr),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
    Atan2(Expr, Expr),
    /// `exp(-1/t) * t^(-p)` for `t > 0`, exactly zero otherwise.
    Glue(Expr, i32),
    /// Inside branch when every guard holds, outside branch otherwise.
    Select(Vec<Guard>, Expr, Expr),
}

struct Node {
    op: Op,
    arity: usize,
    grad: OnceLock<Vec<Expr>>,
    /// Set when this node was produced as `parent.partial(index)`; used to
    /// put mixed partials in a canonical order so the Hessian is symmetric
    /// node for node.
    origin: OnceLock<(Weak<Node>, usize)>,
}

/// A differentiable closed-form expression.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn from_op(op: Op) -> Expr {
        let arity = match &op {
            Op::Const(_) => 0,
            Op::Coord(i) => i + 1,
            Op::Sum(xs) | Op::Product(xs) => xs.iter().map(Expr::arity).max().unwrap_or(0),
            Op::Powi(a, _) | Op::Powf(a, _) | Op::Sin(a) | Op::Cos(a) | Op::Exp(a) => a.arity(),
            Op::Glue(a, _) => a.arity(),
            Op::Atan2(a, b) | Op::Quotient(a, b) => a.arity().max(b.arity()),
            Op::Select(g, a, b) => g.iter().map(|g| g.expr.arity()).chain([a.arity(), b.arity()]).max().unwrap_or(0),
        };
        Expr(Arc::new(Node {
            op,
            arity,
            grad: OnceLock::new(),
            origin: OnceLock::new(),
        }))
    }

    pub(crate) fn op(&self) -> &Op {
        &self.0.op
    }

    fn key(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::from_op(Op::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    /// The coordinate function with index `i`.
    pub fn coord(i: usize) -> Expr {
        Expr::from_op(Op::Coord(i))
    }

    /// One more than the largest coordinate index referenced (0 for constants).
    pub fn arity(&self) -> usize {
        self.0.arity
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.op() {
            Op::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// True when the expression is the literal constant zero. Expressions that
    /// merely evaluate to zero are not detected.
    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut terms = terms.into_iter();
        let first = match terms.next() {
            None => return Expr::zero(),
            Some(t) => t,
        };
        let terms: Vec<Expr> = match terms.next() {
            // A lone term keeps its identity (and any derivative bookkeeping).
            None => return first,
            Some(second) => [first, second].into_iter().chain(terms).collect(),
        };
        let terms = collect_like_terms(terms);
        let mut flat = Vec::new();
        let mut c = 0.0;
        for t in terms {
            match t.op() {
                Op::Const(v) => c += v,
                Op::Sum(inner) => {
                    for s in inner {
                        match s.op() {
                            Op::Const(v) => c += v,
                            _ => flat.push(s.clone()),
                        }
                    }
                }
                _ => flat.push(t),
            }
        }
        if c != 0.0 {
            flat.push(Expr::constant(c));
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => Expr::from_op(Op::Sum(flat)),
        }
    }

    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut flat = Vec::new();
        let mut c = 1.0;
        for f in factors {
            match f.op() {
                Op::Const(v) => c *= v,
                Op::Product(inner) => {
                    for s in inner {
                        match s.op() {
                            Op::Const(v) => c *= v,
                            _ => flat.push(s.clone()),
                        }
                    }
                }
                _ => flat.push(f),
            }
        }
        if c == 0.0 {
            return Expr::zero();
        }
        if flat.is_empty() {
            return Expr::constant(c);
        }
        if c != 1.0 {
            flat.insert(0, Expr::constant(c));
        }
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        Expr::from_op(Op::Product(flat))
    }

    pub fn powi(&self, n: i32) -> Expr {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return self.clone();
        }
        match self.op() {
            Op::Const(c) => Expr::constant(c.powi(n)),
            Op::Powi(a, m) => a.powi(m * n),
            _ => Expr::from_op(Op::Powi(self.clone(), n)),
        }
    }

    /// Real power, intended for nonnegative bases.
    pub fn powf(&self, p: f64) -> Expr {
        if p == 0.0 {
            return Expr::one();
        }
        if p == 1.0 {
            return self.clone();
        }
        if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
            return self.powi(p as i32);
        }
        match self.op() {
            Op::Const(c) => Expr::constant(c.powf(p)),
            _ => Expr::from_op(Op::Powf(self.clone(), p)),
        }
    }

    pub fn sqrt(&self) -> Expr {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Expr {
        self.powi(-1)
    }

    /// `self / den` as a single node, so that `a / a` is exactly 1 and the
    /// quotient rule keeps exact zeros where the numerator's relative rate
    /// matches the denominator's.
    pub fn quotient(&self, den: &Expr) -> Expr {
        match (self.op(), den.op()) {
            (Op::Const(a), Op::Const(b)) => Expr::constant(a / b),
            (Op::Const(a), _) if *a == 0.0 => Expr::zero(),
            (_, Op::Const(b)) if *b == 1.0 => self.clone(),
            _ => Expr::from_op(Op::Quotient(self.clone(), den.clone())),
        }
    }

    pub fn sin(&self) -> Expr {
        match self.op() {
            Op::Const(c) => Expr::constant(c.sin()),
            _ => Expr::from_op(Op::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Expr {
        match self.op() {
            Op::Const(c) => Expr::constant(c.cos()),
            _ => Expr::from_op(Op::Cos(self.clone())),
        }
    }

    pub fn exp(&self) -> Expr {
        match self.op() {
            Op::Const(c) => Expr::constant(c.exp()),
            _ => Expr::from_op(Op::Exp(self.clone())),
        }
    }

    /// Four-quadrant arctangent of `self / x`.
    pub fn atan2(&self, x: &Expr) -> Expr {
        match (self.op(), x.op()) {
            (Op::Const(a), Op::Const(b)) => Expr::constant(a.atan2(*b)),
            _ => Expr::from_op(Op::Atan2(self.clone(), x.clone())),
        }
    }

    /// `exp(-1/t) * t^(-power)` for `t > 0` and exactly `0` for `t <= 0`.
    /// Smooth, flat to infinite order at `t = 0`; closed under differentiation.
    pub fn glue(&self, power: i32) -> Expr {
        assert!(power >= 0, "glue power must be nonnegative");
        match self.op() {
            Op::Const(c) => Expr::constant(glue_value(*c, power)),
            _ => Expr::from_op(Op::Glue(self.clone(), power)),
        }
    }

    /// Piecewise expression: `inside` where all guards hold, `outside` elsewhere.
    /// Derivatives are taken branchwise, so the result is only as smooth as
    /// the agreement of the branches near the guard boundary.
    pub fn select(guards: Vec<Guard>, inside: Expr, outside: Expr) -> Expr {
        if guards.is_empty() {
            return inside;
        }
        Expr::from_op(Op::Select(guards, inside, outside))
    }

    pub fn square(&self) -> Expr {
        self.powi(2)
    }

    /// Partial derivative with respect to coordinate `i`.
    pub fn partial(&self, i: usize) -> Expr {
        if i >= self.arity() {
            return Expr::zero();
        }
        self.gradient()[i].clone()
    }

    /// All partials with respect to coordinates `0..arity()`. Memoized.
    pub fn gradient(&self) -> &[Expr] {
        self.0.grad.get_or_init(|| {
            let g: Vec<Expr> = (0..self.arity()).map(|i| self.derive(i)).collect();
            for (i, gi) in g.iter().enumerate() {
                let unique = g.iter().filter(|o| o.key() == gi.key()).count() == 1;
                if unique && gi.as_const().is_none() && gi.0.grad.get().is_none() {
                    let _ = gi.0.origin.set((Arc::downgrade(&self.0), i));
                }
            }
            g
        })
    }

    /// If this node is `g.partial(i)` and `j < i`, returns `g.partial(j).partial(i)`,
    /// the canonical spelling of the same mixed partial.
    fn swapped_partial(&self, j: usize) -> Option<Expr> {
        let (parent, i) = self.0.origin.get()?;
        if j >= *i {
            return None;
        }
        let g = Expr(parent.upgrade()?);
        let h = g.gradient().get(j)?.clone();
        match h.0.origin.get() {
            Some((p, k)) if *k == j && Weak::ptr_eq(p, parent) && h.key() != self.key() => Some(h.partial(*i)),
            _ => None,
        }
    }

    fn derive(&self, i: usize) -> Expr {
        if let Some(e) = self.swapped_partial(i) {
            return e;
        }
        match self.op() {
            Op::Const(_) => Expr::zero(),
            Op::Coord(j) => {
                if *j == i {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Op::Sum(xs) => Expr::sum(xs.iter().map(|x| x.partial(i))),
            Op::Product(xs) => {
                let mut terms = Vec::new();
                for (k, xk) in xs.iter().enumerate() {
                    let dk = xk.partial(i);
                    if dk.is_zero() {
                        continue;
                    }
                    let mut fs = Vec::with_capacity(xs.len());
                    fs.push(dk);
                    for (j, xj) in xs.iter().enumerate() {
                        if j != k {
                            fs.push(xj.clone());
                        }
                    }
                    terms.push(Expr::product(fs));
                }
                Expr::sum(terms)
            }
            Op::Powi(a, n) => {
                let da = a.partial(i);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::product([Expr::constant(*n as f64), a.powi(n - 1), da])
            }
            Op::Powf(a, p) => {
                let da = a.partial(i);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::product([Expr::constant(*p), a.powf(p - 1.0), da])
            }
            Op::Quotient(n, d) => {
                let dn = n.partial(i);
                let dd = d.partial(i);
                if dn.is_zero() && dd.is_zero() {
                    return Expr::zero();
                }
                (dn * d - n * dd).quotient(&d.square())
            }
            Op::Sin(a) => chain(a, i, || a.cos()),
            Op::Cos(a) => chain(a, i, || -a.sin()),
            Op::Exp(_) => match self.op() {
                Op::Exp(a) => chain(a, i, || self.clone()),
                _ => unreachable!(),
            },
            Op::Atan2(y, x) => {
                let dy = y.partial(i);
                let dx = x.partial(i);
                if dy.is_zero() && dx.is_zero() {
                    return Expr::zero();
                }
                let num = x * &dy - y * &dx;
                let den = x.square() + y.square();
                num * den.recip()
            }
            Op::Glue(t, p) => chain(t, i, || t.glue(p + 2) - Expr::constant(*p as f64) * t.glue(p + 1)),
            Op::Select(g, a, b) => Expr::select(g.clone(), a.partial(i), b.partial(i)),
        }
    }

    /// Replace coordinate `j` by `vars[j]` throughout.
    pub fn substitute(&self, vars: &[Expr]) -> Expr {
        let mut memo = HashMap::new();
        self.subst_inner(vars, &mut memo)
    }

    fn subst_inner(&self, vars: &[Expr], memo: &mut HashMap<*const Node, Expr>) -> Expr {
        if let Some(e) = memo.get(&self.key()) {
            return e.clone();
        }
        let mut s = |e: &Expr| e.subst_inner(vars, memo);
        let out = match self.op() {
            Op::Const(_) => self.clone(),
            Op::Coord(j) => vars
                .get(*j)
                .cloned()
                .unwrap_or_else(|| panic!("substitution is missing coordinate {j}")),
            Op::Sum(xs) => {
                let v: Vec<_> = xs.iter().map(&mut s).collect();
                Expr::sum(v)
            }
            Op::Product(xs) => {
                let v: Vec<_> = xs.iter().map(&mut s).collect();
                Expr::product(v)
            }
            Op::Powi(a, n) => s(a).powi(*n),
            Op::Powf(a, p) => s(a).powf(*p),
            Op::Sin(a) => s(a).sin(),
            Op::Cos(a) => s(a).cos(),
            Op::Exp(a) => s(a).exp(),
            Op::Atan2(y, x) => {
                let y = s(y);
                y.atan2(&s(x))
            }
            Op::Quotient(n, d) => {
                let n = s(n);
                n.quotient(&s(d))
            }
            Op::Glue(t, p) => s(t).glue(*p),
            Op::Select(g, a, b) => {
                let g = g
                    .iter()
                    .map(|g| Guard {
                        expr: s(&g.expr),
                        lo: g.lo,
                        hi: g.hi,
                    })
                    .collect();
                let a = s(a);
                let b = s(b);
                Expr::select(g, a, b)
            }
        };
        memo.insert(self.key(), out.clone());
        out
    }

    /// Evaluate at a point. Compiles a throwaway tape; use [`Tape`] in loops.
    pub fn eval(&self, x: &[f64]) -> f64 {
        Tape::new(std::slice::from_ref(self)).eval(x)[0]
    }

    /// Number of distinct nodes reachable from this expression.
    pub fn node_count(&self) -> usize {
        Tape::new(std::slice::from_ref(self)).len()
    }

    fn children(&self) -> Vec<&Expr> {
        match self.op() {
            Op::Const(_) | Op::Coord(_) => vec![],
            Op::Sum(xs) | Op::Product(xs) => xs.iter().collect(),
            Op::Powi(a, _) | Op::Powf(a, _) | Op::Sin(a) | Op::Cos(a) | Op::Exp(a) => vec![a],
            Op::Glue(a, _) => vec![a],
            Op::Atan2(a, b) | Op::Quotient(a, b) => vec![a, b],
            Op::Select(g, a, b) => g.iter().map(|g| &g.expr).chain([a, b]).collect(),
        }
    }
}

fn chain(a: &Expr, i: usize, outer: impl FnOnce() -> Expr) -> Expr {
    let da = a.partial(i);
    if da.is_zero() {
        return Expr::zero();
    }
    outer() * da
}

pub(crate) fn glue_value(t: f64, p: i32) -> f64 {
    if t > 0.0 {
        (-1.0 / t - p as f64 * t.ln()).exp()
    } else {
        0.0
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op() {
            Op::Const(c) => write!(f, "{c}"),
            Op::Coord(i) => write!(f, "x{i}"),
            Op::Sum(xs) => {
                write!(f, "(")?;
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{x:?}")?;
                }
                write!(f, ")")
            }
            Op::Product(xs) => {
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{x:?}")?;
                }
                Ok(())
            }
            Op::Powi(a, n) => write!(f, "({a:?})^{n}"),
            Op::Powf(a, p) => write!(f, "({a:?})^{p}"),
            Op::Sin(a) => write!(f, "sin({a:?})"),
            Op::Cos(a) => write!(f, "cos({a:?})"),
            Op::Exp(a) => write!(f, "exp({a:?})"),
            Op::Atan2(y, x) => write!(f, "atan2({y:?}, {x:?})"),
            Op::Quotient(n, d) => write!(f, "({n:?})/({d:?})"),
            Op::Glue(t, p) => write!(f, "glue{p}({t:?})"),
            Op::Select(_, a, b) => write!(f, "select({a:?} | {b:?})"),
        }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::constant(c)
    }
}

macro_rules! bin_ops {
    ($lhs:ty, $rhs:ty) => {
        impl Add<$rhs> for $lhs {
            type Output = Expr;
            fn add(self, rhs: $rhs) -> Expr {
                Expr::sum([self.clone(), rhs.clone()])
            }
        }
        impl Sub<$rhs> for $lhs {
            type Output = Expr;
            fn sub(self, rhs: $rhs) -> Expr {
                Expr::sum([self.clone(), Expr::product([Expr::constant(-1.0), rhs.clone()])])
            }
        }
        impl Mul<$rhs> for $lhs {
            type Output = Expr;
            fn mul(self, rhs: $rhs) -> Expr {
                Expr::product([self.clone(), rhs.clone()])
            }
        }
        impl Div<$rhs> for $lhs {
            type Output = Expr;
            fn div(self, rhs: $rhs) -> Expr {
                self.clone().quotient(&rhs.clone())
            }
        }
    };
}

bin_ops!(Expr, Expr);
bin_ops!(Expr, &Expr);
bin_ops!(&Expr, Expr);
bin_ops!(&Expr, &Expr);

macro_rules! scalar_ops {
    ($t:ty) => {
        impl Add<f64> for $t {
            type Output = Expr;
            fn add(self, rhs: f64) -> Expr {
                Expr::sum([self.clone(), Expr::constant(rhs)])
            }
        }
        impl Sub<f64> for $t {
            type Output = Expr;
            fn sub(self, rhs: f64) -> Expr {
                Expr::sum([self.clone(), Expr::constant(-rhs)])
            }
        }
        impl Mul<f64> for $t {
            type Output = Expr;
            fn mul(self, rhs: f64) -> Expr {
                Expr::product([Expr::constant(rhs), self.clone()])
            }
        }
        impl Div<f64> for $t {
            type Output = Expr;
            fn div(self, rhs: f64) -> Expr {
                Expr::product([Expr::constant(1.0 / rhs), self.clone()])
            }
        }
        impl Add<$t> for f64 {
            type Output = Expr;
            fn add(self, rhs: $t) -> Expr {
                Expr::sum([Expr::constant(self), rhs.clone()])
            }
        }
        impl Sub<$t> for f64 {
            type Output = Expr;
            fn sub(self, rhs: $t) -> Expr {
                Expr::sum([Expr::constant(self), Expr::product([Expr::constant(-1.0), rhs.clone()])])
            }
        }
        impl Mul<$t> for f64 {
            type Output = Expr;
            fn mul(self, rhs: $t) -> Expr {
                Expr::product([Expr::constant(self), rhs.clone()])
            }
        }
        impl Neg for $t {
            type Output = Expr;
            fn neg(self) -> Expr {
                Expr::product([Expr::constant(-1.0), self.clone()])
            }
        }
    };
}

scalar_ops!(Expr);
scalar_ops!(&Expr);

/// Merges terms that are constant multiples of the same node, so that
/// `x + (-x)` cancels symbolically instead of after rounding.
fn collect_like_terms(terms: Vec<Expr>) -> Vec<Expr> {
    let split = |t: &Expr| -> (Expr, f64) {
        if let Op::Product(fs) = t.op() {
            if let [c, rest] = fs.as_slice() {
                if let Some(k) = c.as_const() {
                    return (rest.clone(), k);
                }
            }
        }
        (t.clone(), 1.0)
    };
    let mut order: Vec<(Expr, f64)> = Vec::with_capacity(terms.len());
    let mut slot: HashMap<*const Node, usize> = HashMap::new();
    let mut merged = false;
    for t in &terms {
        let (base, k) = split(t);
        match slot.get(&base.key()) {
            Some(&i) => {
                order[i].1 += k;
                merged = true;
            }
            None => {
                slot.insert(base.key(), order.len());
                order.push((base, k));
            }
        }
    }
    if !merged {
        return terms;
    }
    order
        .into_iter()
        .filter(|(_, k)| *k != 0.0)
        .map(|(b, k)| if k == 1.0 { b } else { Expr::product([Expr::constant(k), b]) })
        .collect()
}

#[derive(Clone, Debug)]
enum Ins {
    Const(f64),
    Coord(usize),
    Sum(Vec<u32>),
    Product(Vec<u32>),
    Powi(u32, i32),
    Powf(u32, f64),
    Sin(u32),
    Cos(u32),
    Exp(u32),
    Atan2(u32, u32),
    Quotient(u32, u32),
    Glue(u32, i32),
    Select(Vec<(u32, f64, f64)>, u32, u32),
}

/// Compiled evaluation program for a set of expressions.
#[derive(Clone, Debug)]
pub struct Tape {
    ins: Vec<Ins>,
    outputs: Vec<u32>,
    nvars: usize,
}

impl Tape {
    pub fn new(roots: &[Expr]) -> Tape {
        let mut slots: HashMap<*const Node, u32> = HashMap::new();
        let mut ins = Vec::new();
        let mut stack: Vec<(Expr, bool)> = Vec::new();
        for r in roots.iter().rev() {
            stack.push((r.clone(), false));
        }
        while let Some((e, expanded)) = stack.pop() {
            if slots.contains_key(&e.key()) {
                continue;
            }
            if !expanded {
                stack.push((e.clone(), true));
                for c in e.children().into_iter().rev() {
                    if !slots.contains_key(&c.key()) {
                        stack.push((c.clone(), false));
                    }
                }
                continue;
            }
            let id = |x: &Expr| slots[&x.key()];
            let op = match e.op() {
                Op::Const(c) => Ins::Const(*c),
                Op::Coord(i) => Ins::Coord(*i),
                Op::Sum(xs) => Ins::Sum(xs.iter().map(id).collect()),
                Op::Product(xs) => Ins::Product(xs.iter().map(id).collect()),
                Op::Powi(a, n) => Ins::Powi(id(a), *n),
                Op::Powf(a, p) => Ins::Powf(id(a), *p),
                Op::Sin(a) => Ins::Sin(id(a)),
                Op::Cos(a) => Ins::Cos(id(a)),
                Op::Exp(a) => Ins::Exp(id(a)),
                Op::Atan2(y, x) => Ins::Atan2(id(y), id(x)),
                Op::Quotient(n, d) => Ins::Quotient(id(n), id(d)),
                Op::Glue(t, p) => Ins::Glue(id(t), *p),
                Op::Select(g, a, b) => Ins::Select(g.iter().map(|g| (id(&g.expr), g.lo, g.hi)).collect(), id(a), id(b)),
            };
            let k = ins.len() as u32;
            ins.push(op);
            slots.insert(e.key(), k);
        }
        let outputs = roots.iter().map(|r| slots[&r.key()]).collect();
        let nvars = roots.iter().map(Expr::arity).max().unwrap_or(0);
        Tape { ins, outputs, nvars }
    }

    pub fn len(&self) -> usize {
        self.ins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ins.is_empty()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Minimum point length the tape reads.
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(x, &mut scratch, &mut out);
        out
    }

    /// Allocation-free evaluation given a reusable scratch buffer.
    pub fn eval_into(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        assert!(x.len() >= self.nvars, "point has too few coordinates");
        scratch.clear();
        scratch.reserve(self.ins.len());
        for ins in &self.ins {
            let v = {
                let s = &*scratch;
                let g = |k: &u32| s[*k as usize];
                match ins {
                    Ins::Const(c) => *c,
                    Ins::Coord(i) => x[*i],
                    Ins::Sum(xs) => xs.iter().map(g).sum(),
                    Ins::Product(xs) => xs.iter().map(g).product(),
                    Ins::Powi(a, n) => g(a).powi(*n),
                    Ins::Powf(a, p) => g(a).powf(*p),
                    Ins::Sin(a) => g(a).sin(),
                    Ins::Cos(a) => g(a).cos(),
                    Ins::Exp(a) => g(a).exp(),
                    Ins::Atan2(y, x) => g(y).atan2(g(x)),
                    Ins::Quotient(n, d) => g(n) / g(d),
                    Ins::Glue(t, p) => glue_value(g(t), *p),
                    Ins::Select(guards, a, b) => {
                        if guards.iter().all(|(e, lo, hi)| {
                            let v = g(e);
                            v >= *lo && v <= *hi
                        }) {
                            g(a)
                        } else {
                            g(b)
                        }
                    }
                }
            };
            scratch.push(v);
        }
        for (o, k) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[*k as usize];
        }
    }

    /// Evaluation in double-double arithmetic, rounded to `f64` at the end.
    /// Slower than [`Tape::eval`]; used where the value is a residual that
    /// should vanish and rounding of large intermediate terms would mask it.
    pub fn eval_precise(&self, x: &[f64]) -> Vec<f64> {
        assert!(x.len() >= self.nvars, "point has too few coordinates");
        let mut v: Vec<Dd> = Vec::with_capacity(self.ins.len());
        for ins in &self.ins {
            let g = |k: &u32| v[*k as usize];
            let r = match ins {
                Ins::Const(c) => Dd::from_f64(*c),
                Ins::Coord(i) => Dd::from_f64(x[*i]),
                Ins::Sum(xs) => xs.iter().map(g).fold(Dd::ZERO, |a, b| a + b),
                Ins::Product(xs) => xs.iter().map(g).fold(Dd::ONE, |a, b| a * b),
                Ins::Powi(a, n) => g(a).powi(*n),
                Ins::Powf(a, p) => g(a).powf(*p),
                Ins::Sin(a) => g(a).sin(),
                Ins::Cos(a) => g(a).cos(),
                Ins::Exp(a) => g(a).exp(),
                Ins::Atan2(y, x) => g(y).atan2(g(x)),
                Ins::Quotient(n, d) => g(n) / g(d),
                Ins::Glue(t, p) => g(t).glue(*p, glue_value),
                Ins::Select(guards, a, b) => {
                    if guards.iter().all(|(e, lo, hi)| {
                        let w = g(e).to_f64();
                        w >= *lo && w <= *hi
                    }) {
                        g(a)
                    } else {
                        g(b)
                    }
                }
            };
            v.push(r);
        }
        self.outputs.iter().map(|k| v[*k as usize].to_f64()).collect()
    }

    /// Forward-mode evaluation: returns values and, for each output, the
    /// gradient with respect to the first `n` coordinates (row-major,
    /// `outputs x n`).
    pub fn eval_with_gradient(&self, x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        assert!(x.len() >= self.nvars.max(n), "point has too few coordinates");
        let m = self.ins.len();
        let mut val = vec![0.0; m];
        let mut dot = vec![0.0; m * n];
        for (k, ins) in self.ins.iter().enumerate() {
            let (done, rest) = dot.split_at_mut(k * n);
            let d = &mut rest[..n];
            let dv = |j: u32| &done[j as usize * n..(j as usize + 1) * n];
            // Scale a child's dual, leaving exact zeros where the child has
            // no dependence (keeps inf * 0 out of unrelated directions).
            let scaled = |d: &mut [f64], j: u32, s: f64| {
                for (o, c) in d.iter_mut().zip(dv(j)) {
                    if *c != 0.0 {
                        *o += s * c;
                    }
                }
            };
            let v = match ins {
                Ins::Const(c) => *c,
                Ins::Coord(i) => {
                    if *i < n {
                        d[*i] = 1.0;
                    }
                    x[*i]
                }
                Ins::Sum(xs) => {
                    for j in xs {
                        scaled(d, *j, 1.0);
                    }
                    xs.iter().map(|j| val[*j as usize]).sum()
                }
                Ins::Product(xs) => {
                    let len = xs.len();
                    let mut prefix = vec![1.0; len + 1];
                    for (q, j) in xs.iter().enumerate() {
                        prefix[q + 1] = prefix[q] * val[*j as usize];
                    }
                    let mut suffix = 1.0;
                    for q in (0..len).rev() {
                        let j = xs[q];
                        scaled(d, j, prefix[q] * suffix);
                        suffix *= val[j as usize];
                    }
                    prefix[len]
                }
                Ins::Powi(a, p) => {
                    let u = val[*a as usize];
                    scaled(d, *a, *p as f64 * u.powi(p - 1));
                    u.powi(*p)
                }
                Ins::Powf(a, p) => {
                    let u = val[*a as usize];
                    scaled(d, *a, p * u.powf(p - 1.0));
                    u.powf(*p)
                }
                Ins::Sin(a) => {
                    let u = val[*a as usize];
                    scaled(d, *a, u.cos());
                    u.sin()
                }
                Ins::Cos(a) => {
                    let u = val[*a as usize];
                    scaled(d, *a, -u.sin());
                    u.cos()
                }
                Ins::Exp(a) => {
                    let e = val[*a as usize].exp();
                    scaled(d, *a, e);
                    e
                }
                Ins::Atan2(y, xx) => {
                    let (yv, xv) = (val[*y as usize], val[*xx as usize]);
                    let r2 = xv * xv + yv * yv;
                    scaled(d, *y, xv / r2);
                    scaled(d, *xx, -yv / r2);
                    yv.atan2(xv)
                }
                Ins::Quotient(nn, dd) => {
                    let (nv, dv_) = (val[*nn as usize], val[*dd as usize]);
                    let (gn, gd) = (dv(*nn), dv(*dd));
                    let den = dv_ * dv_;
                    for q in 0..n {
                        if gn[q] != 0.0 || gd[q] != 0.0 {
                            d[q] = (gn[q] * dv_ - nv * gd[q]) / den;
                        }
                    }
                    nv / dv_
                }
                Ins::Glue(t, p) => {
                    let tv = val[*t as usize];
                    let s = glue_value(tv, p + 2) - *p as f64 * glue_value(tv, p + 1);
                    scaled(d, *t, s);
                    glue_value(tv, *p)
                }
                Ins::Select(guards, a, b) => {
                    let inside = guards.iter().all(|(e, lo, hi)| {
                        let v = val[*e as usize];
                        v >= *lo && v <= *hi
                    });
                    let pick = if inside { *a } else { *b };
                    d.copy_from_slice(dv(pick));
                    val[pick as usize]
                }
            };
            val[k] = v;
        }
        let values = self.outputs.iter().map(|k| val[*k as usize]).collect();
        let mut grads = Vec::with_capacity(self.outputs.len() * n);
        for k in &self.outputs {
            grads.extend_from_slice(&dot[*k as usize * n..(*k as usize + 1) * n]);
        }
        (values, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::coord(i)
    }

    fn central_diff(e: &Expr, p: &[f64], i: usize, h: f64) -> f64 {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[i] += h;
        b[i] -= h;
        (e.eval(&a) - e.eval(&b)) / (2.0 * h)
    }

    #[test]
    fn constant_folding() {
        let e = Expr::constant(2.0) * Expr::constant(3.0) + 1.0;
        assert_eq!(e.as_const(), Some(7.0));
        assert!((x(0) * 0.0).is_zero());
        assert!((x(0) - x(0)).partial(0).is_zero());
    }

    #[test]
    fn symbolic_and_forward_mode_agree() {
        let e = (x(0) * x(1)).sin() + x(2).exp() * x(0).powi(3) - x(1).atan2(&(x(0) + 2.0)) + (x(2) * x(2) + 1.0).sqrt();
        let p = [0.3, -0.7, 0.2];
        let tape = Tape::new(std::slice::from_ref(&e));
        let (_, g) = tape.eval_with_gradient(&p, 3);
        for (i, gi) in g.iter().enumerate() {
            let sym = e.partial(i).eval(&p);
            let fd = central_diff(&e, &p, i, 1e-6);
            assert!((sym - gi).abs() < 1e-13, "{i}: {sym} vs {gi}");
            assert!((sym - fd).abs() < 1e-8, "{i}: {sym} vs {fd}");
        }
    }

    #[test]
    fn glue_is_flat_and_exact_zero() {
        let t = x(0);
        let g = t.glue(0);
        assert_eq!(g.eval(&[-0.5]), 0.0);
        assert_eq!(g.eval(&[0.0]), 0.0);
        assert_eq!(g.partial(0).eval(&[0.0]), 0.0);
        assert_eq!(g.partial(0).partial(0).eval(&[-1.0]), 0.0);
        let p = [0.4];
        let fd = central_diff(&g, &p, 0, 1e-6);
        assert!((g.partial(0).eval(&p) - fd).abs() < 1e-8);
        let d2 = g.partial(0).partial(0);
        let fd2 = central_diff(&g.partial(0), &p, 0, 1e-6);
        assert!((d2.eval(&p) - fd2).abs() < 1e-7);
    }

    #[test]
    fn substitution_composes() {
        let f = x(0).square() + x(1);
        let g = f.substitute(&[x(1).sin(), x(0) * 2.0]);
        let p = [0.5, 1.2];
        let expect = 1.2f64.sin().powi(2) + 1.0;
        assert!((g.eval(&p) - expect).abs() < 1e-15);
    }

    #[test]
    fn select_takes_branch_derivatives() {
        let e = Expr::select(
            vec![Guard {
                expr: x(0),
                lo: 0.0,
                hi: 1.0,
            }],
            x(0).square(),
            x(0) * 3.0,
        );
        assert_eq!(e.eval(&[0.5]), 0.25);
        assert_eq!(e.eval(&[2.0]), 6.0);
        assert_eq!(e.partial(0).eval(&[0.5]), 1.0);
        assert_eq!(e.partial(0).eval(&[2.0]), 3.0);
    }

    #[test]
    fn shared_subexpressions_compile_once() {
        let a = (x(0) * x(1)).sin();
        let e = Expr::sum((0..50).map(|_| a.clone()));
        // Folded to 50 * sin(x0 x1): outer product, constant, sin, product, two coordinates.
        assert_eq!(e.node_count(), 6);
        assert!((e.eval(&[0.3, 0.7]) - 50.0 * (0.21f64).sin()).abs() < 1e-12);
    }

    #[test]
    fn opposite_terms_cancel_symbolically() {
        let a = (x(0) * x(1)).sin() + x(2).exp();
        assert!(Expr::sum([a.clone(), -&a]).is_zero());
        let b = Expr::sum([a.clone(), x(1), -&a]);
        assert_eq!(b.eval(&[1.0, 2.5, 3.0]), 2.5);
    }

    #[test]
    fn mixed_partials_share_a_node() {
        let f = (x(0) * x(1).cos() + x(2)).exp() * (x(1) + x(2) * x(0)).sin();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f.partial(i).partial(j).key(), f.partial(j).partial(i).key());
            }
        }
    }
}
