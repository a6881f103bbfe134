//! Exact symbolic scalar calculus over jet coordinates.
//!
//! A [`ScalarExpr`] is a quotient of two canonical polynomials over chart
//! coordinates, free parameters and opaque analytic atoms (`sin`, `cos`,
//! `exp`). On the polynomial/rational fragment the representation is unique
//! (expanded, collected, gcd-reduced, denominator monic), so structural
//! equality decides semantic equality there. Expressions containing analytic
//! atoms fall back to randomized rational-point evaluation as the equality
//! oracle.

pub mod gcd;
pub mod parse;
pub mod poly;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

use crate::chart::{Coord, JetChart};
use gcd::poly_gcd;
use poly::{Atom, FunKind, Monomial, Poly, Rat};

/// A bindable name: a chart coordinate or a free parameter.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Symbol {
    Coord(Coord),
    Param(String),
}

/// Result of evaluating an expression at a point.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Rational(Rat),
    Float(f64),
}

impl Value {
    pub fn int(n: i64) -> Value {
        Value::Rational(Rat::from(BigInt::from(n)))
    }

    pub fn rat(p: i64, q: i64) -> Value {
        Value::Rational(Rat::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Rational(r) => r.to_f64().unwrap_or(f64::NAN),
            Value::Float(f) => *f,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Value::Rational(r) => r.is_zero(),
            Value::Float(f) => *f == 0.0,
        }
    }

    fn add(&self, other: &Value) -> Value {
        match (self, other) {
            (Value::Rational(a), Value::Rational(b)) => Value::Rational(a + b),
            _ => Value::Float(self.to_f64() + other.to_f64()),
        }
    }

    fn mul(&self, other: &Value) -> Value {
        match (self, other) {
            (Value::Rational(a), Value::Rational(b)) => Value::Rational(a * b),
            _ => Value::Float(self.to_f64() * other.to_f64()),
        }
    }

    fn pow(&self, e: u32) -> Value {
        match self {
            Value::Rational(a) => {
                let mut acc = Rat::one();
                for _ in 0..e {
                    acc *= a;
                }
                Value::Rational(acc)
            }
            Value::Float(f) => Value::Float(f.powi(e as i32)),
        }
    }

    fn div(&self, other: &Value) -> Result<Value, ExprError> {
        if other.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        Ok(match (self, other) {
            (Value::Rational(a), Value::Rational(b)) => Value::Rational(a / b),
            _ => Value::Float(self.to_f64() / other.to_f64()),
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("expression of jet order {found} where order <= {max} is required")]
    Order { max: u8, found: u8 },
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
}

/// Exact symbolic scalar: canonical quotient of polynomials.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScalarExpr {
    num: Poly,
    den: Poly,
}

impl ScalarExpr {
    fn reduced(num: Poly, den: Poly) -> Result<ScalarExpr, ExprError> {
        if den.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(ScalarExpr {
                num: Poly::zero(),
                den: Poly::one(),
            });
        }
        if let Some(c) = den.as_constant() {
            let inv = Rat::one() / c;
            return Ok(ScalarExpr {
                num: num.mul_rat(&inv),
                den: Poly::one(),
            });
        }
        let g = poly_gcd(&num, &den);
        let (mut num, mut den) = if g.is_one() {
            (num, den)
        } else {
            (
                num.exact_div(&g).expect("gcd divides numerator"),
                den.exact_div(&g).expect("gcd divides denominator"),
            )
        };
        if let Some((_, lc)) = den.leading() {
            let inv = Rat::one() / lc;
            num = num.mul_rat(&inv);
            den = den.mul_rat(&inv);
        }
        Ok(ScalarExpr { num, den })
    }

    fn from_poly(p: Poly) -> ScalarExpr {
        ScalarExpr {
            num: p,
            den: Poly::one(),
        }
    }

    pub fn zero() -> ScalarExpr {
        ScalarExpr::from_poly(Poly::zero())
    }

    pub fn one() -> ScalarExpr {
        ScalarExpr::from_poly(Poly::one())
    }

    pub fn int(n: i64) -> ScalarExpr {
        ScalarExpr::from_poly(Poly::constant(Rat::from(BigInt::from(n))))
    }

    pub fn rat(p: i64, q: i64) -> ScalarExpr {
        ScalarExpr::from_poly(Poly::constant(Rat::new(BigInt::from(p), BigInt::from(q))))
    }

    pub fn rational(r: Rat) -> ScalarExpr {
        ScalarExpr::from_poly(Poly::constant(r))
    }

    pub fn coord(c: Coord) -> ScalarExpr {
        ScalarExpr::from_poly(Poly::atom(Atom::Coord(c)))
    }

    pub fn param(name: &str) -> ScalarExpr {
        ScalarExpr::from_poly(Poly::atom(Atom::Param(name.to_string())))
    }

    pub fn fun(kind: FunKind, arg: ScalarExpr) -> ScalarExpr {
        ScalarExpr::from_poly(Poly::atom(Atom::Fun(kind, Box::new(arg))))
    }

    pub fn sin(arg: ScalarExpr) -> ScalarExpr {
        ScalarExpr::fun(FunKind::Sin, arg)
    }

    pub fn cos(arg: ScalarExpr) -> ScalarExpr {
        ScalarExpr::fun(FunKind::Cos, arg)
    }

    pub fn exp(arg: ScalarExpr) -> ScalarExpr {
        ScalarExpr::fun(FunKind::Exp, arg)
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.den.is_one() && self.num.is_one()
    }

    /// The exact rational value, if the expression is constant.
    pub fn as_rational(&self) -> Option<Rat> {
        if !self.den.is_one() {
            return None;
        }
        if self.num.is_zero() {
            return Some(Rat::zero());
        }
        self.num.as_constant().cloned()
    }

    pub fn add(&self, other: &ScalarExpr) -> ScalarExpr {
        if self.den.is_one() && other.den.is_one() {
            return ScalarExpr::from_poly(self.num.add(&other.num));
        }
        let num = self
            .num
            .mul(&other.den)
            .add(&other.num.mul(&self.den));
        let den = self.den.mul(&other.den);
        ScalarExpr::reduced(num, den).expect("denominators nonzero")
    }

    pub fn sub(&self, other: &ScalarExpr) -> ScalarExpr {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> ScalarExpr {
        ScalarExpr {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, other: &ScalarExpr) -> ScalarExpr {
        if self.is_zero() || other.is_zero() {
            return ScalarExpr::zero();
        }
        if self.den.is_one() && other.den.is_one() {
            return ScalarExpr::from_poly(self.num.mul(&other.num));
        }
        ScalarExpr::reduced(self.num.mul(&other.num), self.den.mul(&other.den))
            .expect("denominators nonzero")
    }

    pub fn mul_int(&self, k: i64) -> ScalarExpr {
        self.mul(&ScalarExpr::int(k))
    }

    pub fn div(&self, other: &ScalarExpr) -> Result<ScalarExpr, ExprError> {
        if other.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        ScalarExpr::reduced(self.num.mul(&other.den), self.den.mul(&other.num))
    }

    pub fn powi(&self, e: i64) -> Result<ScalarExpr, ExprError> {
        if e == 0 {
            return Ok(ScalarExpr::one());
        }
        if self.is_zero() && e < 0 {
            return Err(ExprError::ZeroToNegativePower);
        }
        let p = e.unsigned_abs() as u32;
        let raised = ScalarExpr {
            num: self.num.pow(p),
            den: self.den.pow(p),
        };
        if e > 0 {
            Ok(raised)
        } else {
            ScalarExpr::one().div(&raised)
        }
    }

    /// All atoms of the top-level polynomials.
    fn top_atoms(&self) -> BTreeSet<Atom> {
        let mut out = self.num.atoms();
        out.extend(self.den.atoms());
        out
    }

    /// Coordinates appearing anywhere, including inside analytic arguments.
    pub fn free_coords(&self) -> BTreeSet<Coord> {
        let mut out = BTreeSet::new();
        self.visit_symbols(&mut |s| {
            if let Symbol::Coord(c) = s {
                out.insert(*c);
            }
        });
        out
    }

    /// Parameters appearing anywhere, including inside analytic arguments.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_symbols(&mut |s| {
            if let Symbol::Param(p) = s {
                out.insert(p.clone());
            }
        });
        out
    }

    fn visit_symbols(&self, f: &mut impl FnMut(&Symbol)) {
        for atom in self.top_atoms() {
            match atom {
                Atom::Coord(c) => f(&Symbol::Coord(c)),
                Atom::Param(p) => f(&Symbol::Param(p)),
                Atom::Fun(_, arg) => arg.visit_symbols(f),
            }
        }
    }

    /// True if any analytic atom occurs (equality is then only sampled).
    pub fn has_analytic_atoms(&self) -> bool {
        self.top_atoms()
            .iter()
            .any(|a| matches!(a, Atom::Fun(_, _)))
    }

    /// Maximum jet order of any coordinate used (0, 1 or 2).
    pub fn max_jet_order(&self) -> u8 {
        self.free_coords()
            .iter()
            .map(Coord::order)
            .max()
            .unwrap_or(0)
    }

    /// Exact partial derivative with all other jet coordinates independent.
    pub fn partial(&self, c: Coord) -> ScalarExpr {
        let c = match c {
            Coord::Jet2(a, mu, nu) => Coord::jet2(a, mu, nu),
            other => other,
        };
        self.partial_sym(&Symbol::Coord(c))
    }

    /// Partial derivative with respect to a free parameter.
    pub fn partial_param(&self, name: &str) -> ScalarExpr {
        self.partial_sym(&Symbol::Param(name.to_string()))
    }

    /// Partial derivative with respect to any bindable symbol.
    pub fn partial_sym(&self, s: &Symbol) -> ScalarExpr {
        let dn = poly_partial(&self.num, s);
        if self.den.is_one() {
            return dn;
        }
        let dd = poly_partial(&self.den, s);
        // (n/d)' = (n' d - n d') / d^2
        let num_part = dn.mul(&ScalarExpr::from_poly(self.den.clone()));
        let den_part = ScalarExpr::from_poly(self.num.clone()).mul(&dd);
        let numerator = num_part.sub(&den_part);
        let d2 = ScalarExpr::from_poly(self.den.mul(&self.den));
        numerator.div(&d2).expect("denominator nonzero")
    }

    /// Partial derivative by coordinate name.
    pub fn partial_named(&self, chart: &JetChart, name: &str) -> Result<ScalarExpr, crate::chart::ChartError> {
        Ok(self.partial(chart.resolve(name)?))
    }

    /// Total derivative along the base direction `mu`, raising jet order:
    /// `D_mu e = de/dx^mu + y^a_mu de/dy^a + y^a_{mu nu} de/dy^a_nu`.
    pub fn total_derivative(&self, chart: &JetChart, mu: usize) -> Result<ScalarExpr, ExprError> {
        let order = self.max_jet_order();
        if order > 1 {
            return Err(ExprError::Order {
                max: 1,
                found: order,
            });
        }
        let mu = mu as u8;
        let mut out = self.partial(Coord::Base(mu));
        for a in 0..chart.fibre_dim() as u8 {
            let d = self.partial(Coord::Fibre(a));
            if !d.is_zero() {
                out = out.add(&ScalarExpr::coord(Coord::Jet(a, mu)).mul(&d));
            }
            for nu in 0..chart.base_dim() as u8 {
                let d = self.partial(Coord::Jet(a, nu));
                if !d.is_zero() {
                    out = out.add(&ScalarExpr::coord(Coord::jet2(a, mu, nu)).mul(&d));
                }
            }
        }
        Ok(out)
    }

    /// Simultaneous substitution of coordinates/parameters, canonicalized.
    /// Unbound names pass through. Fails only if a substitution puts zero
    /// into a denominator.
    pub fn substitute(
        &self,
        bindings: &BTreeMap<Symbol, ScalarExpr>,
    ) -> Result<ScalarExpr, ExprError> {
        let num = poly_substitute(&self.num, bindings)?;
        let den = poly_substitute(&self.den, bindings)?;
        num.div(&den)
    }

    /// Evaluate at a point. Exact rational when all bindings are rational
    /// and the expression is division-safe there; float otherwise.
    pub fn eval(
        &self,
        bind: &impl Fn(&Symbol) -> Option<Value>,
    ) -> Result<Value, ExprError> {
        let n = poly_eval(&self.num, bind)?;
        let d = poly_eval(&self.den, bind)?;
        n.div(&d)
    }

    /// Evaluate against a map of bindings.
    pub fn eval_map(&self, point: &BTreeMap<Symbol, Value>) -> Result<Value, ExprError> {
        self.eval(&|s: &Symbol| point.get(s).cloned())
    }

    /// Equality oracle: structural on the rational fragment; randomized
    /// rational-point evaluation (32 points) when analytic atoms occur.
    pub fn is_zero_oracle(&self, rng: &mut impl Rng) -> bool {
        if self.is_zero() {
            return true;
        }
        if !self.has_analytic_atoms() {
            return false;
        }
        let mut symbols = BTreeSet::new();
        self.visit_symbols(&mut |s| {
            symbols.insert(s.clone());
        });
        let symbols: Vec<Symbol> = symbols.into_iter().collect();
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 32 && attempts < 640 {
            attempts += 1;
            let point: BTreeMap<Symbol, Value> = symbols
                .iter()
                .map(|s| {
                    (
                        s.clone(),
                        Value::rat(rng.random_range(-9..=9), rng.random_range(1..=4)),
                    )
                })
                .collect();
            match self.eval_map(&point) {
                Ok(v) => {
                    checked += 1;
                    let ok = match v {
                        Value::Rational(r) => r.is_zero(),
                        Value::Float(f) => f.abs() <= 1e-9,
                    };
                    if !ok {
                        return false;
                    }
                }
                Err(_) => continue, // pole; resample
            }
        }
        checked > 0
    }

    /// Canonical text rendering against a chart's coordinate names.
    pub fn render(&self, chart: &JetChart) -> String {
        if self.den.is_one() {
            render_poly(&self.num, chart)
        } else {
            format!(
                "({})/({})",
                render_poly(&self.num, chart),
                render_poly(&self.den, chart)
            )
        }
    }

    pub(crate) fn num_poly(&self) -> &Poly {
        &self.num
    }

    pub(crate) fn den_poly(&self) -> &Poly {
        &self.den
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr({:?}/{:?})", self.num, self.den)
    }
}

fn poly_partial(p: &Poly, s: &Symbol) -> ScalarExpr {
    let mut out = ScalarExpr::zero();
    for (m, coef) in &p.0 {
        for (i, (atom, e)) in m.0.iter().enumerate() {
            let datom = atom_partial(atom, s);
            if datom.is_zero() {
                continue;
            }
            // coef * e * atom^(e-1) * prod(other factors) * datom
            let mut rest = Monomial(
                m.0.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, f)| f.clone())
                    .collect(),
            );
            if *e > 1 {
                rest = rest.mul(&Monomial(vec![(atom.clone(), e - 1)]));
            }
            let scaled = Poly::term(rest, coef * Rat::from(BigInt::from(*e)));
            out = out.add(&ScalarExpr::from_poly(scaled).mul(&datom));
        }
    }
    out
}

fn atom_partial(atom: &Atom, s: &Symbol) -> ScalarExpr {
    match (atom, s) {
        (Atom::Coord(k), Symbol::Coord(c)) if k == c => ScalarExpr::one(),
        (Atom::Param(p), Symbol::Param(name)) if p == name => ScalarExpr::one(),
        (Atom::Coord(_), _) | (Atom::Param(_), _) => ScalarExpr::zero(),
        (Atom::Fun(kind, arg), _) => {
            let darg = arg.partial_sym(s);
            if darg.is_zero() {
                return ScalarExpr::zero();
            }
            let outer = match kind {
                FunKind::Sin => ScalarExpr::cos((**arg).clone()),
                FunKind::Cos => ScalarExpr::sin((**arg).clone()).neg(),
                FunKind::Exp => ScalarExpr::exp((**arg).clone()),
            };
            outer.mul(&darg)
        }
    }
}

fn poly_substitute(
    p: &Poly,
    bindings: &BTreeMap<Symbol, ScalarExpr>,
) -> Result<ScalarExpr, ExprError> {
    let mut out = ScalarExpr::zero();
    for (m, coef) in &p.0 {
        let mut term = ScalarExpr::rational(coef.clone());
        for (atom, e) in &m.0 {
            let replaced = match atom {
                Atom::Coord(c) => bindings.get(&Symbol::Coord(*c)).cloned(),
                Atom::Param(name) => bindings.get(&Symbol::Param(name.clone())).cloned(),
                Atom::Fun(kind, arg) => Some(ScalarExpr::fun(*kind, arg.substitute(bindings)?)),
            };
            let factor = match replaced {
                Some(expr) => expr.powi(*e as i64)?,
                None => ScalarExpr::from_poly(Poly::term(
                    Monomial(vec![(atom.clone(), *e)]),
                    Rat::one(),
                )),
            };
            term = term.mul(&factor);
        }
        out = out.add(&term);
    }
    Ok(out)
}

fn poly_eval(p: &Poly, bind: &impl Fn(&Symbol) -> Option<Value>) -> Result<Value, ExprError> {
    let mut acc = Value::Rational(Rat::zero());
    for (m, coef) in &p.0 {
        let mut term = Value::Rational(coef.clone());
        for (atom, e) in &m.0 {
            let v = atom_eval(atom, bind)?;
            term = term.mul(&v.pow(*e));
        }
        acc = acc.add(&term);
    }
    Ok(acc)
}

fn atom_eval(atom: &Atom, bind: &impl Fn(&Symbol) -> Option<Value>) -> Result<Value, ExprError> {
    match atom {
        Atom::Coord(c) => {
            bind(&Symbol::Coord(*c)).ok_or_else(|| ExprError::Unbound(format!("{c:?}")))
        }
        Atom::Param(name) => {
            bind(&Symbol::Param(name.clone())).ok_or_else(|| ExprError::Unbound(name.clone()))
        }
        Atom::Fun(kind, arg) => {
            let v = arg.eval(bind)?;
            Ok(match (kind, &v) {
                // keep the exactly-known special values rational
                (FunKind::Sin, Value::Rational(r)) if r.is_zero() => Value::int(0),
                (FunKind::Cos, Value::Rational(r)) if r.is_zero() => Value::int(1),
                (FunKind::Exp, Value::Rational(r)) if r.is_zero() => Value::int(1),
                (FunKind::Sin, _) => Value::Float(v.to_f64().sin()),
                (FunKind::Cos, _) => Value::Float(v.to_f64().cos()),
                (FunKind::Exp, _) => Value::Float(v.to_f64().exp()),
            })
        }
    }
}

fn render_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn render_atom(atom: &Atom, chart: &JetChart) -> String {
    match atom {
        Atom::Coord(c) => chart.coord_name(*c),
        Atom::Param(p) => p.clone(),
        Atom::Fun(kind, arg) => format!("{}({})", kind.name(), arg.render(chart)),
    }
}

fn render_poly(p: &Poly, chart: &JetChart) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    // leading monomial first
    for (i, (m, c)) in p.0.iter().rev().enumerate() {
        let neg = c.is_negative();
        let abs = c.abs();
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mut factors: Vec<String> = Vec::new();
        if !abs.is_one() || m.is_one() {
            factors.push(render_rat(&abs));
        }
        for (atom, e) in &m.0 {
            let a = render_atom(atom, chart);
            if *e == 1 {
                factors.push(a);
            } else {
                factors.push(format!("{a}^{e}"));
            }
        }
        out.push_str(&factors.join("*"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chart() -> JetChart {
        JetChart::new(["t", "x"], ["y"]).unwrap()
    }

    fn y() -> ScalarExpr {
        ScalarExpr::coord(Coord::Fibre(0))
    }
    fn y_t() -> ScalarExpr {
        ScalarExpr::coord(Coord::Jet(0, 0))
    }
    fn y_x() -> ScalarExpr {
        ScalarExpr::coord(Coord::Jet(0, 1))
    }

    #[test]
    fn partial_power_rule() {
        // d(y_t^2)/dy_t = 2 y_t
        let e = y_t().mul(&y_t());
        assert_eq!(e.partial(Coord::Jet(0, 0)), y_t().mul_int(2));
    }

    #[test]
    fn partial_product_rule() {
        // d(y^2 y_x)/dy = 2 y y_x
        let e = y().mul(&y()).mul(&y_x());
        assert_eq!(e.partial(Coord::Fibre(0)), y().mul(&y_x()).mul_int(2));
    }

    #[test]
    fn partial_of_constant() {
        assert!(ScalarExpr::int(5).partial(Coord::Base(1)).is_zero());
    }

    #[test]
    fn total_derivative_promotes_jets() {
        let c = chart();
        // D_t y = y_t
        assert_eq!(y().total_derivative(&c, 0).unwrap(), y_t());
        // D_t y_x = y_tx
        assert_eq!(
            y_x().total_derivative(&c, 0).unwrap(),
            ScalarExpr::coord(Coord::jet2(0, 0, 1))
        );
        // D_x (y * y_t) = y_x y_t + y y_tx
        let e = y().mul(&y_t());
        let expected = y_x()
            .mul(&y_t())
            .add(&y().mul(&ScalarExpr::coord(Coord::jet2(0, 0, 1))));
        assert_eq!(e.total_derivative(&c, 1).unwrap(), expected);
    }

    #[test]
    fn total_derivative_rejects_second_jets() {
        let c = chart();
        let e = ScalarExpr::coord(Coord::jet2(0, 0, 0));
        assert_eq!(
            e.total_derivative(&c, 0),
            Err(ExprError::Order { max: 1, found: 2 })
        );
    }

    #[test]
    fn substitution_eliminates_and_evaluates() {
        // (y_t - y)[y_t := y] = 0
        let e = y_t().sub(&y());
        let mut b = BTreeMap::new();
        b.insert(Symbol::Coord(Coord::Jet(0, 0)), y());
        assert!(e.substitute(&b).unwrap().is_zero());

        // (a*x)[a := 2, x := 3] = 6
        let e = ScalarExpr::param("a").mul(&ScalarExpr::coord(Coord::Base(1)));
        let mut b = BTreeMap::new();
        b.insert(Symbol::Param("a".into()), ScalarExpr::int(2));
        b.insert(Symbol::Coord(Coord::Base(1)), ScalarExpr::int(3));
        assert_eq!(e.substitute(&b).unwrap(), ScalarExpr::int(6));
    }

    #[test]
    fn eval_exact_and_errors() {
        let e = y_t().mul(&y_t()).sub(&y_x().mul(&y_x()));
        let mut p = BTreeMap::new();
        p.insert(Symbol::Coord(Coord::Jet(0, 0)), Value::int(3));
        p.insert(Symbol::Coord(Coord::Jet(0, 1)), Value::int(2));
        assert_eq!(e.eval_map(&p).unwrap(), Value::int(5));

        let inv = ScalarExpr::one().div(&y()).unwrap();
        let mut p = BTreeMap::new();
        p.insert(Symbol::Coord(Coord::Fibre(0)), Value::int(0));
        assert_eq!(inv.eval_map(&p), Err(ExprError::DivisionByZero));

        let s = ScalarExpr::sin(ScalarExpr::coord(Coord::Base(1)));
        let mut p = BTreeMap::new();
        p.insert(Symbol::Coord(Coord::Base(1)), Value::int(0));
        assert_eq!(s.eval_map(&p).unwrap(), Value::int(0));
    }

    #[test]
    fn rational_canonical_form_cancels() {
        // (y^2 - 1)/(y - 1) == y + 1 structurally after reduction
        let num = y().mul(&y()).sub(&ScalarExpr::one());
        let den = y().sub(&ScalarExpr::one());
        let q = num.div(&den).unwrap();
        assert_eq!(q, y().add(&ScalarExpr::one()));
    }

    #[test]
    fn mixed_partials_commute() {
        use super::tests_support::random_poly_expr;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = chart();
        let coords = c.coords_up_to(2);
        for _ in 0..50 {
            let e = random_poly_expr(&mut rng, &coords);
            for _ in 0..4 {
                let c1 = coords[rng.random_range(0..coords.len())];
                let c2 = coords[rng.random_range(0..coords.len())];
                assert_eq!(e.partial(c1).partial(c2), e.partial(c2).partial(c1));
            }
        }
    }

    #[test]
    fn leibniz_rule_structural() {
        use super::tests_support::random_poly_expr;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = chart();
        let coords = c.coords_up_to(1);
        for _ in 0..30 {
            let e = random_poly_expr(&mut rng, &coords);
            let f = random_poly_expr(&mut rng, &coords);
            for mu in 0..c.base_dim() {
                let lhs = e.mul(&f).total_derivative(&c, mu).unwrap();
                let rhs = e
                    .total_derivative(&c, mu)
                    .unwrap()
                    .mul(&f)
                    .add(&e.mul(&f.total_derivative(&c, mu).unwrap()));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let c = chart();
        let e = y_t()
            .mul(&y_t())
            .mul(&ScalarExpr::rat(1, 2))
            .sub(&y_x().mul(&y_x()).mul(&ScalarExpr::rat(1, 2)));
        // leading monomial (largest atom) first
        assert_eq!(e.render(&c), "-1/2*y_x^2 + 1/2*y_t^2");
    }

}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// Sparse random polynomial of total degree <= 3 over the given
    /// coordinates, with small rational coefficients.
    pub(crate) fn random_poly_expr(rng: &mut impl Rng, coords: &[Coord]) -> ScalarExpr {
        let terms = rng.random_range(1..=5);
        let mut e = ScalarExpr::zero();
        for _ in 0..terms {
            let mut term = ScalarExpr::rat(rng.random_range(-6..=6), rng.random_range(1..=3));
            let deg = rng.random_range(0..=3);
            for _ in 0..deg {
                let c = coords[rng.random_range(0..coords.len())];
                term = term.mul(&ScalarExpr::coord(c));
            }
            e = e.add(&term);
        }
        e
    }
}
