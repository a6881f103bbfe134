//! Distributed multivariate polynomials over exact rationals.
//!
//! Atoms are chart coordinates, named parameters, and opaque analytic
//! function applications. Monomials are kept sorted and compared in the
//! lexicographic monomial order (larger atoms more significant), which is
//! multiplicative and therefore safe for leading-term division.

use std::collections::{BTreeMap, BTreeSet};
use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::chart::Coord;
use crate::expr::ScalarExpr;

pub type Rat = BigRational;

pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

/// Analytic function heads kept opaque by the polynomial layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FunKind {
    Sin,
    Cos,
    Exp,
}

impl FunKind {
    pub fn name(&self) -> &'static str {
        match self {
            FunKind::Sin => "sin",
            FunKind::Cos => "cos",
            FunKind::Exp => "exp",
        }
    }
}

/// A generator of the polynomial ring: coordinate, free parameter, or an
/// opaque analytic application whose argument is again an expression.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Atom {
    Coord(Coord),
    Param(String),
    Fun(FunKind, Box<ScalarExpr>),
}

/// A power product with sorted atoms and positive exponents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial(pub(crate) Vec<(Atom, u32)>);

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(Vec::new())
    }

    pub fn atom(a: Atom) -> Monomial {
        Monomial(vec![(a, 1)])
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| *e).sum()
    }

    pub fn degree_in(&self, a: &Atom) -> u32 {
        self.0
            .iter()
            .find(|(b, _)| b == a)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: Vec<(Atom, u32)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Exact monomial quotient, `None` when not divisible.
    pub fn try_div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut j = 0;
        for (a, e) in &self.0 {
            if j < other.0.len() && other.0[j].0 == *a {
                let eo = other.0[j].1;
                j += 1;
                match e.cmp(&eo) {
                    Ordering::Less => return None,
                    Ordering::Equal => {}
                    Ordering::Greater => out.push((a.clone(), e - eo)),
                }
            } else {
                out.push((a.clone(), *e));
            }
        }
        if j == other.0.len() {
            Some(Monomial(out))
        } else {
            None
        }
    }

    pub fn factors(&self) -> impl Iterator<Item = &(Atom, u32)> {
        self.0.iter()
    }

    /// The monomial with atom `v` struck out entirely.
    pub fn without(&self, v: &Atom) -> Monomial {
        Monomial(self.0.iter().filter(|(a, _)| a != v).cloned().collect())
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    /// Lexicographic monomial order with larger atoms more significant.
    fn cmp(&self, other: &Self) -> Ordering {
        let (mut i, mut j) = (self.0.len(), other.0.len());
        loop {
            match (i > 0, j > 0) {
                (false, false) => return Ordering::Equal,
                (true, false) => return Ordering::Greater,
                (false, true) => return Ordering::Less,
                (true, true) => {
                    let (a1, e1) = &self.0[i - 1];
                    let (a2, e2) = &other.0[j - 1];
                    match a1.cmp(a2) {
                        Ordering::Greater => return Ordering::Greater,
                        Ordering::Less => return Ordering::Less,
                        Ordering::Equal => match e1.cmp(e2) {
                            Ordering::Equal => {
                                i -= 1;
                                j -= 1;
                            }
                            ord => return ord,
                        },
                    }
                }
            }
        }
    }
}

/// Polynomial in canonical distributed form: nonzero coefficients only.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Poly(pub(crate) BTreeMap<Monomial, Rat>);

impl Poly {
    pub fn zero() -> Poly {
        Poly(BTreeMap::new())
    }

    pub fn one() -> Poly {
        Poly::constant(Rat::one())
    }

    pub fn constant(c: Rat) -> Poly {
        let mut t = BTreeMap::new();
        if !c.is_zero() {
            t.insert(Monomial::one(), c);
        }
        Poly(t)
    }

    pub fn atom(a: Atom) -> Poly {
        let mut t = BTreeMap::new();
        t.insert(Monomial::atom(a), Rat::one());
        Poly(t)
    }

    pub fn term(m: Monomial, c: Rat) -> Poly {
        let mut t = BTreeMap::new();
        if !c.is_zero() {
            t.insert(m, c);
        }
        Poly(t)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().map(|c| c.is_one()).unwrap_or(false)
    }

    pub fn as_constant(&self) -> Option<&Rat> {
        if self.0.is_empty() {
            return None;
        }
        if self.0.len() == 1 {
            let (m, c) = self.0.iter().next().unwrap();
            if m.is_one() {
                return Some(c);
            }
        }
        None
    }

    pub fn num_terms(&self) -> usize {
        self.0.len()
    }

    /// Leading term under the monomial order.
    pub fn leading(&self) -> Option<(&Monomial, &Rat)> {
        self.0.iter().next_back()
    }

    pub fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        match self.0.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + &c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.0 {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|(m, c)| (m.clone(), -c)).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.0 {
            out.add_term(m.clone(), -c);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn mul_rat(&self, c: &Rat) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly(self.0.iter().map(|(m, k)| (m.clone(), k * c)).collect())
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        out
    }

    /// Exact polynomial quotient by repeated leading-term elimination.
    pub fn exact_div(&self, d: &Poly) -> Option<Poly> {
        if d.is_zero() {
            return None;
        }
        if let Some(c) = d.as_constant() {
            return Some(self.mul_rat(&(Rat::one() / c)));
        }
        let (dm, dc) = d.leading().unwrap();
        let mut rem = self.clone();
        let mut quo = Poly::zero();
        while !rem.is_zero() {
            let (rm, rc) = rem.leading().unwrap();
            let qm = rm.try_div(dm)?;
            let qc = rc / dc;
            let t = Poly::term(qm, qc);
            rem = rem.sub(&t.mul(d));
            quo = quo.add(&t);
        }
        Some(quo)
    }

    /// All atoms appearing at the top level (not inside function arguments).
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        for m in self.0.keys() {
            for (a, _) in &m.0 {
                out.insert(a.clone());
            }
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.0.iter()
    }

    pub fn max_degree_in(&self, v: &Atom) -> u32 {
        self.0.keys().map(|m| m.degree_in(v)).max().unwrap_or(0)
    }

    /// Normalize so the leading coefficient is `1`; zero stays zero.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some((_, c)) => self.mul_rat(&(Rat::one() / c)),
        }
    }

    /// Sign of the leading coefficient (+1, -1) or 0 for the zero polynomial.
    pub fn leading_sign(&self) -> i32 {
        match self.leading() {
            None => 0,
            Some((_, c)) => {
                if c.is_positive() {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Atom {
        Atom::Coord(Coord::Base(0))
    }
    fn y() -> Atom {
        Atom::Coord(Coord::Fibre(0))
    }

    #[test]
    fn monomial_order_is_multiplicative() {
        // y > x*y would violate multiplicativity under a naive vec order;
        // lex gives x*y > y and stays compatible with multiplication.
        let m_y = Monomial::atom(y());
        let m_xy = Monomial::atom(x()).mul(&Monomial::atom(y()));
        assert!(m_xy > m_y);
        let m_x = Monomial::atom(x());
        let lhs = m_xy.mul(&m_x);
        let rhs = m_y.mul(&m_x);
        assert!(lhs > rhs);
    }

    #[test]
    fn exact_division_round_trips() {
        let p = Poly::atom(x()).add(&Poly::atom(y())); // x + y
        let q = Poly::atom(x()).sub(&Poly::constant(rat(1, 2))); // x - 1/2
        let prod = p.mul(&q);
        assert_eq!(prod.exact_div(&q).unwrap(), p);
        assert_eq!(prod.exact_div(&p).unwrap(), q);
        assert!(p.exact_div(&q).is_none());
    }

    #[test]
    fn add_cancels_to_zero() {
        let p = Poly::atom(x()).mul(&Poly::atom(y()));
        assert!(p.sub(&p).is_zero());
    }
}
