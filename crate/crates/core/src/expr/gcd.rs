//! Multivariate polynomial gcd via primitive pseudo-remainder sequences.
//!
//! Needed to keep rational expressions in lowest terms so that canonical
//! forms are unique on the rational fragment. Inputs in this crate are
//! small, so the primitive PRS is fast enough.

use super::poly::{Atom, Monomial, Poly, Rat};
use num_traits::One;

/// Gcd over the rationals, normalized to leading coefficient 1.
/// `gcd(0, p) = monic(p)`, `gcd(0, 0) = 0`.
pub fn poly_gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.as_constant().is_some() || b.as_constant().is_some() {
        return Poly::one();
    }
    let atoms_a = a.atoms();
    let atoms_b = b.atoms();
    let common: Vec<Atom> = atoms_a.intersection(&atoms_b).cloned().collect();
    if common.is_empty() {
        return Poly::one();
    }
    // Main variable: the common atom with the smallest joint degree keeps
    // the remainder sequence short.
    let v = common
        .iter()
        .min_by_key(|v| a.max_degree_in(v) + b.max_degree_in(v))
        .unwrap()
        .clone();
    let fa = to_recursive(a, &v);
    let fb = to_recursive(b, &v);
    let (ca, pa) = primitive(&fa);
    let (cb, pb) = primitive(&fb);
    let cont = poly_gcd(&ca, &cb);

    let (mut f, mut g) = if pa.len() >= pb.len() {
        (pa, pb)
    } else {
        (pb, pa)
    };
    while !rec_is_zero(&g) {
        let r = pseudo_rem(&f, &g);
        f = g;
        g = primitive(&r).1;
    }
    let gcd_v = if f.len() <= 1 {
        // Degree zero in the main variable: only the content survives.
        Poly::one()
    } else {
        from_recursive(&f, &v)
    };
    cont.mul(&gcd_v).monic()
}

/// Gcd of a list; 0 for an empty or all-zero list.
pub fn poly_gcd_many<'a>(polys: impl IntoIterator<Item = &'a Poly>) -> Poly {
    let mut acc = Poly::zero();
    for p in polys {
        acc = poly_gcd(&acc, p);
        if acc.is_one() {
            return acc;
        }
    }
    acc
}

/// Coefficients by ascending degree in `v`; coefficients do not contain `v`.
fn to_recursive(p: &Poly, v: &Atom) -> Vec<Poly> {
    let deg = p.max_degree_in(v) as usize;
    let mut out = vec![Poly::zero(); deg + 1];
    for (m, c) in &p.0 {
        let d = m.degree_in(v) as usize;
        out[d].add_term(m.without(v), c.clone());
    }
    trim(&mut out);
    out
}

fn from_recursive(coeffs: &[Poly], v: &Atom) -> Poly {
    let mut out = Poly::zero();
    for (d, c) in coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let vp = Poly::term(power_of(v, d as u32), Rat::one());
        out = out.add(&c.mul(&vp));
    }
    out
}

fn power_of(v: &Atom, e: u32) -> Monomial {
    if e == 0 {
        Monomial::one()
    } else {
        Monomial(vec![(v.clone(), e)])
    }
}

fn rec_is_zero(f: &[Poly]) -> bool {
    f.iter().all(Poly::is_zero)
}

fn trim(f: &mut Vec<Poly>) {
    while f.len() > 1 && f.last().map(Poly::is_zero).unwrap_or(false) {
        f.pop();
    }
    if f.len() == 1 && f[0].is_zero() {
        f.clear();
        f.push(Poly::zero());
    }
}

/// Content (gcd of coefficients) and primitive part.
fn primitive(f: &[Poly]) -> (Poly, Vec<Poly>) {
    if rec_is_zero(f) {
        return (Poly::zero(), vec![Poly::zero()]);
    }
    let cont = poly_gcd_many(f.iter().filter(|c| !c.is_zero()));
    let pp = f
        .iter()
        .map(|c| {
            if c.is_zero() {
                Poly::zero()
            } else {
                c.exact_div(&cont).expect("content divides coefficients")
            }
        })
        .collect();
    (cont, pp)
}

/// Pseudo-remainder of `f` by `g` in the main variable (deg f >= deg g >= 0).
fn pseudo_rem(f: &[Poly], g: &[Poly]) -> Vec<Poly> {
    let dg = g.len() - 1;
    let lg = g[dg].clone();
    let mut r: Vec<Poly> = f.to_vec();
    loop {
        trim(&mut r);
        if rec_is_zero(&r) || r.len() - 1 < dg {
            return r;
        }
        let dr = r.len() - 1;
        let lr = r[dr].clone();
        // r := lg * r - lr * v^(dr-dg) * g
        let mut next = vec![Poly::zero(); dr + 1];
        for (d, c) in r.iter().enumerate() {
            next[d] = c.mul(&lg);
        }
        for (d, c) in g.iter().enumerate() {
            let shifted = d + (dr - dg);
            next[shifted] = next[shifted].sub(&c.mul(&lr));
        }
        r = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Coord;
    use crate::expr::poly::rat;

    fn pa(c: Coord) -> Poly {
        Poly::atom(Atom::Coord(c))
    }

    #[test]
    fn univariate_gcd() {
        let x = pa(Coord::Base(0));
        // (x^2 - 1) and (x - 1) share (x - 1)
        let f = x.mul(&x).sub(&Poly::one());
        let g = x.sub(&Poly::one());
        assert_eq!(poly_gcd(&f, &g), g.monic());
    }

    #[test]
    fn multivariate_gcd() {
        let x = pa(Coord::Base(0));
        let y = pa(Coord::Fibre(0));
        let common = x.add(&y.mul_rat(&rat(2, 1))); // x + 2y
        let f = common.mul(&x.sub(&y));
        let g = common.mul(&x.add(&y)).mul(&y);
        let gcd = poly_gcd(&f, &g);
        assert_eq!(gcd, common.monic());
    }

    #[test]
    fn coprime_gives_one() {
        let x = pa(Coord::Base(0));
        let y = pa(Coord::Fibre(0));
        assert!(poly_gcd(&x, &y).is_one());
        assert!(poly_gcd(&x.add(&Poly::one()), &x).is_one());
    }

    #[test]
    fn gcd_of_equal_is_monic_self() {
        let x = pa(Coord::Base(0));
        let f = x.mul_rat(&rat(3, 2)).add(&Poly::one());
        assert_eq!(poly_gcd(&f, &f), f.monic());
    }

    #[test]
    fn randomized_gcd_divides_and_contains_common_factor() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        let atoms = [
            Coord::Base(0),
            Coord::Base(1),
            Coord::Fibre(0),
            Coord::Jet(0, 0),
        ];
        let mut random_poly = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut p = Poly::zero();
            for _ in 0..rng.random_range(1..=3) {
                let mut m = Monomial::one();
                for _ in 0..rng.random_range(0..=2) {
                    m = m.mul(&Monomial::atom(Atom::Coord(
                        atoms[rng.random_range(0..atoms.len())],
                    )));
                }
                p.add_term(m, rat(rng.random_range(-5..=5), rng.random_range(1..=3)));
            }
            if p.is_zero() {
                Poly::one()
            } else {
                p
            }
        };
        for _ in 0..200 {
            let a = random_poly(&mut rng);
            let b = random_poly(&mut rng);
            let c = random_poly(&mut rng);
            let g = poly_gcd(&a.mul(&c), &b.mul(&c));
            // g divides both inputs exactly
            assert!(a.mul(&c).exact_div(&g).is_some());
            assert!(b.mul(&c).exact_div(&g).is_some());
            // and contains the planted common factor
            assert!(g.exact_div(&poly_gcd(&c, &c)).is_some() || c.as_constant().is_some());
            assert!(
                g.exact_div(&c.monic()).is_some() || c.as_constant().is_some(),
                "gcd lost the common factor"
            );
        }
    }
}
