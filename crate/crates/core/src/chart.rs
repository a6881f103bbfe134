//! Coordinate charts on the bundles `Y -> X` and the first jet space.
//!
//! A [`JetChart`] records the base coordinates `x^mu` (time first) and the
//! fibre coordinates `y^a`; jet coordinates `y^a_mu` and symmetric second
//! jets `y^a_{mu nu}` are derived from them and addressed through [`Coord`].

use std::fmt;

use thiserror::Error;

/// A coordinate of the second-order jet space over a fixed chart.
///
/// Second jets carry a sorted index pair, so `y^a_{mu nu}` and
/// `y^a_{nu mu}` are the same `Coord` value.
///
/// The derived ordering (base, then fibre, then jets, then second jets,
/// each block ordered lexicographically by its indices) is the total order
/// used everywhere for canonical forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coord {
    /// Base coordinate `x^mu`; index 0 is the time coordinate.
    Base(u8),
    /// Fibre coordinate `y^a`.
    Fibre(u8),
    /// First jet `y^a_mu` as `(a, mu)`.
    Jet(u8, u8),
    /// Second jet `y^a_{mu nu}` as `(a, mu, nu)` with `mu <= nu`.
    Jet2(u8, u8, u8),
}

impl Coord {
    /// A second jet with the index pair put into canonical (sorted) order.
    pub fn jet2(a: u8, mu: u8, nu: u8) -> Coord {
        if mu <= nu {
            Coord::Jet2(a, mu, nu)
        } else {
            Coord::Jet2(a, nu, mu)
        }
    }

    /// Jet order of the coordinate: 0 for base/fibre, 1 and 2 for jets.
    pub fn order(&self) -> u8 {
        match self {
            Coord::Base(_) | Coord::Fibre(_) => 0,
            Coord::Jet(_, _) => 1,
            Coord::Jet2(_, _, _) => 2,
        }
    }
}

/// Errors raised while building or querying a chart.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChartError {
    #[error("chart needs at least one base and one fibre coordinate")]
    Empty,
    #[error("coordinate name `{0}` declared twice")]
    Duplicate(String),
    #[error("coordinate name `{0}` is not a valid identifier (letters/digits, no underscore)")]
    BadName(String),
    #[error("unknown coordinate name `{0}`")]
    Unknown(String),
    #[error("chart dimension exceeds the supported limit")]
    TooLarge,
}

/// The coordinate model of `Y -> X` and its jet prolongations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetChart {
    base_names: Vec<String>,
    fibre_names: Vec<String>,
}

impl JetChart {
    /// Build a chart from base names (time first) and fibre names.
    ///
    /// Names must be distinct identifiers without underscores; the
    /// underscore is reserved for the `field_base` jet naming scheme.
    pub fn new<S: Into<String>>(
        base: impl IntoIterator<Item = S>,
        fibre: impl IntoIterator<Item = S>,
    ) -> Result<JetChart, ChartError> {
        let base_names: Vec<String> = base.into_iter().map(Into::into).collect();
        let fibre_names: Vec<String> = fibre.into_iter().map(Into::into).collect();
        if base_names.is_empty() || fibre_names.is_empty() {
            return Err(ChartError::Empty);
        }
        if base_names.len() > 64 || fibre_names.len() > 64 {
            return Err(ChartError::TooLarge);
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in base_names.iter().chain(fibre_names.iter()) {
            if !Self::valid_name(name) {
                return Err(ChartError::BadName(name.clone()));
            }
            if !seen.insert(name.clone()) {
                return Err(ChartError::Duplicate(name.clone()));
            }
        }
        Ok(JetChart {
            base_names,
            fibre_names,
        })
    }

    fn valid_name(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric())
    }

    /// Base dimension `n + 1` (at least 1; `n = 0` is the mechanics case).
    pub fn base_dim(&self) -> usize {
        self.base_names.len()
    }

    /// The `n` in `n + 1`: the number of spatial directions.
    pub fn n(&self) -> usize {
        self.base_names.len() - 1
    }

    /// Fibre dimension `m`.
    pub fn fibre_dim(&self) -> usize {
        self.fibre_names.len()
    }

    /// Dimension of the first jet space: `(n+1) + m + m(n+1)`.
    pub fn jet_space_dim(&self) -> usize {
        self.base_dim() + self.fibre_dim() * (1 + self.base_dim())
    }

    pub fn base_names(&self) -> &[String] {
        &self.base_names
    }

    pub fn fibre_names(&self) -> &[String] {
        &self.fibre_names
    }

    /// All coordinates of jet order at most `order` (0, 1 or 2).
    pub fn coords_up_to(&self, order: u8) -> Vec<Coord> {
        let mut out = Vec::new();
        for mu in 0..self.base_dim() as u8 {
            out.push(Coord::Base(mu));
        }
        for a in 0..self.fibre_dim() as u8 {
            out.push(Coord::Fibre(a));
        }
        if order >= 1 {
            for a in 0..self.fibre_dim() as u8 {
                for mu in 0..self.base_dim() as u8 {
                    out.push(Coord::Jet(a, mu));
                }
            }
        }
        if order >= 2 {
            for a in 0..self.fibre_dim() as u8 {
                for mu in 0..self.base_dim() as u8 {
                    for nu in mu..self.base_dim() as u8 {
                        out.push(Coord::Jet2(a, mu, nu));
                    }
                }
            }
        }
        out
    }

    /// First jet coordinates `y^a_mu` in `(a, mu)` order.
    pub fn jet_coords(&self) -> Vec<Coord> {
        let mut out = Vec::new();
        for a in 0..self.fibre_dim() as u8 {
            for mu in 0..self.base_dim() as u8 {
                out.push(Coord::Jet(a, mu));
            }
        }
        out
    }

    /// Render a coordinate using the chart's names.
    pub fn coord_name(&self, c: Coord) -> String {
        match c {
            Coord::Base(mu) => self.base_names[mu as usize].clone(),
            Coord::Fibre(a) => self.fibre_names[a as usize].clone(),
            Coord::Jet(a, mu) => format!(
                "{}_{}",
                self.fibre_names[a as usize], self.base_names[mu as usize]
            ),
            Coord::Jet2(a, mu, nu) => format!(
                "{}_{}{}",
                self.fibre_names[a as usize],
                self.base_names[mu as usize],
                self.base_names[nu as usize]
            ),
        }
    }

    /// Resolve a textual name (`t`, `y1`, `y1_t`, `y1_tx`, ...) to a coordinate.
    pub fn resolve(&self, name: &str) -> Result<Coord, ChartError> {
        for (mu, b) in self.base_names.iter().enumerate() {
            if b == name {
                return Ok(Coord::Base(mu as u8));
            }
        }
        for (a, f) in self.fibre_names.iter().enumerate() {
            if f == name {
                return Ok(Coord::Fibre(a as u8));
            }
        }
        if let Some(pos) = name.rfind('_') {
            let (head, tail) = (&name[..pos], &name[pos + 1..]);
            let field = self
                .fibre_names
                .iter()
                .position(|f| f == head)
                .map(|a| a as u8);
            if let (Some(a), Some(indices)) = (field, self.parse_base_suffix(tail)) {
                match indices.as_slice() {
                    [mu] => return Ok(Coord::Jet(a, *mu)),
                    [mu, nu] => return Ok(Coord::jet2(a, *mu, *nu)),
                    _ => {}
                }
            }
        }
        Err(ChartError::Unknown(name.to_string()))
    }

    /// Split a jet suffix like `tx` into base indices by greedy longest match.
    fn parse_base_suffix(&self, tail: &str) -> Option<Vec<u8>> {
        let mut rest = tail;
        let mut out = Vec::new();
        'outer: while !rest.is_empty() {
            let mut candidates: Vec<(usize, usize)> = self
                .base_names
                .iter()
                .enumerate()
                .filter(|(_, b)| rest.starts_with(b.as_str()))
                .map(|(i, b)| (b.len(), i))
                .collect();
            candidates.sort();
            if let Some(&(len, idx)) = candidates.last() {
                out.push(idx as u8);
                rest = &rest[len..];
                if out.len() > 2 {
                    return None;
                }
                continue 'outer;
            }
            return None;
        }
        Some(out)
    }
}

impl fmt::Display for JetChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}; {})",
            self.base_names.join(", "),
            self.fibre_names.join(", ")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart2() -> JetChart {
        JetChart::new(["t", "x"], ["y1", "y2"]).unwrap()
    }

    #[test]
    fn resolves_all_orders() {
        let c = chart2();
        assert_eq!(c.resolve("t").unwrap(), Coord::Base(0));
        assert_eq!(c.resolve("y2").unwrap(), Coord::Fibre(1));
        assert_eq!(c.resolve("y1_x").unwrap(), Coord::Jet(0, 1));
        assert_eq!(c.resolve("y1_tx").unwrap(), Coord::Jet2(0, 0, 1));
        // symmetric identification of second jets
        assert_eq!(c.resolve("y1_xt").unwrap(), Coord::Jet2(0, 0, 1));
        assert!(c.resolve("z_t").is_err());
    }

    #[test]
    fn rejects_duplicates_and_bad_names() {
        assert!(JetChart::new(["t", "t"], ["y"]).is_err());
        assert!(JetChart::new(["t"], ["y_1"]).is_err());
        assert!(JetChart::new(["t"], ["t"]).is_err());
    }

    #[test]
    fn names_round_trip() {
        let c = chart2();
        for coord in c.coords_up_to(2) {
            assert_eq!(c.resolve(&c.coord_name(coord)).unwrap(), coord);
        }
    }

    #[test]
    fn mechanics_chart_is_legal() {
        let c = JetChart::new(["t"], ["x", "y", "z"]).unwrap();
        assert_eq!(c.n(), 0);
        assert_eq!(c.jet_space_dim(), 1 + 3 + 3);
    }
}
