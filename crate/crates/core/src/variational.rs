//! The Cartan form, the multisymplectic form, the field equations, and the
//! structure of their solution connections.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chart::{Coord, JetChart};
use crate::expr::poly::Rat;
use crate::expr::{ExprError, ScalarExpr, Symbol, Value};
use crate::forms::{
    base_volume, contact_form, dnx, gamma_param_name, Connection, Covector, DiffForm, FormsError,
};
use crate::linalg;

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("Lagrangian density has jet order {0}, but must be first order")]
    DensityOrder(u8),
    #[error("connection is not semi-holonomic")]
    NotSemiHolonomic,
    #[error("designated Hessian block (base index {0}) is singular; pick another with `designated`")]
    SingularBlock(usize),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// A first-order Lagrangian density on a chart.
#[derive(Clone, Debug)]
pub struct Lagrangian {
    chart: JetChart,
    density: ScalarExpr,
}

/// Index of one connection coefficient `G^a_(mu nu)`: `(a, mu, nu)` where
/// `mu` is the form slot and `nu` the jet index.
pub type GammaSlot = (usize, usize, usize);

/// Per-point regularity verdict together with the symbolic determinant.
#[derive(Clone, Debug)]
pub struct RegularityVerdict {
    pub determinant: ScalarExpr,
    pub regular_at_point: bool,
    pub point: BTreeMap<Symbol, Value>,
}

impl Lagrangian {
    pub fn new(chart: JetChart, density: ScalarExpr) -> Result<Lagrangian, VariationalError> {
        let order = density.max_jet_order();
        if order > 1 {
            return Err(VariationalError::DensityOrder(order));
        }
        Ok(Lagrangian { chart, density })
    }

    pub fn chart(&self) -> &JetChart {
        &self.chart
    }

    pub fn density(&self) -> &ScalarExpr {
        &self.density
    }

    /// Conjugate momentum `p^mu_a = dL/dy^a_mu`.
    pub fn momentum(&self, a: usize, mu: usize) -> ScalarExpr {
        self.density.partial(Coord::Jet(a as u8, mu as u8))
    }

    /// The Cartan `(n+1)`-form
    /// `Theta_L = dL/dy^a_mu (dy^a - y^a_nu dx^nu) ^ d^n x_mu + L d^(n+1) x`.
    pub fn cartan_form(&self) -> DiffForm {
        let mut theta = base_volume(&self.chart).scale(&self.density);
        for a in 0..self.chart.fibre_dim() {
            let contact = contact_form(&self.chart, a);
            for mu in 0..self.chart.base_dim() {
                let p = self.momentum(a, mu);
                if p.is_zero() {
                    continue;
                }
                theta = theta.add(&contact.wedge(&dnx(&self.chart, mu)).scale(&p));
            }
        }
        theta
    }

    /// `Omega_L = -d Theta_L`; closed by construction.
    pub fn multisymplectic_form(&self) -> DiffForm {
        self.cartan_form().exterior_d().neg()
    }

    /// The `m(n+1)` square Hessian `d^2 L / dy^a_mu dy^b_nu`, rows and
    /// columns indexed by `a*(n+1) + mu`.
    pub fn hessian(&self) -> Vec<Vec<ScalarExpr>> {
        let nb = self.chart.base_dim();
        let m = self.chart.fibre_dim();
        let dim = m * nb;
        let mut h = vec![vec![ScalarExpr::zero(); dim]; dim];
        for a in 0..m {
            for mu in 0..nb {
                let p = self.momentum(a, mu);
                for b in 0..m {
                    for nu in 0..nb {
                        h[a * nb + mu][b * nb + nu] = p.partial(Coord::Jet(b as u8, nu as u8));
                    }
                }
            }
        }
        h
    }

    /// Block `d^2 L / dy^a_mu dy^b_mu` of the Hessian for one base index.
    pub fn hessian_block(&self, mu: usize) -> Vec<Vec<ScalarExpr>> {
        let m = self.chart.fibre_dim();
        let mut h = vec![vec![ScalarExpr::zero(); m]; m];
        for a in 0..m {
            let p = self.momentum(a, mu);
            for b in 0..m {
                h[a][b] = p.partial(Coord::Jet(b as u8, mu as u8));
            }
        }
        h
    }

    /// Invertibility of the full Hessian: symbolic determinant first, then
    /// the verdict at the supplied rational test point. A singular point is
    /// reported, not raised.
    pub fn regularity(&self, point: &BTreeMap<Symbol, Value>) -> RegularityVerdict {
        let determinant = linalg::det(&self.hessian(), &mut linalg::structural_zero);
        let regular_at_point = match determinant.eval_map(point) {
            Ok(v) => !v.is_zero(),
            Err(_) => false,
        };
        RegularityVerdict {
            determinant,
            regular_at_point,
            point: point.clone(),
        }
    }

    /// Euler–Lagrange residuals
    /// `R_a = D_mu(dL/dy^a_mu) - dL/dy^a`, of jet order <= 2.
    pub fn euler_lagrange(&self) -> Vec<ScalarExpr> {
        (0..self.chart.fibre_dim())
            .map(|a| {
                let mut r = self.density.partial(Coord::Fibre(a as u8)).neg();
                for mu in 0..self.chart.base_dim() {
                    let p = self.momentum(a, mu);
                    r = r.add(
                        &p.total_derivative(&self.chart, mu)
                            .expect("momenta are first order"),
                    );
                }
                r
            })
            .collect()
    }
}

/// De Donder–Weyl residual `i_h Omega_L - n Omega_L` for a semi-holonomic
/// connection.
pub fn ddw_residual(h: &Connection, l: &Lagrangian) -> Result<DiffForm, VariationalError> {
    if !h.is_semi_holonomic() {
        return Err(VariationalError::NotSemiHolonomic);
    }
    let omega = l.multisymplectic_form();
    let inserted = h.projector().insert(&omega)?;
    Ok(inserted.sub(&omega.scale_int(l.chart().n() as i64)))
}

/// The `m` trace equations of the De Donder–Weyl residual for a
/// semi-holonomic connection: `T_a = H_mu(p^mu_a) - dL/dy^a`, affine in the
/// connection coefficients. The residual form is `sum_a T_a dy^a ^ mu`.
pub fn trace_equations(l: &Lagrangian, h: &Connection) -> Vec<ScalarExpr> {
    (0..l.chart().fibre_dim())
        .map(|a| {
            let mut t = l.density().partial(Coord::Fibre(a as u8)).neg();
            for mu in 0..l.chart().base_dim() {
                t = t.add(&h.h_derivative(&l.momentum(a, mu), mu));
            }
            t
        })
        .collect()
}

/// Solution structure of the De Donder–Weyl equation: the trace equations,
/// one particular solution for the `G^a_(mu nu)`, and a basis of the
/// homogeneous freedom.
#[derive(Clone, Debug)]
pub struct DdwSolutionSet {
    chart: JetChart,
    pub trace: Vec<ScalarExpr>,
    pub particular: BTreeMap<GammaSlot, ScalarExpr>,
    pub null_basis: Vec<BTreeMap<GammaSlot, ScalarExpr>>,
    pub designated_base: usize,
}

/// All coefficient slots `(a, mu, nu)` in deterministic order.
pub fn gamma_slots(chart: &JetChart) -> Vec<GammaSlot> {
    let mut out = Vec::new();
    for a in 0..chart.fibre_dim() {
        for mu in 0..chart.base_dim() {
            for nu in 0..chart.base_dim() {
                out.push((a, mu, nu));
            }
        }
    }
    out
}

/// Solve the De Donder–Weyl equation for the designated coefficients
/// `G^a_(NN)` (last base index twice by default, overridable).
pub fn solve_ddw(
    l: &Lagrangian,
    designated_base: Option<usize>,
) -> Result<DdwSolutionSet, VariationalError> {
    let chart = l.chart().clone();
    let designated = designated_base.unwrap_or(chart.base_dim() - 1);
    let symbolic = Connection::symbolic(&chart);
    let trace = trace_equations(l, &symbolic);
    if trace.iter().all(ScalarExpr::is_zero) {
        // null Lagrangian: every coefficient assignment is a solution
        return Ok(DdwSolutionSet::full_freedom(&chart, trace));
    }
    let slots = gamma_slots(&chart);
    let m = chart.fibre_dim();

    // affine structure: T_a = const_a + sum_s coeff[a][s] * G_s
    let zero_gamma: BTreeMap<Symbol, ScalarExpr> = slots
        .iter()
        .map(|&(a, mu, nu)| {
            (
                Symbol::Param(gamma_param_name(&chart, a, mu, nu)),
                ScalarExpr::zero(),
            )
        })
        .collect();
    let consts: Vec<ScalarExpr> = trace
        .iter()
        .map(|t| t.substitute(&zero_gamma).expect("affine substitution"))
        .collect();
    let coeff: Vec<Vec<ScalarExpr>> = trace
        .iter()
        .map(|t| {
            slots
                .iter()
                .map(|&(a, mu, nu)| t.partial_param(&gamma_param_name(&chart, a, mu, nu)))
                .collect()
        })
        .collect();

    // designated block W[a][b] = coefficient of G^b_(NN) in T_a
    let designated_slots: Vec<GammaSlot> =
        (0..m).map(|b| (b, designated, designated)).collect();
    let block: Vec<Vec<ScalarExpr>> = (0..m)
        .map(|a| {
            designated_slots
                .iter()
                .map(|s| coeff[a][slot_index(&slots, s)].clone())
                .collect()
        })
        .collect();

    let solve_block = |rhs: &[ScalarExpr]| -> Result<Vec<ScalarExpr>, VariationalError> {
        let sol = linalg::solve(&block, rhs, &mut linalg::structural_zero)
            .map_err(|_| VariationalError::SingularBlock(designated))?;
        if sol.pivot_cols.len() < m {
            return Err(VariationalError::SingularBlock(designated));
        }
        Ok(sol.particular)
    };

    // particular solution: all free slots zero
    let rhs: Vec<ScalarExpr> = consts.iter().map(ScalarExpr::neg).collect();
    let part = solve_block(&rhs)?;
    let mut particular = BTreeMap::new();
    for (s, v) in designated_slots.iter().zip(part) {
        particular.insert(*s, v);
    }
    for s in &slots {
        particular.entry(*s).or_insert_with(ScalarExpr::zero);
    }

    // homogeneous freedom: one basis member per non-designated slot
    let mut null_basis = Vec::new();
    for (si, s) in slots.iter().enumerate() {
        if designated_slots.contains(s) {
            continue;
        }
        let rhs: Vec<ScalarExpr> = (0..m).map(|a| coeff[a][si].neg()).collect();
        let corr = solve_block(&rhs)?;
        let mut v: BTreeMap<GammaSlot, ScalarExpr> =
            slots.iter().map(|&t| (t, ScalarExpr::zero())).collect();
        v.insert(*s, ScalarExpr::one());
        for (d, c) in designated_slots.iter().zip(corr) {
            v.insert(*d, v[d].add(&c));
        }
        null_basis.push(v);
    }

    Ok(DdwSolutionSet {
        chart,
        trace,
        particular,
        null_basis,
        designated_base: designated,
    })
}

fn slot_index(slots: &[GammaSlot], s: &GammaSlot) -> usize {
    slots.iter().position(|t| t == s).expect("valid slot")
}

impl DdwSolutionSet {
    pub fn chart(&self) -> &JetChart {
        &self.chart
    }

    /// The solution set of a null Lagrangian (identically zero traces):
    /// every coefficient assignment is admissible.
    pub fn full_freedom(chart: &JetChart, trace: Vec<ScalarExpr>) -> DdwSolutionSet {
        let slots = gamma_slots(chart);
        let particular: BTreeMap<GammaSlot, ScalarExpr> = slots
            .iter()
            .map(|&s| (s, ScalarExpr::zero()))
            .collect();
        let null_basis = slots
            .iter()
            .map(|&s| {
                let mut v = particular.clone();
                v.insert(s, ScalarExpr::one());
                v
            })
            .collect();
        DdwSolutionSet {
            chart: chart.clone(),
            trace,
            particular,
            null_basis,
            designated_base: chart.base_dim() - 1,
        }
    }

    /// A symbolic member: particular plus the weighted homogeneous basis.
    pub fn member(&self, weights: &[ScalarExpr]) -> Connection {
        assert_eq!(weights.len(), self.null_basis.len());
        let nb = self.chart.base_dim();
        let m = self.chart.fibre_dim();
        let mut gamma = vec![vec![vec![ScalarExpr::zero(); nb]; nb]; m];
        for &(a, mu, nu) in self.particular.keys() {
            let mut v = self.particular[&(a, mu, nu)].clone();
            for (w, basis) in weights.iter().zip(&self.null_basis) {
                v = v.add(&w.mul(&basis[&(a, mu, nu)]));
            }
            gamma[a][mu][nu] = v;
        }
        Connection::semi_holonomic(self.chart.clone(), gamma)
    }

    /// Draw an admissible numeric coefficient assignment at a rational
    /// point: random rational weights for the homogeneous freedom, the
    /// designated block evaluated exactly. `None` if the member has a pole
    /// at the point.
    pub fn sample_gamma(
        &self,
        rng: &mut impl rand::Rng,
        point: &BTreeMap<Symbol, Value>,
    ) -> Option<BTreeMap<GammaSlot, Rat>> {
        let weights: Vec<Rat> = (0..self.null_basis.len())
            .map(|_| {
                Rat::new(
                    rng.random_range(-9..=9i64).into(),
                    rng.random_range(1..=4i64).into(),
                )
            })
            .collect();
        let mut out = BTreeMap::new();
        for (&slot, base) in &self.particular {
            let mut v = match base.eval_map(point).ok()? {
                Value::Rational(r) => r,
                Value::Float(_) => return None,
            };
            for (w, basis) in weights.iter().zip(&self.null_basis) {
                match basis[&slot].eval_map(point).ok()? {
                    Value::Rational(r) => v += w * r,
                    Value::Float(_) => return None,
                }
            }
            out.insert(slot, v);
        }
        Some(out)
    }

    /// Bindings mapping the symbolic coefficient names to sampled values.
    pub fn gamma_bindings(values: &BTreeMap<GammaSlot, Rat>, chart: &JetChart) -> BTreeMap<Symbol, Value> {
        values
            .iter()
            .map(|(&(a, mu, nu), v)| {
                (
                    Symbol::Param(gamma_param_name(chart, a, mu, nu)),
                    Value::Rational(v.clone()),
                )
            })
            .collect()
    }
}

/// The De Donder–Weyl residual recomposed from the trace equations:
/// `sum_a T_a dy^a ^ mu`. Used as the independent cross-check of
/// [`ddw_residual`].
pub fn residual_from_traces(l: &Lagrangian, h: &Connection) -> DiffForm {
    let chart = l.chart();
    let vol = base_volume(chart);
    let mut out = DiffForm::zero(chart.base_dim() + 1);
    for (a, t) in trace_equations(l, h).into_iter().enumerate() {
        out = out.add(&DiffForm::covector(Covector::Dy(a as u8)).wedge(&vol).scale(&t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::{parse_expr, ParseCtx};
    use crate::forms::{BasisVector, VectorField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chart_wave() -> JetChart {
        JetChart::new(["t", "x"], ["y"]).unwrap()
    }

    fn parse_on(chart: &JetChart, src: &str) -> ScalarExpr {
        let ctx = ParseCtx {
            chart,
            params: &[],
            allow_free_params: false,
        };
        parse_expr(src, &ctx).unwrap()
    }

    fn wave() -> Lagrangian {
        let chart = chart_wave();
        let l = parse_on(&chart, "(y_t^2 - y_x^2)/2");
        Lagrangian::new(chart, l).unwrap()
    }

    fn free_particle() -> Lagrangian {
        let chart = JetChart::new(["t"], ["x"]).unwrap();
        let l = parse_on(&chart, "x_t^2/2");
        Lagrangian::new(chart, l).unwrap()
    }

    #[test]
    fn zero_lagrangian_gives_zero_forms() {
        let chart = chart_wave();
        let l = Lagrangian::new(chart, ScalarExpr::zero()).unwrap();
        assert!(l.cartan_form().is_zero());
        assert!(l.multisymplectic_form().is_zero());
    }

    #[test]
    fn cartan_form_of_wave() {
        let l = wave();
        let chart = l.chart().clone();
        // Theta = y_t theta^dx + y_x theta^dt + L dt^dx
        let theta_c = contact_form(&chart, 0);
        let dt = DiffForm::covector(Covector::Dx(0));
        let dx = DiffForm::covector(Covector::Dx(1));
        let expected = theta_c
            .wedge(&dx)
            .scale(&parse_on(&chart, "y_t"))
            .add(&theta_c.wedge(&dt).scale(&parse_on(&chart, "y_x")))
            .add(&dt.wedge(&dx).scale(l.density()));
        assert_eq!(l.cartan_form(), expected);
    }

    #[test]
    fn mechanics_cartan_and_multisymplectic() {
        let l = free_particle();
        let chart = l.chart().clone();
        // Theta = x_t dx - x_t^2/2 dt
        let dt = DiffForm::covector(Covector::Dx(0));
        let dxf = DiffForm::covector(Covector::Dy(0));
        let expected = dxf
            .scale(&parse_on(&chart, "x_t"))
            .add(&dt.scale(&parse_on(&chart, "-x_t^2/2")));
        assert_eq!(l.cartan_form(), expected);
        // Omega = -dTheta = dx ^ dx_t + x_t dx_t ^ dt
        let djet = DiffForm::covector(Covector::DJet(0, 0));
        let expected_omega = dxf
            .wedge(&djet)
            .add(&djet.wedge(&dt).scale(&parse_on(&chart, "x_t")));
        assert_eq!(l.multisymplectic_form(), expected_omega);
        // closedness
        assert!(l.multisymplectic_form().exterior_d().is_zero());
    }

    #[test]
    fn hessian_and_regularity() {
        let l = wave();
        let h = l.hessian();
        assert_eq!(h[0][0], ScalarExpr::int(1));
        assert_eq!(h[1][1], ScalarExpr::int(-1));
        assert_eq!(h[0][1], ScalarExpr::zero());
        let point = BTreeMap::new();
        let verdict = l.regularity(&point);
        assert_eq!(verdict.determinant, ScalarExpr::int(-1));
        assert!(verdict.regular_at_point);

        // L = y_t is irregular
        let chart = chart_wave();
        let l = Lagrangian::new(chart.clone(), parse_on(&chart, "y_t")).unwrap();
        let verdict = l.regularity(&BTreeMap::new());
        assert!(verdict.determinant.is_zero());
        assert!(!verdict.regular_at_point);

        // three free particles: identity Hessian
        let chart = JetChart::new(["t"], ["x", "y", "z"]).unwrap();
        let l = Lagrangian::new(chart.clone(), parse_on(&chart, "(x_t^2 + y_t^2 + z_t^2)/2"))
            .unwrap();
        let h = l.hessian();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(
                    h[i][j],
                    if i == j {
                        ScalarExpr::int(1)
                    } else {
                        ScalarExpr::zero()
                    }
                );
            }
        }
    }

    #[test]
    fn euler_lagrange_examples() {
        let l = wave();
        let chart = l.chart().clone();
        let r = l.euler_lagrange();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0], parse_on(&chart, "y_tt - y_xx"));

        // L = y_t^2/2 - y^4/4 has R = y_tt + y^3
        let l2 = Lagrangian::new(chart.clone(), parse_on(&chart, "y_t^2/2 - y^4/4")).unwrap();
        assert_eq!(l2.euler_lagrange()[0], parse_on(&chart, "y_tt + y^3"));

        // constant L has zero residual
        let l3 = Lagrangian::new(chart, ScalarExpr::rat(7, 2)).unwrap();
        assert!(l3.euler_lagrange()[0].is_zero());
    }

    #[test]
    fn ddw_residual_matches_trace_recomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (base, fibre) in [(1usize, 1usize), (2, 1), (2, 2)] {
            let names = ["t", "x", "u"];
            let fnames = ["y1", "y2"];
            let chart =
                JetChart::new(names[..base].to_vec(), fnames[..fibre].to_vec()).unwrap();
            for _ in 0..6 {
                let coords = chart.coords_up_to(1);
                let density = crate::expr::tests_support::random_poly_expr(&mut rng, &coords);
                let l = Lagrangian::new(chart.clone(), density).unwrap();
                let h = Connection::symbolic(&chart);
                let lhs = ddw_residual(&h, &l).unwrap();
                let rhs = residual_from_traces(&l, &h);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn ddw_residual_wave_trace() {
        let l = wave();
        let chart = l.chart().clone();
        let h = Connection::symbolic(&chart);
        let res = ddw_residual(&h, &l).unwrap();
        // single trace: Gam[y;t,t] - Gam[y;x,x], attached to dt^dx^dy
        let g_tt = ScalarExpr::param(&gamma_param_name(&chart, 0, 0, 0));
        let g_xx = ScalarExpr::param(&gamma_param_name(&chart, 0, 1, 1));
        let expected_trace = g_tt.sub(&g_xx);
        let traces = trace_equations(&l, &h);
        assert_eq!(traces[0], expected_trace);
        assert_eq!(
            res.coefficient(&[Covector::Dx(0), Covector::Dx(1), Covector::Dy(0)]),
            expected_trace
        );

        // mechanics: free particle with a constant-velocity connection
        let l = free_particle();
        let mchart = l.chart().clone();
        let h0 = Connection::flat(&mchart);
        assert!(ddw_residual(&h0, &l).unwrap().is_zero());

        // zero Lagrangian: residual vanishes for any connection
        let l0 = Lagrangian::new(chart.clone(), ScalarExpr::zero()).unwrap();
        assert!(ddw_residual(&Connection::symbolic(&chart), &l0)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn ddw_residual_rejects_non_semi_holonomic() {
        let l = wave();
        let chart = l.chart().clone();
        let gamma_y = vec![vec![ScalarExpr::zero(), ScalarExpr::zero()]];
        let gamma_jet =
            vec![vec![vec![ScalarExpr::zero(); 2]; 2]];
        let h = Connection::general(chart, gamma_y, gamma_jet);
        assert!(matches!(
            ddw_residual(&h, &l),
            Err(VariationalError::NotSemiHolonomic)
        ));
    }

    #[test]
    fn ddw_residual_is_affine_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let l = wave();
        let chart = l.chart().clone();
        let h = Connection::symbolic(&chart);
        let res = ddw_residual(&h, &l).unwrap();
        let slots = gamma_slots(&chart);
        for _ in 0..20 {
            let point = crate::forms::tests_support::random_point(&mut rng, &chart);
            let draw = |rng: &mut ChaCha8Rng| -> BTreeMap<Symbol, Value> {
                slots
                    .iter()
                    .map(|&(a, mu, nu)| {
                        (
                            Symbol::Param(gamma_param_name(&chart, a, mu, nu)),
                            Value::rat(rng.random_range(-9..=9), rng.random_range(1..=3)),
                        )
                    })
                    .collect()
            };
            let g1 = draw(&mut rng);
            let g2 = draw(&mut rng);
            for (mono, c) in res.terms() {
                let mut p1 = point.clone();
                p1.extend(g1.clone());
                let mut p2 = point.clone();
                p2.extend(g2.clone());
                let v1 = c.eval_map(&p1).unwrap();
                let v2 = c.eval_map(&p2).unwrap();
                // midpoint evaluation equals the average
                let mut pm = point.clone();
                for (k, v) in &g1 {
                    let Value::Rational(a) = v else { panic!() };
                    let Value::Rational(b) = &g2[k] else { panic!() };
                    pm.insert(
                        k.clone(),
                        Value::Rational((a + b) / Rat::from_integer(2.into())),
                    );
                }
                let vm = c.eval_map(&pm).unwrap();
                let (Value::Rational(v1), Value::Rational(v2), Value::Rational(vm)) =
                    (v1, v2, vm)
                else {
                    panic!("rational evaluation expected for {mono:?}")
                };
                assert_eq!((v1 + v2) / Rat::from_integer(2.into()), vm);
            }
        }
    }

    #[test]
    fn solve_ddw_wave() {
        let l = wave();
        let set = solve_ddw(&l, None).unwrap();
        // particular: all coefficients zero
        assert!(set.particular.values().all(ScalarExpr::is_zero));
        // homogeneous freedom: G_tt, G_tx, G_xt free, G_xx follows G_tt
        assert_eq!(set.null_basis.len(), 3);
        let tt_member: &BTreeMap<GammaSlot, ScalarExpr> = set
            .null_basis
            .iter()
            .find(|b| b[&(0, 0, 0)].is_one())
            .unwrap();
        assert_eq!(tt_member[&(0, 1, 1)], ScalarExpr::one());

        // every member satisfies the residual equation
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..5 {
            let weights: Vec<ScalarExpr> = (0..set.null_basis.len())
                .map(|_| ScalarExpr::rat(rng.random_range(-5..=5), rng.random_range(1..=3)))
                .collect();
            let member = set.member(&weights);
            assert!(ddw_residual(&member, &l).unwrap().is_zero());
        }
    }

    #[test]
    fn solve_ddw_zero_lagrangian_has_full_freedom() {
        let chart = chart_wave();
        let l = Lagrangian::new(chart.clone(), ScalarExpr::zero()).unwrap();
        let set = solve_ddw(&l, None).unwrap();
        assert!(set.trace.iter().all(ScalarExpr::is_zero));
        // every slot is free
        assert_eq!(set.null_basis.len(), gamma_slots(&chart).len());
        assert!(ddw_residual(&set.member(&vec![ScalarExpr::one(); set.null_basis.len()]), &l)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn solve_ddw_mechanics_unique() {
        let l = free_particle();
        let set = solve_ddw(&l, None).unwrap();
        assert!(set.null_basis.is_empty());
        assert!(set.particular[&(0, 0, 0)].is_zero());
    }

    #[test]
    fn solve_ddw_rejects_singular_block() {
        let chart = chart_wave();
        let l = Lagrangian::new(chart.clone(), parse_on(&chart, "y_t^2/2")).unwrap();
        // dL/dy_x = 0 makes the (x,x) block singular
        assert!(matches!(
            solve_ddw(&l, None),
            Err(VariationalError::SingularBlock(1))
        ));
        // but the time block works
        assert!(solve_ddw(&l, Some(0)).is_ok());
    }

    #[test]
    fn members_solve_euler_lagrange_after_substitution() {
        // Substituting a symmetric member's coefficients for the second
        // jets turns the Euler–Lagrange residuals into zero.
        let l = wave();
        let set = solve_ddw(&l, None).unwrap();
        // symmetric member: tie the mixed slots together
        let mut weights = vec![ScalarExpr::zero(); set.null_basis.len()];
        let y = ScalarExpr::coord(Coord::Fibre(0));
        for (i, basis) in set.null_basis.iter().enumerate() {
            if basis[&(0, 0, 0)].is_one() {
                weights[i] = y.mul(&y); // G_tt = y^2, forces G_xx = y^2
            } else {
                weights[i] = ScalarExpr::rat(1, 3); // G_tx = G_xt = 1/3
            }
        }
        let member = set.member(&weights);
        let mut bind = BTreeMap::new();
        for a in 0..1u8 {
            for mu in 0..2u8 {
                for nu in mu..2u8 {
                    bind.insert(
                        Symbol::Coord(Coord::jet2(a, mu, nu)),
                        member.gamma_jet(a as usize, mu as usize, nu as usize).clone(),
                    );
                }
            }
        }
        for r in l.euler_lagrange() {
            assert!(r.substitute(&bind).unwrap().is_zero());
        }
    }

    #[test]
    fn lemma_trace_structure_under_vertical_contraction() {
        // i_xi (i_h Omega - n Omega) = xi^a T_a mu for vertical xi
        let l = wave();
        let chart = l.chart().clone();
        let h = Connection::symbolic(&chart);
        let res = ddw_residual(&h, &l).unwrap();
        let xi = VectorField::basis(BasisVector::Dy(0));
        let contracted = xi.contract(&res).unwrap();
        let traces = trace_equations(&l, &h);
        assert_eq!(contracted, base_volume(&chart).scale(&traces[0]));
    }
}
