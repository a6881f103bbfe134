//! Randomized structural verification suites: the projector identities of
//! the Cartan form, the bracket calculus identities, and the conservation
//! and balance laws. All checks are exact; failures carry rendered
//! counterexamples.

use rand::Rng;

use crate::chart::{Coord, JetChart};
use crate::expr::ScalarExpr;
use crate::forms::{
    base_volume, fn_bracket, prolong, BasisVector, Connection, DiffForm, VectorField,
    VectorValuedForm,
};
use crate::nonholonomic::ConstraintSet;
use crate::symmetry::{
    check_invariance, momentum_equation_residual, noether_residual, validate_section, GESection,
    InfinitesimalAction, LiftKind,
};
use crate::variational::{solve_ddw, Lagrangian};

/// Outcome of one verification suite.
#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: String,
    pub trials: usize,
    pub passed: bool,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str) -> SuiteResult {
        SuiteResult {
            name: name.to_string(),
            trials: 0,
            passed: true,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.passed = false;
        self.failures.push(msg);
    }
}

/// Sparse random polynomial of degree <= 3 in the first-order coordinates.
pub fn random_polynomial(rng: &mut impl Rng, coords: &[Coord]) -> ScalarExpr {
    let mut e = ScalarExpr::zero();
    for _ in 0..rng.random_range(1..=5) {
        let mut term = ScalarExpr::rat(rng.random_range(-6..=6), rng.random_range(1..=3));
        for _ in 0..rng.random_range(0..=3) {
            term = term.mul(&ScalarExpr::coord(coords[rng.random_range(0..coords.len())]));
        }
        e = e.add(&term);
    }
    e
}

/// Random vertical vector field on `Y` with polynomial coefficients in the
/// base and fibre coordinates.
pub fn random_vertical_field(rng: &mut impl Rng, chart: &JetChart) -> VectorField {
    let coords = chart.coords_up_to(0);
    let mut v = VectorField::zero();
    for a in 0..chart.fibre_dim() as u8 {
        if rng.random_bool(0.7) {
            v.set(BasisVector::Dy(a), random_polynomial(rng, &coords));
        }
    }
    if v.is_zero() {
        v.set(BasisVector::Dy(0), ScalarExpr::one());
    }
    v
}

fn all_basis_vectors(chart: &JetChart) -> Vec<BasisVector> {
    let mut out = Vec::new();
    for mu in 0..chart.base_dim() as u8 {
        out.push(BasisVector::Dx(mu));
    }
    for a in 0..chart.fibre_dim() as u8 {
        out.push(BasisVector::Dy(a));
        for mu in 0..chart.base_dim() as u8 {
            out.push(BasisVector::DJet(a, mu));
        }
    }
    out
}

fn random_form(rng: &mut impl Rng, chart: &JetChart, degree: usize) -> DiffForm {
    let basis = all_basis_vectors(chart);
    let coords = chart.coords_up_to(1);
    let mut f = DiffForm::zero(degree);
    for _ in 0..rng.random_range(1..=3) {
        let mono: Vec<_> = (0..degree)
            .map(|_| basis[rng.random_range(0..basis.len())].dual())
            .collect();
        f.add_term(mono, random_polynomial(rng, &coords));
    }
    f
}

fn random_vector(rng: &mut impl Rng, chart: &JetChart) -> VectorField {
    let basis = all_basis_vectors(chart);
    let coords = chart.coords_up_to(1);
    let mut v = VectorField::zero();
    for _ in 0..rng.random_range(1..=3) {
        v.set(
            basis[rng.random_range(0..basis.len())],
            random_polynomial(rng, &coords),
        );
    }
    v
}

fn random_vv_one_form(rng: &mut impl Rng, chart: &JetChart) -> VectorValuedForm {
    let basis = all_basis_vectors(chart);
    let mut terms = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        terms.push((
            random_form(rng, chart, 1),
            VectorField::basis(basis[rng.random_range(0..basis.len())]),
        ));
    }
    VectorValuedForm::from_terms(1, terms)
}

/// `i_h Theta_L = n Theta_L + L mu` for fully symbolic semi-holonomic
/// coefficients, over random polynomial Lagrangians.
pub fn cartan_projector_suite(
    chart: &JetChart,
    extra: Option<&Lagrangian>,
    rng: &mut impl Rng,
    trials: usize,
) -> SuiteResult {
    let mut result = SuiteResult::new("cartan-projector");
    let h = Connection::symbolic(chart).projector();
    let n = chart.n() as i64;
    let vol = base_volume(chart);
    let coords = chart.coords_up_to(1);
    let check = |l: &Lagrangian, result: &mut SuiteResult| {
        let theta = l.cartan_form();
        let lhs = h.insert(&theta).expect("positive degree");
        let rhs = theta.scale_int(n).add(&vol.scale(l.density()));
        if lhs != rhs {
            result.fail(format!("L = {}", l.density().render(chart)));
        }
    };
    if let Some(l) = extra {
        check(l, &mut result);
        result.trials += 1;
    }
    for _ in 0..trials {
        let l = Lagrangian::new(chart.clone(), random_polynomial(rng, &coords))
            .expect("first order by construction");
        check(&l, &mut result);
        result.trials += 1;
    }
    result
}

/// `[X^(1), h]` takes values in the jet-vertical bundle for vertical `X`
/// and symbolic semi-holonomic `h`, and contracts the Cartan form to zero.
pub fn prolonged_bracket_suite(
    chart: &JetChart,
    extra: Option<&Lagrangian>,
    rng: &mut impl Rng,
    trials: usize,
) -> SuiteResult {
    let mut result = SuiteResult::new("prolonged-bracket");
    let h = Connection::symbolic(chart).projector();
    let coords = chart.coords_up_to(1);
    for _ in 0..trials {
        let x = random_vertical_field(rng, chart);
        let x1 = match prolong(chart, &x) {
            Ok(x1) => x1,
            Err(e) => {
                result.fail(format!("prolongation failed: {e}"));
                continue;
            }
        };
        let bracket = fn_bracket(&x1, &h).expect("degree 1");
        let mut ok = true;
        for mu in 0..chart.base_dim() as u8 {
            if !bracket.component(BasisVector::Dx(mu)).is_zero() {
                ok = false;
            }
        }
        for a in 0..chart.fibre_dim() as u8 {
            if !bracket.component(BasisVector::Dy(a)).is_zero() {
                ok = false;
            }
        }
        let l = match extra {
            Some(l) if rng.random_bool(0.5) => l.clone(),
            _ => Lagrangian::new(chart.clone(), random_polynomial(rng, &coords))
                .expect("first order"),
        };
        let contracted = bracket.insert(&l.cartan_form()).expect("positive degree");
        if !contracted.is_zero() {
            ok = false;
        }
        if !ok {
            result.fail(format!("X = {}", x.render(chart)));
        }
        result.trials += 1;
    }
    result
}

/// The insertion/bracket identities of the derivation calculus:
/// `i_X i_h = i_h i_X + i_(h(X))`, `i_h L_X = L_X i_h - i_[X,h]`, and
/// `d_X d_h - d_h d_X = d_[X,h]`, on random rational polynomial data.
pub fn derivation_calculus_suite(
    chart: &JetChart,
    rng: &mut impl Rng,
    trials: usize,
) -> SuiteResult {
    let mut result = SuiteResult::new("derivation-calculus");
    let max_deg = chart.jet_space_dim().min(3);
    for _ in 0..trials {
        let x = random_vector(rng, chart);
        let h = random_vv_one_form(rng, chart);
        let deg = rng.random_range(1..=max_deg);
        let alpha = random_form(rng, chart, deg);
        let mut ok = true;

        // (1) i_X i_h a = i_h i_X a + i_(h(X)) a
        let lhs = x
            .contract(&h.insert(&alpha).expect("deg >= 1"))
            .expect("deg >= 1");
        let inner = x.contract(&alpha).expect("deg >= 1");
        let rhs1 = if inner.degree() == 0 {
            DiffForm::zero(0)
        } else {
            h.insert(&inner).expect("deg >= 1")
        };
        let rhs2 = h
            .apply_to(&x)
            .expect("degree 1")
            .contract(&alpha)
            .expect("deg >= 1");
        if lhs != rhs1.add(&rhs2) {
            ok = false;
        }

        // (2) i_h L_X a = L_X i_h a - i_[X,h] a
        let bracket = fn_bracket(&x, &h).expect("degree 1");
        let lhs = h.insert(&x.lie_derive(&alpha)).expect("deg >= 1");
        let rhs = x
            .lie_derive(&h.insert(&alpha).expect("deg >= 1"))
            .sub(&bracket.insert(&alpha).expect("deg >= 1"));
        if lhs != rhs {
            ok = false;
        }

        // derivation identity for the bracket
        let lhs = x
            .lie_derive(&h.d_derivation(&alpha))
            .sub(&h.d_derivation(&x.lie_derive(&alpha)));
        let rhs = bracket.d_derivation(&alpha);
        if lhs != rhs {
            ok = false;
        }

        if !ok {
            result.fail(format!(
                "X = {}; alpha degree {deg}",
                x.render(chart)
            ));
        }
        result.trials += 1;
    }
    result
}

/// Render a counterexample point for failure messages.
fn render_point(
    chart: &JetChart,
    point: &std::collections::BTreeMap<crate::expr::Symbol, crate::expr::Value>,
) -> String {
    let parts: Vec<String> = point
        .iter()
        .map(|(s, v)| {
            let name = match s {
                crate::expr::Symbol::Coord(c) => chart.coord_name(*c),
                crate::expr::Symbol::Param(p) => p.clone(),
            };
            let value = match v {
                crate::expr::Value::Rational(r) => ScalarExpr::rational(r.clone()).render(chart),
                crate::expr::Value::Float(f) => f.to_string(),
            };
            format!("{name} = {value}")
        })
        .collect();
    parts.join(", ")
}

/// Covariant Noether theorem per generator: invariance checks, then the
/// symbolic reduction of `d_h J` modulo the trace equations plus
/// randomized admissible sampling.
pub fn noether_suite(
    l: &Lagrangian,
    c: &ConstraintSet,
    action: &InfinitesimalAction,
    designated: Option<usize>,
    rng: &mut impl Rng,
    trials: usize,
) -> SuiteResult {
    let mut result = SuiteResult::new("noether");
    if action.generators().is_empty() {
        result.notes.push("no generators declared".to_string());
        return result;
    }
    let invariance = match check_invariance(l, c, action) {
        Ok(r) => r,
        Err(e) => {
            result.fail(format!("invariance check failed: {e}"));
            return result;
        }
    };
    // report invariance failures by generator before attempting the solve
    let mut ddw = None;
    for ((name, gen), inv) in action.generators().iter().zip(&invariance) {
        result.trials += 1;
        if !inv.lagrangian_residual.is_zero() {
            result.fail(format!(
                "generator `{name}`: xi(L) = {} (not invariant)",
                inv.lagrangian_residual.render(l.chart())
            ));
            continue;
        }
        if !inv.cartan_invariant {
            result.fail(format!("generator `{name}`: Cartan form not invariant"));
            continue;
        }
        if inv.constraint_residuals.iter().any(|r| !r.is_zero()) {
            result.fail(format!(
                "generator `{name}`: constraint submanifold not invariant"
            ));
            continue;
        }
        if ddw.is_none() {
            match solve_ddw(l, designated) {
                Ok(set) => ddw = Some(set),
                Err(e) => {
                    result.fail(format!("De Donder-Weyl solve failed: {e}"));
                    return result;
                }
            }
        }
        match noether_residual(l, gen, ddw.as_ref().unwrap(), rng, trials) {
            Ok(verdict) => {
                if !verdict.passed() {
                    let at = verdict
                        .counterexample
                        .as_ref()
                        .map(|p| format!(" (counterexample: {})", render_point(l.chart(), p)))
                        .unwrap_or_default();
                    result.fail(format!(
                        "generator `{name}`: d_h J does not reduce to zero{at}",
                    ));
                } else if verdict.sampling_only {
                    result
                        .notes
                        .push(format!("generator `{name}`: sampling-only verdict"));
                }
            }
            Err(e) => result.fail(format!("generator `{name}`: {e}")),
        }
    }
    result
}

/// The nonholonomic momentum equation per declared section. The prolonged
/// lift carries the verdict; the verbatim lift is reported as a note.
pub fn momentum_suite(
    l: &Lagrangian,
    c: &ConstraintSet,
    action: &InfinitesimalAction,
    sections: &[GESection],
    lift: LiftKind,
    rng: &mut impl Rng,
    trials: usize,
) -> SuiteResult {
    let mut result = SuiteResult::new("momentum");
    if sections.is_empty() {
        result.notes.push("no sections declared".to_string());
        return result;
    }
    match crate::symmetry::fiber_dimension_probe(action, c, rng, 25) {
        Ok(dim) => result
            .notes
            .push(format!("admissible fibre dimension {dim} (constant over 25 samples)")),
        Err(e) => result.fail(format!("fibre probe: {e}")),
    }
    for section in sections {
        result.trials += 1;
        match validate_section(section, action, c, rng, 20) {
            Ok(true) => {}
            Ok(false) => {
                result.fail(format!(
                    "section `{}`: not a section of the admissible bundle",
                    section.name
                ));
                continue;
            }
            Err(e) => {
                result.fail(format!("section `{}`: {e}", section.name));
                continue;
            }
        }
        match momentum_equation_residual(l, c, section, lift, rng, trials) {
            Ok(verdict) => {
                if !verdict.passed() {
                    let at = verdict
                        .counterexample
                        .as_ref()
                        .map(|p| format!(" (counterexample: {})", render_point(l.chart(), p)))
                        .unwrap_or_default();
                    result.fail(format!(
                        "section `{}`: momentum-equation residual not zero{at}",
                        section.name
                    ));
                } else if verdict.sampling_only {
                    result
                        .notes
                        .push(format!("section `{}`: sampling-only verdict", section.name));
                }
            }
            Err(e) => result.fail(format!("section `{}`: {e}", section.name)),
        }
        // the verbatim reading is reported, never verdict-bearing
        if lift == LiftKind::Prolonged {
            match momentum_equation_residual(l, c, section, LiftKind::Verbatim, rng, 5) {
                Ok(v) => result.notes.push(format!(
                    "section `{}`: verbatim-lift residual {}",
                    section.name,
                    if v.reduced_to_zero { "zero" } else { "nonzero" }
                )),
                Err(e) => result
                    .notes
                    .push(format!("section `{}`: verbatim lift: {e}", section.name)),
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projector_suite_across_charts() {
        let mut rng = ChaCha8Rng::seed_from_u64(211);
        for (base, fibre) in [(1usize, 1usize), (2, 1), (2, 2), (3, 1)] {
            let names = ["t", "x", "u"];
            let fnames = ["y1", "y2"];
            let chart =
                JetChart::new(names[..base].to_vec(), fnames[..fibre].to_vec()).unwrap();
            let r = cartan_projector_suite(&chart, None, &mut rng, 5);
            assert!(r.passed, "{:?}", r.failures);
        }
    }

    #[test]
    fn bracket_suite_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(223);
        let chart = JetChart::new(["t", "x"], ["y1", "y2"]).unwrap();
        let r = prolonged_bracket_suite(&chart, None, &mut rng, 5);
        assert!(r.passed, "{:?}", r.failures);
    }

    #[test]
    fn derivation_suite_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(227);
        let chart = JetChart::new(["t", "x"], ["y"]).unwrap();
        let r = derivation_calculus_suite(&chart, &mut rng, 20);
        assert!(r.passed, "{:?}", r.failures);
    }
}
