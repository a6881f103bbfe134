//! Vertical symmetry actions, covariant and nonholonomic momentum maps,
//! and machine verification of the conservation and balance identities.
//!
//! "Reduction modulo the field equations" is exact linear algebra over the
//! expression coefficients: the residual and the defining conditions of a
//! solution connection are affine in the opaque connection and multiplier
//! symbols, so span membership over the rational-function field decides the
//! identity. Randomized admissible samples corroborate every verdict.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::chart::{Coord, JetChart};
use crate::expr::poly::Rat;
use crate::expr::{ExprError, ScalarExpr, Symbol, Value};
use crate::forms::{
    base_volume, fn_bracket, gamma_param_name, prolong, BasisVector, Connection, DiffForm,
    FormsError, VectorField,
};
use crate::linalg;
use crate::nonholonomic::{
    lambda_param_name, solution_connection, ConstraintSet, NhError,
};
use crate::variational::{gamma_slots, solve_ddw, DdwSolutionSet, Lagrangian, VariationalError};

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("generator `{0}` must be vertical on Y with order-0 coefficients")]
    NotVertical(String),
    #[error("structure constants do not match the generator brackets at (i, j) = ({0}, {1})")]
    StructureMismatch(usize, usize),
    #[error("section coefficient {0} depends on jet coordinates; prolonged lift undefined")]
    SectionOrder(usize),
    #[error("section has {got} coefficients but the action has {expected} generators")]
    SectionArity { expected: usize, got: usize },
    #[error("the two lift interpretations contract differently against the Cartan form")]
    LiftDisagreement,
    #[error("admissible fibre dimension is not constant across samples ({expected} vs {got})")]
    FiberDimensionJump { expected: usize, got: usize },
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Nonholonomic(#[from] NhError),
}

/// A basis of infinitesimal generators of a vertical action on `Y`.
#[derive(Clone, Debug)]
pub struct InfinitesimalAction {
    chart: JetChart,
    generators: Vec<(String, VectorField)>,
}

impl InfinitesimalAction {
    /// Validate verticality and, when given, the structure constants
    /// `[xi_i, xi_j] = c^k_(ij) xi_k`.
    pub fn new(
        chart: JetChart,
        generators: Vec<(String, VectorField)>,
        structure: Option<&[Vec<Vec<Rat>>]>,
    ) -> Result<InfinitesimalAction, SymmetryError> {
        for (name, gen) in &generators {
            for (b, c) in gen.components() {
                let vertical = matches!(b, BasisVector::Dy(_));
                if !vertical || c.max_jet_order() > 0 {
                    return Err(SymmetryError::NotVertical(name.clone()));
                }
            }
        }
        if let Some(consts) = structure {
            for (i, (_, gi)) in generators.iter().enumerate() {
                for (j, (_, gj)) in generators.iter().enumerate() {
                    let mut expected = VectorField::zero();
                    for (k, (_, gk)) in generators.iter().enumerate() {
                        expected =
                            expected.add(&gk.scale(&ScalarExpr::rational(consts[i][j][k].clone())));
                    }
                    if gi.lie_bracket(gj) != expected {
                        return Err(SymmetryError::StructureMismatch(i, j));
                    }
                }
            }
        }
        Ok(InfinitesimalAction { chart, generators })
    }

    pub fn chart(&self) -> &JetChart {
        &self.chart
    }

    pub fn generators(&self) -> &[(String, VectorField)] {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.generators.len()
    }
}

/// One component of a momentum map: the n-form paired with its generator.
#[derive(Clone, Debug)]
pub struct MomentumComponent {
    pub form: DiffForm,
    pub generator: VectorField,
}

/// `J_xi = i_(xi^(1)) Theta_L` for a vertical order-0 generator.
pub fn momentum_component(
    l: &Lagrangian,
    xi: &VectorField,
) -> Result<MomentumComponent, SymmetryError> {
    let lifted = prolong(l.chart(), xi)?;
    let form = lifted.contract(&l.cartan_form())?;
    Ok(MomentumComponent {
        form,
        generator: xi.clone(),
    })
}

/// Per-generator invariance findings.
#[derive(Clone, Debug)]
pub struct GeneratorInvariance {
    pub name: String,
    /// `xi^(1)(L)`; zero iff the Lagrangian is invariant.
    pub lagrangian_residual: ScalarExpr,
    /// Whether `L_(xi^(1)) Theta_L = 0` structurally.
    pub cartan_invariant: bool,
    /// `xi^(1)(phi^alpha)` restricted to the submanifold, one per constraint.
    pub constraint_residuals: Vec<ScalarExpr>,
}

impl GeneratorInvariance {
    pub fn passed(&self) -> bool {
        self.lagrangian_residual.is_zero()
            && self.cartan_invariant
            && self.constraint_residuals.iter().all(ScalarExpr::is_zero)
    }
}

/// Check invariance of the Lagrangian, the Cartan form, and the constraint
/// submanifold under every generator.
pub fn check_invariance(
    l: &Lagrangian,
    c: &ConstraintSet,
    action: &InfinitesimalAction,
) -> Result<Vec<GeneratorInvariance>, SymmetryError> {
    let mut out = Vec::new();
    let theta = l.cartan_form();
    for (name, gen) in action.generators() {
        let lifted = prolong(l.chart(), gen)?;
        let lagrangian_residual = lifted.apply(l.density());
        let cartan_invariant = lifted.lie_derive(&theta).is_zero();
        let mut constraint_residuals = Vec::new();
        for phi in c.phis() {
            constraint_residuals.push(c.restrict(&lifted.apply(phi))?);
        }
        out.push(GeneratorInvariance {
            name: name.clone(),
            lagrangian_residual,
            cartan_invariant,
            constraint_residuals,
        });
    }
    Ok(out)
}

/// Basis of the fibre of admissible algebra elements at a point of the
/// constraint submanifold: all coefficient vectors `c` with
/// `sum_i c_i i_(xi_i^(1)) Phi^alpha = 0` at the point.
pub fn g_e_fiber(
    point: &BTreeMap<Symbol, Value>,
    action: &InfinitesimalAction,
    c: &ConstraintSet,
) -> Result<Vec<Vec<Rat>>, SymmetryError> {
    let g = action.dim();
    if c.k() == 0 {
        // whole algebra
        return Ok((0..g)
            .map(|i| {
                (0..g)
                    .map(|j| {
                        if i == j {
                            Rat::from_integer(1.into())
                        } else {
                            Rat::from_integer(0.into())
                        }
                    })
                    .collect()
            })
            .collect());
    }
    // rows indexed by (constraint form, covector monomial), columns by
    // generator
    let mut per_gen = Vec::with_capacity(g);
    for (_, gen) in action.generators() {
        let lifted = prolong(action.chart(), gen)?;
        let mut rows = Vec::new();
        for phi_form in c.forms() {
            let contracted = lifted.contract(phi_form)?;
            rows.push(contracted.eval_exact(point)?);
        }
        per_gen.push(rows);
    }
    let mut columns: Vec<Vec<ScalarExpr>> = Vec::new();
    let mut monomials: Vec<(usize, Vec<crate::forms::Covector>)> = Vec::new();
    for alpha in 0..c.k() {
        let mut monos = std::collections::BTreeSet::new();
        for rows in &per_gen {
            monos.extend(rows[alpha].keys().cloned());
        }
        for m in monos {
            monomials.push((alpha, m));
        }
    }
    for (alpha, m) in &monomials {
        let row: Vec<ScalarExpr> = per_gen
            .iter()
            .map(|rows| {
                rows[*alpha]
                    .get(m)
                    .map(|r| ScalarExpr::rational(r.clone()))
                    .unwrap_or_else(ScalarExpr::zero)
            })
            .collect();
        columns.push(row);
    }
    let rhs = vec![ScalarExpr::zero(); columns.len()];
    let sol = linalg::solve(&columns, &rhs, &mut linalg::structural_zero)
        .expect("homogeneous system is consistent");
    Ok(sol
        .nullspace
        .into_iter()
        .map(|v| {
            v.into_iter()
                .map(|e| e.as_rational().expect("rational entries"))
                .collect()
        })
        .collect())
}

/// Probe the bundle-structure assumption on the admissible subalgebra:
/// the fibre dimension must be constant across sampled points of the
/// submanifold. Returns the common dimension.
pub fn fiber_dimension_probe(
    action: &InfinitesimalAction,
    c: &ConstraintSet,
    rng: &mut impl Rng,
    samples: usize,
) -> Result<usize, SymmetryError> {
    if c.k() == 0 {
        return Ok(action.dim());
    }
    let mut dim = None;
    for _ in 0..samples {
        let point = c.sample_on_c(rng)?;
        let basis = g_e_fiber(&point, action, c)?;
        match dim {
            None => dim = Some(basis.len()),
            Some(d) if d == basis.len() => {}
            Some(d) => {
                return Err(SymmetryError::FiberDimensionJump {
                    expected: d,
                    got: basis.len(),
                })
            }
        }
    }
    Ok(dim.unwrap_or(action.dim()))
}

/// Which reading of the induced vector field a section uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftKind {
    /// First prolongation of the induced `Y`-field (default; jet
    /// components included).
    Prolonged,
    /// Pointwise combination of the prolonged generators (no extra jet
    /// terms).
    Verbatim,
}

/// A section of the admissible-symmetry bundle: coefficients over the
/// generator basis plus both induced vector fields.
#[derive(Clone, Debug)]
pub struct GESection {
    pub name: String,
    pub coeffs: Vec<ScalarExpr>,
    /// `prolong(sum_i c_i xi_i)`; absent when a coefficient depends on jets.
    pub prolonged: Option<VectorField>,
    /// `sum_i c_i xi_i^(1)`.
    pub verbatim: VectorField,
}

/// Build the two lift interpretations of a section from its coefficients.
pub fn section_lift(
    action: &InfinitesimalAction,
    name: &str,
    coeffs: Vec<ScalarExpr>,
) -> Result<GESection, SymmetryError> {
    if coeffs.len() != action.dim() {
        return Err(SymmetryError::SectionArity {
            expected: action.dim(),
            got: coeffs.len(),
        });
    }
    let chart = action.chart();
    let mut on_y = VectorField::zero();
    let mut verbatim = VectorField::zero();
    let mut jets_in_coeffs = None;
    for (i, ((_, gen), coeff)) in action.generators().iter().zip(&coeffs).enumerate() {
        if coeff.max_jet_order() > 0 {
            jets_in_coeffs = Some(i);
        }
        on_y = on_y.add(&gen.scale(coeff));
        verbatim = verbatim.add(&prolong(chart, gen)?.scale(coeff));
    }
    let prolonged = match jets_in_coeffs {
        Some(_) => None,
        None => Some(prolong(chart, &on_y)?),
    };
    Ok(GESection {
        name: name.to_string(),
        coeffs,
        prolonged,
        verbatim,
    })
}

impl GESection {
    pub fn lift(&self, kind: LiftKind) -> Option<&VectorField> {
        match kind {
            LiftKind::Prolonged => self.prolonged.as_ref(),
            LiftKind::Verbatim => Some(&self.verbatim),
        }
    }
}

/// Verify the defining property of a section at sampled points of the
/// submanifold: its fibre coefficients annihilate every constraint form.
pub fn validate_section(
    section: &GESection,
    _action: &InfinitesimalAction,
    c: &ConstraintSet,
    rng: &mut impl Rng,
    points: usize,
) -> Result<bool, SymmetryError> {
    if c.k() == 0 {
        return Ok(true);
    }
    for _ in 0..points {
        let point = c.sample_on_c(rng)?;
        for phi_form in c.forms() {
            let contracted = section.verbatim.contract(phi_form)?;
            let values = contracted.eval_exact(&point)?;
            if !values.is_empty() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `J^nh = i_(xi~) Theta_L`. The prolonged and verbatim lifts contract
/// identically against the Cartan form; the equality is asserted.
pub fn nh_momentum(
    l: &Lagrangian,
    section: &GESection,
) -> Result<MomentumComponent, SymmetryError> {
    let theta = l.cartan_form();
    let verbatim_form = section.verbatim.contract(&theta)?;
    if let Some(prolonged) = &section.prolonged {
        let prolonged_form = prolonged.contract(&theta)?;
        if prolonged_form != verbatim_form {
            return Err(SymmetryError::LiftDisagreement);
        }
    }
    Ok(MomentumComponent {
        form: verbatim_form,
        generator: section.verbatim.clone(),
    })
}

/// Outcome of reducing a residual form modulo solution conditions.
#[derive(Clone, Debug)]
pub struct ReductionVerdict {
    /// Every coefficient lies in the span of the conditions.
    pub reduced_to_zero: bool,
    /// Terms whose coefficients resisted reduction.
    pub unreduced: DiffForm,
    /// Randomized corroboration on admissible samples, when run.
    pub sampled_zero: Option<bool>,
    pub sampling_trials: usize,
    /// Set when the symbolic reduction was inapplicable (non-affine
    /// dependence) and only sampling decided.
    pub sampling_only: bool,
    pub counterexample: Option<BTreeMap<Symbol, Value>>,
}

impl ReductionVerdict {
    pub fn passed(&self) -> bool {
        if self.sampling_only {
            self.sampled_zero == Some(true)
        } else {
            self.reduced_to_zero && self.sampled_zero != Some(false)
        }
    }
}

/// Does `target` lie in the span of `conditions` with coefficients that
/// are functions of the coordinates, identically in the opaque `params`?
fn in_condition_span(
    target: &ScalarExpr,
    conditions: &[ScalarExpr],
    params: &[String],
) -> bool {
    // rows: the constant part and one row per parameter
    let mut rows = Vec::with_capacity(params.len() + 1);
    let zero_map: BTreeMap<Symbol, ScalarExpr> = params
        .iter()
        .map(|p| (Symbol::Param(p.clone()), ScalarExpr::zero()))
        .collect();
    let consts: Vec<ScalarExpr> = conditions
        .iter()
        .map(|c| c.substitute(&zero_map).expect("affine"))
        .collect();
    let target_const = target.substitute(&zero_map).expect("affine");
    rows.push((consts, target_const));
    for p in params {
        let row: Vec<ScalarExpr> = conditions.iter().map(|c| c.partial_param(p)).collect();
        rows.push((row, target.partial_param(p)));
    }
    let a: Vec<Vec<ScalarExpr>> = rows.iter().map(|(r, _)| r.clone()).collect();
    let b: Vec<ScalarExpr> = rows.iter().map(|(_, t)| t.clone()).collect();
    linalg::solve(&a, &b, &mut linalg::structural_zero).is_ok()
}

fn is_affine_in(e: &ScalarExpr, params: &[String]) -> bool {
    params.iter().all(|p| {
        let d = e.partial_param(p);
        params.iter().all(|q| d.partial_param(q).is_zero())
    })
}

/// Reduce each coefficient of `residual` modulo the conditions; exact
/// linear algebra, never heuristic rewriting.
fn reduce_form(
    residual: &DiffForm,
    conditions: &[ScalarExpr],
    params: &[String],
) -> (bool, DiffForm, bool) {
    let mut unreduced = DiffForm::zero(residual.degree());
    let mut affine = true;
    for (mono, coeff) in residual.terms() {
        if !is_affine_in(coeff, params)
            || conditions.iter().any(|c| !is_affine_in(c, params))
        {
            affine = false;
            unreduced.add_term(mono.clone(), coeff.clone());
            continue;
        }
        if !in_condition_span(coeff, conditions, params) {
            unreduced.add_term(mono.clone(), coeff.clone());
        }
    }
    (unreduced.is_zero(), unreduced, affine)
}

/// Covariant Noether check: `d_h J_xi` with fully symbolic semi-holonomic
/// coefficients reduces to zero modulo the trace equations, corroborated on
/// randomized admissible samples.
pub fn noether_residual(
    l: &Lagrangian,
    xi: &VectorField,
    ddw: &DdwSolutionSet,
    rng: &mut impl Rng,
    trials: usize,
) -> Result<ReductionVerdict, SymmetryError> {
    let chart = l.chart().clone();
    let j = momentum_component(l, xi)?;
    let h = Connection::symbolic(&chart);
    let residual = h.d_h(&j.form);
    let params: Vec<String> = gamma_slots(&chart)
        .into_iter()
        .map(|(a, mu, nu)| gamma_param_name(&chart, a, mu, nu))
        .collect();
    let (reduced_to_zero, unreduced, affine) = reduce_form(&residual, &ddw.trace, &params);

    // randomized corroboration: residual coefficients vanish exactly at
    // admissible (point, coefficient) samples
    let mut sampled_zero = true;
    let mut counterexample = None;
    let mut done = 0;
    let mut attempts = 0;
    while done < trials && attempts < 20 * trials.max(1) {
        attempts += 1;
        let point: BTreeMap<Symbol, Value> = chart
            .coords_up_to(1)
            .into_iter()
            .map(|c| {
                (
                    Symbol::Coord(c),
                    Value::rat(rng.random_range(-9..=9), rng.random_range(1..=4)),
                )
            })
            .collect();
        let Some(gamma) = ddw.sample_gamma(rng, &point) else {
            continue;
        };
        let mut full = point.clone();
        full.extend(DdwSolutionSet::gamma_bindings(&gamma, &chart));
        let mut ok = true;
        let mut pole = false;
        for (_, coeff) in residual.terms() {
            match coeff.eval_map(&full) {
                Ok(v) => {
                    if !v.is_zero() {
                        ok = false;
                    }
                }
                Err(_) => pole = true,
            }
        }
        if pole {
            continue; // the sample hit a pole of a coefficient; redraw
        }
        done += 1;
        if !ok {
            sampled_zero = false;
            counterexample = Some(full);
            break;
        }
    }
    Ok(ReductionVerdict {
        reduced_to_zero,
        unreduced,
        sampled_zero: Some(sampled_zero && done > 0),
        sampling_trials: done,
        sampling_only: !affine,
        counterexample,
    })
}

/// Shortcut building the solution set internally.
pub fn noether_residual_auto(
    l: &Lagrangian,
    xi: &VectorField,
    rng: &mut impl Rng,
    trials: usize,
) -> Result<ReductionVerdict, SymmetryError> {
    let ddw = solve_ddw(l, None)?;
    noether_residual(l, xi, &ddw, rng, trials)
}

/// The nonholonomic momentum equation residual
/// `d_h J^nh - L_(xi~)(L mu)`, restricted to the submanifold and reduced
/// modulo the constrained solution conditions (ideal membership with
/// multipliers plus tangency), then corroborated on admissible samples.
pub fn momentum_equation_residual(
    l: &Lagrangian,
    c: &ConstraintSet,
    section: &GESection,
    kind: LiftKind,
    rng: &mut impl Rng,
    trials: usize,
) -> Result<ReductionVerdict, SymmetryError> {
    let chart = l.chart().clone();
    let Some(lift) = section.lift(kind) else {
        return Err(SymmetryError::SectionOrder(0));
    };
    let lift = lift.clone();
    let theta = l.cartan_form();
    let jnh = lift.contract(&theta)?;
    let h = Connection::symbolic(&chart);
    let lhs = h.d_h(&jnh);
    let rhs = base_volume(&chart).scale(&lift.apply(l.density()));
    let residual = c.restrict_form(&lhs.sub(&rhs))?;

    // conditions: trace-in-ideal with multipliers, and tangency, on C
    let mut params: Vec<String> = gamma_slots(&chart)
        .into_iter()
        .map(|(a, mu, nu)| gamma_param_name(&chart, a, mu, nu))
        .collect();
    for alpha in 0..c.k() {
        for mu in 0..chart.base_dim() {
            params.push(lambda_param_name(&chart, alpha, mu));
        }
    }
    let traces = crate::variational::trace_equations(l, &h);
    let mut conditions = Vec::new();
    for (a, t) in traces.iter().enumerate() {
        let mut e = t.clone();
        for (alpha, phi) in c.phis().iter().enumerate() {
            for mu in 0..chart.base_dim() {
                let b = phi.partial(Coord::Jet(a as u8, mu as u8));
                if !b.is_zero() {
                    let lam = ScalarExpr::param(&lambda_param_name(&chart, alpha, mu));
                    e = e.sub(&lam.mul(&b));
                }
            }
        }
        conditions.push(c.restrict(&e)?);
    }
    for phi in c.phis() {
        for mu in 0..chart.base_dim() {
            conditions.push(c.restrict(&h.h_derivative(phi, mu))?);
        }
    }
    let (reduced_to_zero, unreduced, affine) = reduce_form(&residual, &conditions, &params);

    // randomized corroboration over admissible constrained samples
    let solc = solution_connection(l, c)?;
    let mut sampled_zero = true;
    let mut counterexample = None;
    let mut done = 0;
    let mut attempts = 0;
    while done < trials && attempts < 20 * trials.max(1) {
        attempts += 1;
        let Ok(point) = c.sample_on_c(rng) else { continue };
        let mut with_sig = point.clone();
        for s in &solc.free_symbols {
            with_sig.insert(
                Symbol::Param(s.clone()),
                Value::rat(rng.random_range(-9..=9), rng.random_range(1..=4)),
            );
        }
        let mut full = point.clone();
        let mut pole = false;
        'fill: {
            for (a, mu, nu) in gamma_slots(&chart) {
                match solc.connection.gamma_jet(a, mu, nu).eval_map(&with_sig) {
                    Ok(v @ Value::Rational(_)) => {
                        full.insert(
                            Symbol::Param(gamma_param_name(&chart, a, mu, nu)),
                            v,
                        );
                    }
                    _ => {
                        pole = true;
                        break 'fill;
                    }
                }
            }
            for ((alpha, mu), lam) in &solc.lambda {
                match lam.eval_map(&with_sig) {
                    Ok(v @ Value::Rational(_)) => {
                        full.insert(
                            Symbol::Param(lambda_param_name(&chart, *alpha, *mu)),
                            v,
                        );
                    }
                    _ => {
                        pole = true;
                        break 'fill;
                    }
                }
            }
        }
        if pole {
            continue;
        }
        let mut ok = true;
        let mut coeff_pole = false;
        for (_, coeff) in residual.terms() {
            match coeff.eval_map(&full) {
                Ok(v) => {
                    if !v.is_zero() {
                        ok = false;
                    }
                }
                Err(_) => coeff_pole = true,
            }
        }
        if coeff_pole {
            continue; // the sample hit a pole of a coefficient; redraw
        }
        done += 1;
        if !ok {
            sampled_zero = false;
            counterexample = Some(full);
            break;
        }
    }
    Ok(ReductionVerdict {
        reduced_to_zero,
        unreduced,
        sampled_zero: Some(sampled_zero && done > 0),
        sampling_trials: done,
        sampling_only: !affine,
        counterexample,
    })
}

/// `L_(xi~)(L mu) = xi~(L) mu` for a vertical lift; the balance-law
/// right-hand side.
pub fn balance_rhs(l: &Lagrangian, lift: &VectorField) -> DiffForm {
    base_volume(l.chart()).scale(&lift.apply(l.density()))
}

/// Lemma check used by the verification suites: a vertical prolonged
/// generator with invariant Lagrangian leaves the Cartan form invariant,
/// and its bracket with any semi-holonomic projector contracts the Cartan
/// form to zero.
pub fn cartan_bracket_vanishes(
    l: &Lagrangian,
    xi: &VectorField,
) -> Result<bool, SymmetryError> {
    let chart = l.chart();
    let lifted = prolong(chart, xi)?;
    let h = Connection::symbolic(chart).projector();
    let bracket = fn_bracket(&lifted, &h)?;
    let contracted = bracket.insert(&l.cartan_form())?;
    Ok(contracted.is_zero())
}
